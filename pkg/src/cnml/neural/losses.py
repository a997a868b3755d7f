"""Contrastive objective and representation regularizer."""

from __future__ import annotations

import torch

EPS = 1e-12


def l2_normalize(x: torch.Tensor, eps: float = EPS) -> torch.Tensor:
    return x / torch.sqrt((x * x).sum(-1, keepdim=True) + eps)


def similarity_matrix(u: torch.Tensor, v: torch.Tensor, tau) -> torch.Tensor:
    """Cosine similarities of circuit rows ``u`` and spec rows ``v``, divided by ``tau``."""
    return l2_normalize(u) @ l2_normalize(v).T / tau


def contrastive_loss(s: torch.Tensor) -> torch.Tensor:
    """Symmetric cross-entropy with the diagonal as targets."""
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"expected a square score matrix, got {tuple(s.shape)}")
    diag = s.diagonal()
    rows = (torch.logsumexp(s, dim=1) - diag).mean()
    cols = (torch.logsumexp(s, dim=0) - diag).mean()
    return 0.5 * (rows + cols)


def _self_similarity(x: torch.Tensor) -> torch.Tensor:
    z = l2_normalize(x)
    return z @ z.T


def representation_regularizer(u: torch.Tensor, v: torch.Tensor, anchor_u: torch.Tensor,
                               anchor_v: torch.Tensor) -> torch.Tensor:
    """Mean squared drift of the in-batch cosine geometry away from the anchor
    encoders, averaged over the two modalities."""
    if u.shape != anchor_u.shape or v.shape != anchor_v.shape:
        raise ValueError("current and anchor embeddings must have matching shapes")
    du = ((_self_similarity(u) - _self_similarity(anchor_u)) ** 2).mean()
    dv = ((_self_similarity(v) - _self_similarity(anchor_v)) ** 2).mean()
    return 0.5 * (du + dv)


def total_loss(u, v, tau, lam: float = 0.0, anchor_u=None, anchor_v=None):
    """Returns (total, contrastive part, regularizer part)."""
    ce = contrastive_loss(similarity_matrix(u, v, tau))
    if lam == 0 or anchor_u is None:
        rr = torch.zeros((), dtype=ce.dtype)
        return ce, ce, rr
    rr = representation_regularizer(u, v, anchor_u, anchor_v)
    return ce + lam * rr, ce, rr
