"""Bi-encoder: one text encoder per modality, mean pooling, linear projection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn
import torch.nn.functional as F


@dataclass
class EncoderConfig:
    vocab_size: int
    mode: str = "transformer"   # or "bag"
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 256
    d_proj: int = 128


class Block(nn.Module):
    """Pre-norm self-attention block."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int):
        super().__init__()
        if d_model % n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.ln1 = nn.LayerNorm(d_model)
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.attn_out = nn.Linear(d_model, d_model)
        self.ln2 = nn.LayerNorm(d_model)
        self.ff1 = nn.Linear(d_model, d_ff)
        self.ff2 = nn.Linear(d_ff, d_model)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        h = self.n_heads
        q, k, v = self.qkv(self.ln1(x)).chunk(3, dim=-1)
        q, k, v = (z.view(b, t, h, d // h).transpose(1, 2) for z in (q, k, v))
        scores = q @ k.transpose(-2, -1) / math.sqrt(d // h)
        # finite fill keeps all-pad rows well defined
        scores = scores.masked_fill(~mask[:, None, None, :], -1e9)
        att = scores.softmax(dim=-1) @ v
        x = x + self.attn_out(att.transpose(1, 2).reshape(b, t, d))
        return x + self.ff2(F.gelu(self.ff1(self.ln2(x))))


class Encoder(nn.Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.tok_emb = nn.Embedding(cfg.vocab_size, cfg.d_model)
        if cfg.mode == "transformer":
            self.pos_emb = nn.Embedding(cfg.max_len, cfg.d_model)
            self.blocks = nn.ModuleList(Block(cfg.d_model, cfg.n_heads, cfg.d_ff) for _ in range(cfg.n_layers))
            self.ln_f = nn.LayerNorm(cfg.d_model)
        elif cfg.mode == "bag":
            self.mlp = nn.Sequential(nn.Linear(cfg.d_model, cfg.d_ff), nn.GELU(), nn.Linear(cfg.d_ff, cfg.d_model))
        else:
            raise ValueError(f"unknown encoder mode {cfg.mode!r}")
        self.proj = nn.Parameter(torch.empty(cfg.d_model, cfg.d_proj))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for name, p in self.named_parameters():
            if name == "proj":
                nn.init.normal_(p, std=self.cfg.d_model ** -0.5)
            elif name.endswith("bias"):
                nn.init.zeros_(p)
            elif "ln" in name:
                nn.init.ones_(p)
            else:
                nn.init.normal_(p, std=0.02)

    def pooled(self, tokens: torch.Tensor, pad_id: int = 0) -> torch.Tensor:
        """Mean of the final hidden states over non-pad positions."""
        mask = tokens != pad_id
        if self.cfg.mode == "transformer":
            pos = torch.arange(tokens.shape[1], device=tokens.device)
            x = self.tok_emb(tokens) + self.pos_emb(pos)[None]
            for blk in self.blocks:
                x = blk(x, mask)
            x = self.ln_f(x)
        else:
            x = self.tok_emb(tokens)
        m = mask.unsqueeze(-1).to(x.dtype)
        pooled = (x * m).sum(1) / m.sum(1).clamp(min=1.0)
        if self.cfg.mode == "bag":
            pooled = self.mlp(pooled)
        return pooled

    def forward(self, tokens: torch.Tensor, pad_id: int = 0) -> torch.Tensor:
        """Projected, unnormalized sequence embedding of shape (batch, d_proj)."""
        return self.pooled(tokens, pad_id) @ self.proj


class CnmlModel(nn.Module):
    """Specification and circuit encoders sharing nothing but the output space.

    With ``siamese=True`` a single encoder serves both modalities (baseline).
    """

    def __init__(self, cfg: EncoderConfig, tau: float = 0.07, learnable_tau: bool = False,
                 siamese: bool = False):
        super().__init__()
        if tau <= 0:
            raise ValueError("temperature must be positive")
        self.cfg = cfg
        self.siamese = siamese
        self.encoder_spec = Encoder(cfg)
        self.encoder_circuit = self.encoder_spec if siamese else Encoder(cfg)
        log_tau = torch.tensor(math.log(tau))
        if learnable_tau:
            self.log_tau = nn.Parameter(log_tau)
        else:
            self.register_buffer("log_tau", log_tau)

    @property
    def tau(self) -> torch.Tensor:
        return self.log_tau.exp()

    def encode_specs(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.encoder_spec(tokens)

    def encode_circuits(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.encoder_circuit(tokens)

    def forward(self, circuit_tokens: torch.Tensor, spec_tokens: torch.Tensor):
        return self.encode_circuits(circuit_tokens), self.encode_specs(spec_tokens)
