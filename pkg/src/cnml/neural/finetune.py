"""Binary satisfaction classifier on top of the bi-encoder."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from .model import CnmlModel
from .optim import AdamW
from .train import embed_texts, tokens_tensor, trim
from .vocab import Vocab

log = logging.getLogger(__name__)


@dataclass
class FinetuneConfig:
    lr: float = 1e-2
    epochs: int = 200
    batch_size: int = 256
    weight_decay: float = 0.0
    freeze_encoders: bool = True
    test_fraction: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        if self.lr <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ValueError("lr > 0, epochs >= 1 and batch_size >= 1 are required")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")


def classification_metrics(pred: Sequence[int], gold: Sequence[int]) -> dict:
    tp = sum(1 for p, g in zip(pred, gold) if p and g)
    fp = sum(1 for p, g in zip(pred, gold) if p and not g)
    fn = sum(1 for p, g in zip(pred, gold) if not p and g)
    tn = sum(1 for p, g in zip(pred, gold) if not p and not g)
    n = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": (tp + tn) / n if n else 0.0, "precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn}


def pair_features(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    return torch.cat([u, v, (u - v).abs()], dim=-1)


class Probe(nn.Module):
    """Logistic regression on (u, v, |u - v|)."""

    def __init__(self, d: int):
        super().__init__()
        self.linear = nn.Linear(3 * d, 1)

    def forward(self, u, v):
        return self.linear(pair_features(u, v)).squeeze(-1)


@dataclass
class FinetuneResult:
    probe: Probe
    train_metrics: dict
    test_metrics: dict


def split_labeled(labeled: Sequence[tuple], test_fraction: float, rng: random.Random):
    """Stratified train/test split of (record, label) pairs."""
    pos = [x for x in labeled if x[1]]
    neg = [x for x in labeled if not x[1]]
    rng.shuffle(pos)
    rng.shuffle(neg)
    kp, kn = round(len(pos) * test_fraction), round(len(neg) * test_fraction)
    return pos[kp:] + neg[kn:], pos[:kp] + neg[:kn]


def _standardize(x: torch.Tensor, ref: torch.Tensor) -> torch.Tensor:
    return (x - ref.mean(0)) / ref.std(0).clamp(min=1e-6)


def finetune_classifier(model: CnmlModel, vocab: Vocab, labeled: Sequence[tuple], config: FinetuneConfig,
                        max_len: int = 256) -> FinetuneResult:
    """Train a probe on labeled (PairRecord, 0/1) pairs and report held-out metrics.

    With ``freeze_encoders`` the encoders only supply features; otherwise they
    are updated together with the probe.
    """
    config.validate()
    labels = {int(y) for _, y in labeled}
    if labels != {0, 1}:
        raise ValueError("fine-tuning needs both satisfied and violated pairs")
    rng = random.Random(config.seed)
    torch.manual_seed(config.seed)
    train_set, test_set = split_labeled(labeled, config.test_fraction, rng)
    dtype = next(model.parameters()).dtype
    probe = Probe(model.cfg.d_proj).to(dtype)

    def embed(items, grad=False):
        circuits = [r.aag_text for r, _ in items]
        specs = [r.spec_text for r, _ in items]
        if not grad:
            return (embed_texts(model.encoder_circuit, circuits, vocab, max_len),
                    embed_texts(model.encoder_spec, specs, vocab, max_len))
        ct, _ = tokens_tensor(circuits, vocab, max_len)
        st, _ = tokens_tensor(specs, vocab, max_len)
        return model.encoder_circuit(trim(ct)), model.encoder_spec(trim(st))

    y_train = torch.tensor([float(y) for _, y in train_set], dtype=dtype)
    y_test = [int(y) for _, y in test_set]
    loss_fn = nn.BCEWithLogitsLoss()

    if config.freeze_encoders:
        u_tr, v_tr = embed(train_set)
        u_te, v_te = embed(test_set)
        # per-feature standardization using training statistics only
        f_tr = pair_features(u_tr, v_tr)
        f_te = _standardize(pair_features(u_te, v_te), f_tr)
        f_tr = _standardize(f_tr, f_tr)
        opt = AdamW(probe.parameters(), lr=config.lr, weight_decay=config.weight_decay)
        for epoch in range(config.epochs):
            perm = torch.randperm(len(train_set))
            for k in range(0, len(perm), config.batch_size):
                idx = perm[k:k + config.batch_size]
                opt.zero_grad(set_to_none=True)
                loss = loss_fn(probe.linear(f_tr[idx]).squeeze(-1), y_train[idx])
                loss.backward()
                opt.step()
        with torch.no_grad():
            train_logits = probe.linear(f_tr).squeeze(-1)
            test_logits = probe.linear(f_te).squeeze(-1)
    else:
        model.train()
        params = list(probe.parameters()) + [p for p in model.parameters() if p.requires_grad]
        opt = AdamW(params, lr=config.lr, weight_decay=config.weight_decay)
        for epoch in range(config.epochs):
            perm = torch.randperm(len(train_set)).tolist()
            for k in range(0, len(perm), config.batch_size):
                chunk = [train_set[i] for i in perm[k:k + config.batch_size]]
                opt.zero_grad(set_to_none=True)
                u, v = embed(chunk, grad=True)
                loss = loss_fn(probe(u, v), y_train[perm[k:k + config.batch_size]])
                loss.backward()
                opt.step()
        with torch.no_grad():
            train_logits = probe(*embed(train_set))
            test_logits = probe(*embed(test_set))

    train_pred = (train_logits > 0).long().tolist()
    test_pred = (test_logits > 0).long().tolist()
    result = FinetuneResult(probe, classification_metrics(train_pred, [int(y) for _, y in train_set]),
                            classification_metrics(test_pred, y_test))
    log.info("probe train acc %.3f test acc %.3f", result.train_metrics["accuracy"],
             result.test_metrics["accuracy"])
    return result
