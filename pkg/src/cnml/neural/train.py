"""Contrastive training loop and checkpoints."""

from __future__ import annotations

import copy
import dataclasses
import io
import json
import logging
import math
import os
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from ..datagen import PairOracle, PairRecord, build_batches
from .losses import total_loss
from .model import CnmlModel, EncoderConfig
from .optim import AdamW, linear_warmup_decay
from .vocab import Vocab, tokenize

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "cnml-checkpoint"
CHECKPOINT_VERSION = 1

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.01
    warmup_steps: int = 100
    total_steps: int = 1000
    batch_size: int = 64
    grad_accum: int = 1
    lam: float = 0.25
    tau: float = 0.07
    learnable_tau: bool = False
    seed: int = 0
    precision: str = "float32"
    deterministic: bool = False
    filter_mode: str = "none"
    mode: str = "transformer"
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 128
    max_len: int = 256
    d_proj: int = 128
    siamese: bool = False
    grad_clip: float = 1.0
    log_every: int = 10

    def validate(self) -> None:
        if self.lr <= 0 or self.total_steps < 1 or self.batch_size < 2 or self.grad_accum < 1:
            raise ValueError("lr > 0, total_steps >= 1, batch_size >= 2 and grad_accum >= 1 are required")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.precision not in DTYPES:
            raise ValueError(f"precision must be one of {sorted(DTYPES)}")
        if self.warmup_steps < 0 or self.warmup_steps > self.total_steps:
            raise ValueError("warmup_steps must lie in [0, total_steps]")

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(vocab_size, self.mode, self.d_model, self.n_layers, self.n_heads, self.d_ff,
                             self.max_len, self.d_proj)


def desk_config(**overrides) -> TrainConfig:
    return dataclasses.replace(TrainConfig(), **overrides)


def paper_scale_config(**overrides) -> TrainConfig:
    """Hyperparameters of the original large-scale run (CodeBERT-sized encoders)."""
    cfg = TrainConfig(lr=2e-4, beta1=0.9, beta2=0.999, weight_decay=0.01, warmup_steps=12000,
                      total_steps=165000, batch_size=128, grad_accum=2, lam=0.25, tau=0.07, seed=580946,
                      d_model=768, n_layers=12, n_heads=12, d_ff=3072, max_len=512, d_proj=1024)
    return dataclasses.replace(cfg, **overrides)


class TrainingDiverged(RuntimeError):
    pass


def set_determinism(seed: int, deterministic: bool) -> None:
    torch.manual_seed(seed)
    if deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def tokens_tensor(texts: Sequence[str], vocab: Vocab, max_len: int) -> tuple[torch.Tensor, int]:
    rows, truncated = [], 0
    for t in texts:
        ids, cut = tokenize(t, vocab, max_len)
        rows.append(ids)
        truncated += cut
    return torch.tensor(rows, dtype=torch.long), truncated


def trim(tokens: torch.Tensor, pad_id: int = 0) -> torch.Tensor:
    """Drop trailing all-pad columns (pooling is unaffected)."""
    used = (tokens != pad_id).any(0).nonzero()
    width = int(used.max()) + 1 if len(used) else 1
    return tokens[:, :width]


def gradients(model: CnmlModel, circuit_tokens: torch.Tensor, spec_tokens: torch.Tensor, lam: float = 0.0,
              anchor: CnmlModel | None = None) -> dict[str, torch.Tensor]:
    """Reverse-mode gradients of the full objective for every named parameter."""
    model.zero_grad(set_to_none=True)
    u, v = model(circuit_tokens, spec_tokens)
    au = av = None
    if anchor is not None and lam:
        with torch.no_grad():
            au, av = anchor(circuit_tokens, spec_tokens)
    loss, _, _ = total_loss(u, v, model.tau, lam, au, av)
    if not torch.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss.item()}")
    loss.backward()
    return {n: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
            for n, p in model.named_parameters()}


@dataclass
class TrainResult:
    model: CnmlModel
    vocab: Vocab
    config: TrainConfig
    history: list[dict] = field(default_factory=list)


def build_vocab(records: Sequence[PairRecord]) -> Vocab:
    return Vocab.build([r.spec_text for r in records] + [r.aag_text for r in records])


def train(records: Sequence[PairRecord], config: TrainConfig, vocab: Vocab | None = None,
          metrics_path: str | None = None, checkpoint_path: str | None = None,
          oracle: PairOracle | None = None) -> TrainResult:
    config.validate()
    set_determinism(config.seed, config.deterministic)
    dtype = DTYPES[config.precision]
    vocab = vocab or build_vocab(records)
    model = CnmlModel(config.encoder_config(len(vocab)), config.tau, config.learnable_tau,
                      config.siamese).to(dtype)
    anchor = None
    if config.lam:
        anchor = copy.deepcopy(model).eval()
        for p in anchor.parameters():
            p.requires_grad_(False)
    opt = AdamW(model.parameters(), lr=0.0, betas=(config.beta1, config.beta2),
                weight_decay=config.weight_decay)

    circ_tok, cut_c = tokens_tensor([r.aag_text for r in records], vocab, config.max_len)
    spec_tok, cut_s = tokens_tensor([r.spec_text for r in records], vocab, config.max_len)
    if cut_c or cut_s:
        log.warning("truncated %d circuits and %d specs to max_len=%d", cut_c, cut_s, config.max_len)
    index_of = {id(r): i for i, r in enumerate(records)}
    rng = random.Random(config.seed)
    history: list[dict] = []
    metrics = open(metrics_path, "w") if metrics_path else None
    step = epoch = 0
    last_good = copy.deepcopy(model.state_dict())
    try:
        while step < config.total_steps:
            batches = [b for b in build_batches(records, config.batch_size, rng, config.filter_mode, oracle)
                       if len(b) >= 2]
            if not batches:
                raise ValueError("no batch with at least two pairs")
            for k in range(0, len(batches), config.grad_accum):
                if step >= config.total_steps:
                    break
                lr = linear_warmup_decay(step, config.lr, config.warmup_steps, config.total_steps)
                for g in opt.param_groups:
                    g["lr"] = lr
                opt.zero_grad(set_to_none=True)
                group = batches[k:k + config.grad_accum]
                totals = np.zeros(3)
                for batch in group:
                    idx = torch.tensor([index_of[id(r)] for r in batch.records])
                    ct, st = trim(circ_tok[idx]), trim(spec_tok[idx])
                    u, v = model(ct, st)
                    au = av = None
                    if anchor is not None:
                        with torch.no_grad():
                            au, av = anchor(ct, st)
                    loss, ce, rr = total_loss(u, v, model.tau, config.lam, au, av)
                    if not torch.isfinite(loss):
                        if checkpoint_path:
                            model.load_state_dict(last_good)
                            save_checkpoint(checkpoint_path, model, vocab, config)
                        raise TrainingDiverged(f"non-finite loss at step {step}")
                    (loss / len(group)).backward()
                    totals += [loss.item(), ce.item(), rr.item()]
                if config.grad_clip:
                    torch.nn.utils.clip_grad_norm_(model.parameters(), config.grad_clip)
                opt.step()
                totals /= len(group)
                rec = {"step": step, "epoch": epoch, "lr": lr, "loss": totals[0], "ce": totals[1],
                       "rr": totals[2], "batch": len(group[0])}
                history.append(rec)
                if metrics and step % config.log_every == 0:
                    metrics.write(json.dumps(rec) + "\n")
                if step % config.log_every == 0:
                    log.info("step %d loss %.4f (ce %.4f rr %.4f) lr %.2e", step, *totals, lr)
                if step % 100 == 0:
                    last_good = copy.deepcopy(model.state_dict())
                step += 1
            epoch += 1
    finally:
        if metrics:
            metrics.close()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, model, vocab, config)
    return TrainResult(model, vocab, config, history)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str, model: CnmlModel, vocab: Vocab, config: TrainConfig) -> None:
    """Versioned header, vocabulary, config and named parameter arrays in one npz."""
    state = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "vocab": list(vocab.tokens),
              "config": dataclasses.asdict(config),
              "tensors": {k: list(a.shape) for k, a in state.items()}}
    buf = io.BytesIO()
    np.savez(buf, __header__=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8), **state)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(buf.getvalue())
    os.replace(tmp, path)


def load_checkpoint(path: str) -> tuple[CnmlModel, Vocab, TrainConfig]:
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"{path} is not a checkpoint")
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        config = TrainConfig(**header["config"])
        vocab = Vocab(tuple(header["vocab"]))
        state = {k: torch.from_numpy(data[k].copy()) for k in header["tensors"]}
    model = CnmlModel(config.encoder_config(len(vocab)), config.tau, config.learnable_tau, config.siamese)
    model = model.to(DTYPES[config.precision])
    model.load_state_dict(state)
    return model, vocab, config


@torch.no_grad()
def embed_texts(encoder, texts: Sequence[str], vocab: Vocab, max_len: int, batch_size: int = 256) -> torch.Tensor:
    """Projected embeddings for ``texts`` with ``encoder`` in eval mode."""
    encoder.eval()
    out = []
    for k in range(0, len(texts), batch_size):
        tok, _ = tokens_tensor(texts[k:k + batch_size], vocab, max_len)
        out.append(encoder(trim(tok)))
    dtype = next(encoder.parameters()).dtype
    return torch.cat(out) if out else torch.zeros(0, encoder.cfg.d_proj, dtype=dtype)
