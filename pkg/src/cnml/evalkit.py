"""Retrieval evaluation, similarity baselines and embedding-space reports."""

from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import torch

from .aiger import Circuit, LabeledGraph, render_aag, to_labeled_graph
from .datagen import RetrievalSet
from .neural.losses import l2_normalize
from .neural.train import embed_texts
from .neural.vocab import Vocab, encode_text


# ---------------------------------------------------------------------------
# ranking metrics


def rank_of_positive(scores: Sequence[float], positive: int) -> int:
    """1-based rank after a stable descending sort (ties keep candidate order)."""
    s = scores[positive]
    return 1 + sum(1 for j, x in enumerate(scores) if x > s or (x == s and j < positive))


@dataclass
class RankingResult:
    ranks: list[int]
    sizes: list[int]
    mrr: float = field(init=False)
    mr: float = field(init=False)
    r1: float = field(init=False)
    r10: float = field(init=False)

    def __post_init__(self):
        if not self.ranks:
            raise ValueError("no ranks to aggregate")
        self.mrr = float(np.mean([1.0 / r for r in self.ranks]))
        self.mr = float(np.mean(self.ranks))
        self.r1 = recall_at_percent(self.ranks, self.sizes, 1)
        self.r10 = recall_at_percent(self.ranks, self.sizes, 10)

    def row(self) -> dict:
        return {"MRR": self.mrr, "MR": self.mr, "R@1%": self.r1, "R@10%": self.r10}


def recall_at_percent(ranks: Sequence[int], sizes: Sequence[int], k: float) -> float:
    hits = sum(1 for r, n in zip(ranks, sizes) if r <= math.ceil(k * n / 100))
    return hits / len(ranks)


# ---------------------------------------------------------------------------
# text and graph similarities


def levenshtein_distance(a: str, b: str) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_similarity(a: str, b: str) -> float:
    """1 - distance / longer length; two empty strings are identical."""
    if not a and not b:
        return 1.0
    return 1.0 - levenshtein_distance(a, b) / max(len(a), len(b))


def _cosine_counts(x: Counter, y: Counter) -> float:
    dot = sum(v * y.get(k, 0) for k, v in x.items())
    nx = math.sqrt(sum(v * v for v in x.values()))
    ny = math.sqrt(sum(v * v for v in y.values()))
    if nx == 0 or ny == 0:
        return 0.0
    return dot / (nx * ny)


def bag_of_keywords_similarity(a: str, b: str, vocab: Vocab) -> float:
    return _cosine_counts(Counter(encode_text(a, vocab)), Counter(encode_text(b, vocab)))


def wl_features(graphs: Sequence[LabeledGraph], h: int) -> list[Counter]:
    """Weisfeiler-Lehman subtree features with one label dictionary shared by ``graphs``."""
    table: dict = {}

    def compress(sig):
        if sig not in table:
            table[sig] = len(table)
        return table[sig]

    labels = [[compress(("init", l)) for l in g.labels] for g in graphs]
    feats = [Counter(ls) for ls in labels]
    for _ in range(h):
        new_labels = []
        for g, ls in zip(graphs, labels):
            nb = g.neighborhoods()
            new_labels.append([compress((ls[v],
                                         tuple(sorted((pol, ls[s]) for pol, s in nb[v][0])),
                                         tuple(sorted((pol, ls[d]) for pol, d in nb[v][1]))))
                               for v in range(len(ls))])
        labels = new_labels
        for f, ls in zip(feats, labels):
            f.update(ls)
    return feats


def wl_kernel_similarity(g1: LabeledGraph, g2: LabeledGraph, h: int = 3) -> float:
    f1, f2 = wl_features([g1, g2], h)
    return _cosine_counts(f1, f2)


# ---------------------------------------------------------------------------
# scorers: each maps a retrieval set to one score per candidate


class Scorer:
    name = "scorer"

    def score_set(self, rset: RetrievalSet) -> list[float]:
        raise NotImplementedError


def query_text(rset: RetrievalSet) -> str:
    return rset.query_spec.text() if rset.mode == "cross" else render_aag(rset.query_circuit)


class FunctionScorer(Scorer):
    """Pairwise text similarity between the query and each candidate."""

    def __init__(self, name: str, fn: Callable[[str, str], float]):
        self.name, self.fn = name, fn

    def score_set(self, rset):
        q = query_text(rset)
        return [self.fn(q, render_aag(c)) for c in rset.candidates]


def levenshtein_scorer() -> Scorer:
    return FunctionScorer("Inverted Levenshtein", levenshtein_similarity)


def bag_of_keywords_scorer(vocab: Vocab) -> Scorer:
    return FunctionScorer("Bag-of-keywords", lambda a, b: bag_of_keywords_similarity(a, b, vocab))


class WLScorer(Scorer):
    name = "Weisfeiler-Lehman"

    def __init__(self, h: int = 3):
        self.h = h

    def score_set(self, rset):
        if rset.mode != "intra":
            raise ValueError("the WL kernel compares circuits; use it on intra-modal sets")
        g = to_labeled_graph(rset.query_circuit)
        return [wl_kernel_similarity(g, to_labeled_graph(c), self.h) for c in rset.candidates]


class RandomScorer(Scorer):
    name = "Random"

    def __init__(self, seed: int = 0):
        self.rng = random.Random(seed)

    def score_set(self, rset):
        return [self.rng.random() for _ in rset.candidates]


class ModelScorer(Scorer):
    """Cosine similarity of projected embeddings from a bi-encoder."""

    def __init__(self, model, vocab: Vocab, max_len: int, name: str = "CNML"):
        self.model, self.vocab, self.max_len, self.name = model, vocab, max_len, name

    def score_set(self, rset):
        cands = embed_texts(self.model.encoder_circuit, [render_aag(c) for c in rset.candidates], self.vocab,
                            self.max_len)
        if rset.mode == "cross":
            q = embed_texts(self.model.encoder_spec, [rset.query_spec.text()], self.vocab, self.max_len)
        else:
            q = embed_texts(self.model.encoder_circuit, [render_aag(rset.query_circuit)], self.vocab, self.max_len)
        return (l2_normalize(cands) @ l2_normalize(q)[0]).tolist()


def evaluate_retrieval(scorer: Scorer, sets: Sequence[RetrievalSet]) -> RankingResult:
    if not sets:
        raise ValueError("no retrieval sets")
    ranks, sizes = [], []
    for rset in sets:
        scores = scorer.score_set(rset)
        ranks.append(rank_of_positive(scores, rset.positive_index))
        sizes.append(len(rset.candidates))
    return RankingResult(ranks, sizes)


def expected_random_mrr(n: int) -> float:
    """Mean reciprocal rank of a uniformly random ranking: H_n / n."""
    return sum(1.0 / k for k in range(1, n + 1)) / n


def write_metrics_table(path: str, results: dict[str, RankingResult]) -> None:
    """Tab-separated method x {MRR, MR, R@1%, R@10%} table."""
    with open(path, "w") as fh:
        fh.write("method\tMRR\tMR\tR@1%\tR@10%\n")
        for name, r in results.items():
            fh.write(f"{name}\t{r.mrr:.6f}\t{r.mr:.4f}\t{r.r1:.4f}\t{r.r10:.4f}\n")


# ---------------------------------------------------------------------------
# embedding-space report


def density_histogram(values: Sequence[float], bins: int = 20, lo: float = -1.0, hi: float = 1.0) -> dict:
    """Histogram normalized to a probability density over [lo, hi]."""
    values = np.clip(np.asarray(values, dtype=float), lo, hi)
    density, edges = np.histogram(values, bins=bins, range=(lo, hi), density=True)
    return {"edges": edges.tolist(), "density": density.tolist(), "count": int(len(values)),
            "mean": float(values.mean()) if len(values) else float("nan")}


def pair_cosines(model, vocab: Vocab, max_len: int, circuits: Sequence[str], specs: Sequence[str]) -> np.ndarray:
    u = embed_texts(model.encoder_circuit, list(circuits), vocab, max_len)
    v = embed_texts(model.encoder_spec, list(specs), vocab, max_len)
    return (l2_normalize(u) * l2_normalize(v)).sum(-1).double().numpy()


def embedding_space_report(model, vocab: Vocab, max_len: int, labeled: Sequence[tuple], batch: Sequence = (),
                           bins: int = 20) -> dict:
    """Cosine-similarity densities for positive and negative pairs plus one
    batch's full similarity matrix (rows circuits, columns specs)."""
    circuits = [r.aag_text for r, _ in labeled]
    specs = [r.spec_text for r, _ in labeled]
    labels = np.array([y for _, y in labeled])
    cos = pair_cosines(model, vocab, max_len, circuits, specs) if labeled else np.zeros(0)
    report = {"positive": density_histogram(cos[labels == 1], bins),
              "negative": density_histogram(cos[labels == 0], bins)}
    if batch:
        u = embed_texts(model.encoder_circuit, [r.aag_text for r in batch], vocab, max_len)
        v = embed_texts(model.encoder_spec, [r.spec_text for r in batch], vocab, max_len)
        report["heatmap"] = (l2_normalize(u) @ l2_normalize(v).T).double().tolist()
    return report


def write_report(path: str, report: dict) -> None:
    with open(path, "w") as fh:
        json.dump(report, fh, indent=1)
