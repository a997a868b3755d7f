#!/usr/bin/env python3
"""Desk-scale reproduction of the retrieval, fine-tuning and generalization
experiments.

Writes into --out:
  cross.tsv, intra.tsv      retrieval tables (method x MRR, MR, R@1%, R@10%)
  multi.tsv                 split-trained model on multi-guarantee queries
  finetune.json             probe metrics from the trained and a fresh encoder
  embedding_report.json     cosine densities and one batch heatmap
  *.npz                     checkpoints, each with a .config.ini snapshot

Example:
  python3 scripts/run_desk_experiments.py --out runs/desk --pairs 4000 --steps 600
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import time

import torch

from cnml.config import load_config, write_snapshot
from cnml.datagen import (AugmentConfig, DataConfig, PairOracle, augment_dataset, build_batches, generate_pairs,
                          labeled_pairs, mine_retrieval_sets, write_records)
from cnml.evalkit import (ModelScorer, RandomScorer, WLScorer, bag_of_keywords_scorer, embedding_space_report,
                          evaluate_retrieval, levenshtein_scorer, write_metrics_table, write_report)
from cnml.neural.finetune import FinetuneConfig, finetune_classifier
from cnml.neural.model import CnmlModel
from cnml.neural.train import build_vocab, desk_config, train

log = logging.getLogger("desk")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--pairs", type=int, default=4000, help="raw pairs before the 60/40 train/test split")
    ap.add_argument("--steps", type=int, default=600)
    ap.add_argument("--n", type=int, default=100, help="candidates per retrieval set")
    ap.add_argument("--sets", type=int, default=30, help="retrieval sets per suite")
    ap.add_argument("--labeled", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    os.makedirs(args.out, exist_ok=True)
    torch.manual_seed(args.seed)
    snapshot = load_config(overrides=[f"run.seed={args.seed}", f"train.total_steps={args.steps}",
                                      f"train.warmup_steps={args.steps // 10}", f"gen.count={args.pairs}"])

    t = time.time()
    raw = generate_pairs(DataConfig(count=args.pairs), random.Random(args.seed + 11))
    cut = int(0.6 * len(raw))
    pad = AugmentConfig(target_inputs=4, target_outputs=4)
    train_p = augment_dataset(raw[:cut], pad, random.Random(args.seed + 1))
    test_p = augment_dataset(raw[cut:], pad, random.Random(args.seed + 2))
    split_p = augment_dataset(raw[:cut], AugmentConfig(split=True, target_inputs=4, target_outputs=4),
                              random.Random(args.seed + 3))
    for name, recs in (("train", train_p), ("test", test_p), ("split", split_p)):
        write_records(os.path.join(args.out, f"{name}.jsonl"), recs)
    log.info("data: %d train, %d test, %d split pairs in %.0fs", len(train_p), len(test_p), len(split_p),
             time.time() - t)

    vocab = build_vocab(train_p + test_p + split_p)
    cfg = desk_config(total_steps=args.steps, warmup_steps=args.steps // 10, seed=args.seed, log_every=50)
    models = {}
    for name, recs in (("cnml", train_p), ("cnml_simple", split_p)):
        path = os.path.join(args.out, f"{name}.npz")
        t = time.time()
        models[name] = train(recs, cfg, vocab, metrics_path=path + ".metrics.jsonl", checkpoint_path=path).model
        write_snapshot(path, snapshot, {"records": name})
        log.info("%s trained in %.0fs", name, time.time() - t)
    torch.manual_seed(args.seed + 1)
    untrained = CnmlModel(cfg.encoder_config(len(vocab)), cfg.tau)

    oracle = PairOracle()
    suites = {
        "cross": mine_retrieval_sets(test_p, args.n, "cross", args.sets, random.Random(9), oracle),
        "intra": mine_retrieval_sets(test_p, args.n, "intra", args.sets, random.Random(10), oracle),
    }
    for mode, sets in suites.items():
        scorers = [ModelScorer(models["cnml"], vocab, cfg.max_len, "CNML-base"),
                   ModelScorer(models["cnml_simple"], vocab, cfg.max_len, "CNML-simple"),
                   ModelScorer(untrained, vocab, cfg.max_len, "Untrained encoders"),
                   RandomScorer(args.seed), levenshtein_scorer(), bag_of_keywords_scorer(vocab)]
        if mode == "intra":
            scorers.append(WLScorer(3))
        results = {s.name: evaluate_retrieval(s, sets) for s in scorers}
        write_metrics_table(os.path.join(args.out, f"{mode}.tsv"), results)
        for name, r in results.items():
            log.info("%s %-20s %s", mode, name, {k: round(v, 3) for k, v in r.row().items()})

    multi = [p for p in test_p if len(p.spec.guarantees) >= 2]
    msets = mine_retrieval_sets(test_p, args.n, "cross", args.sets, random.Random(13), oracle, queries=multi)
    write_metrics_table(os.path.join(args.out, "multi.tsv"), {
        "CNML-simple": evaluate_retrieval(ModelScorer(models["cnml_simple"], vocab, cfg.max_len), msets),
        "CNML-base": evaluate_retrieval(ModelScorer(models["cnml"], vocab, cfg.max_len), msets),
        "Untrained encoders": evaluate_retrieval(ModelScorer(untrained, vocab, cfg.max_len), msets),
    })

    labeled = labeled_pairs(test_p, args.labeled, random.Random(12), oracle)
    ft = {name: finetune_classifier(m, vocab, labeled, FinetuneConfig(seed=args.seed)).test_metrics
          for name, m in (("cnml", models["cnml"]), ("random_init", untrained))}
    with open(os.path.join(args.out, "finetune.json"), "w") as fh:
        json.dump(ft, fh, indent=1)
    log.info("finetune %s", ft)

    batch = build_batches(test_p, 32, random.Random(14))[0].records
    report = embedding_space_report(models["cnml"], vocab, cfg.max_len, labeled[:800], batch)
    write_report(os.path.join(args.out, "embedding_report.json"), report)
    log.info("mean cosine positive %.3f negative %.3f", report["positive"]["mean"], report["negative"]["mean"])


if __name__ == "__main__":
    main()
