"""Command-line entry point: ``cnml <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.  ``check``
prints SAT, UNSAT (with a witness) or LIMIT and exits 0, 1 or 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys

import torch

from .aiger import parse_aag
from .config import ConfigError, RunConfig, load_config, write_snapshot
from .datagen import (ExternalSynthesizer, PairOracle, augment_dataset, build_batches, generate_pairs,
                      labeled_pairs, mine_retrieval_sets, read_records, read_retrieval_sets, write_records,
                      write_retrieval_sets)
from .ltl import parse_ltl
from .verifier import ResourceLimit, Satisfies, model_check

log = logging.getLogger("cnml")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="config file (default: $CNML_CONFIG)")
    p.add_argument("--preset", choices=["desk", "paper-scale"])
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.add_argument("--deterministic", action="store_true", default=None)
    p.add_argument("--log-level")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="cnml", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate verified circuit/spec pairs")
    _common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)

    p = sub.add_parser("augment", help="shuffle assumptions, pad wires, split guarantees")
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", action="store_true", default=None)
    p.add_argument("--no-shuffle", dest="shuffle", action="store_false", default=None)
    p.add_argument("--no-pad", dest="pad", action="store_false", default=None)

    p = sub.add_parser("batch", help="build duplicate-free mini-batches")
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--filter-mode", choices=["none", "sampled", "oracle"])

    p = sub.add_parser("mine-retrieval", help="mine retrieval sets with one verified positive")
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--mode", choices=["cross", "intra"])
    p.add_argument("--count", type=int)

    p = sub.add_parser("train", help="contrastive training")
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--steps", type=int)
    p.add_argument("--vocab-from", help="extra record file whose tokens join the vocabulary")

    p = sub.add_parser("finetune", help="satisfaction classifier probe")
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--checkpoint", help="initialize from this checkpoint (default: fresh encoders)")
    p.add_argument("--out", required=True, help="metrics file (.json)")
    p.add_argument("--count", type=int)

    p = sub.add_parser("check", help="model-check a circuit against an LTL formula")
    _common(p)
    p.add_argument("circuit")
    p.add_argument("formula")
    p.add_argument("--algorithm", choices=["ndfs", "scc"], default="ndfs")

    p = sub.add_parser("eval-retrieval", help="rank retrieval sets with the model and baselines")
    _common(p)
    p.add_argument("--sets", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="metrics table (.tsv)")
    p.add_argument("--baselines")

    p = sub.add_parser("report", help="embedding-space distribution report")
    _common(p)
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="report file (.json)")
    p.add_argument("--count", type=int, default=400)
    return ap


_FLAG_KEYS = {
    "gen-data": {"count": "gen.count"},
    "augment": {"split": "augment.split", "shuffle": "augment.shuffle", "pad": "augment.pad"},
    "batch": {"batch_size": "batch.batch_size", "filter_mode": "batch.filter_mode"},
    "mine-retrieval": {"n": "retrieval.n", "mode": "retrieval.mode", "count": "retrieval.count"},
    "train": {"steps": "train.total_steps"},
    "finetune": {"count": "finetune.count"},
    "eval-retrieval": {"baselines": "eval.baselines"},
}


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config, args.preset, args.overrides)
    flags = {"seed": "run.seed", "deterministic": "run.deterministic", "log_level": "run.log_level"}
    flags.update(_FLAG_KEYS.get(args.command, {}))
    for attr, key in flags.items():
        value = getattr(args, attr, None)
        if value is not None:
            section, name = key.split(".")
            cfg.set(section, name, value)
    try:
        _validate(cfg, args.command)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return cfg


def _validate(cfg: RunConfig, command: str) -> None:
    if cfg.run.workers < 1:
        raise ValueError("run.workers must be positive")
    if command == "gen-data":
        cfg.gen.data_config().validate()
    elif command == "batch":
        if cfg.batch.batch_size < 1:
            raise ValueError("batch.batch_size must be positive")
        if cfg.batch.filter_mode not in ("none", "sampled", "oracle"):
            raise ValueError(f"unknown batch.filter_mode {cfg.batch.filter_mode!r}")
    elif command == "mine-retrieval":
        if cfg.retrieval.n < 2 or cfg.retrieval.count < 1:
            raise ValueError("retrieval.n >= 2 and retrieval.count >= 1 are required")
        if cfg.retrieval.mode not in ("cross", "intra"):
            raise ValueError(f"unknown retrieval.mode {cfg.retrieval.mode!r}")
    elif command == "train":
        cfg.train.validate()
        if cfg.train.filter_mode not in ("none", "sampled", "oracle"):
            raise ValueError(f"unknown train.filter_mode {cfg.train.filter_mode!r}")
    elif command == "finetune":
        cfg.finetune.validate()
        if cfg.finetune.count < 4:
            raise ValueError("finetune.count must be at least 4")


def _setup(cfg: RunConfig) -> None:
    logging.basicConfig(level=getattr(logging, cfg.run.log_level.upper(), logging.INFO), stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s", force=True)
    torch.manual_seed(cfg.run.seed)
    if cfg.run.deterministic:
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)
    else:
        torch.set_num_threads(cfg.run.workers)


def _oracle(cfg: RunConfig) -> PairOracle:
    return PairOracle(cfg.limits(), cfg.verifier.refute_trials)


def _ensure_dir(path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_data(args, cfg: RunConfig) -> int:
    synth = None
    if cfg.gen.synth_command:
        parts = cfg.gen.synth_command.split()
        synth = ExternalSynthesizer(parts[0], tuple(parts[1:]) or ("{spec}",), cfg.gen.synth_timeout,
                                    limits=cfg.limits())
    records = generate_pairs(cfg.gen.data_config(), random.Random(cfg.run.seed), cfg.limits(), synth)
    write_records(args.out, records)
    log.info("wrote %d pairs to %s", len(records), args.out)
    return EXIT_OK


def cmd_augment(args, cfg: RunConfig) -> int:
    pairs = read_records(args.inp)
    out = augment_dataset(pairs, cfg.augment.augment_config(), random.Random(cfg.run.seed))
    write_records(args.out, out)
    log.info("augmented %d pairs into %d", len(pairs), len(out))
    return EXIT_OK


def cmd_batch(args, cfg: RunConfig) -> int:
    pairs = read_records(args.inp)
    position = {id(p): i for i, p in enumerate(pairs)}
    batches = build_batches(pairs, cfg.batch.batch_size, random.Random(cfg.run.seed), cfg.batch.filter_mode,
                            _oracle(cfg) if cfg.batch.filter_mode != "none" else None, cfg.batch.sample_cells)
    rows = [{"indices": [position[id(r)] for r in b.records], "short": b.short,
             "checked_cells": b.checked_cells, "false_negatives": b.false_negatives} for b in batches]
    write_records(args.out, rows)
    log.info("built %d batches (%d short)", len(batches), sum(b.short for b in batches))
    return EXIT_OK


def cmd_mine_retrieval(args, cfg: RunConfig) -> int:
    pairs = read_records(args.inp)
    r = cfg.retrieval
    sets = mine_retrieval_sets(pairs, r.n, r.mode, r.count, random.Random(cfg.run.seed), _oracle(cfg))
    write_retrieval_sets(args.out, sets)
    log.info("mined %d %s-modal sets of size %d", len(sets), r.mode, r.n)
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    from .neural.train import build_vocab, train

    pairs = read_records(args.inp)
    vocab_pool = pairs + (read_records(args.vocab_from) if args.vocab_from else [])
    tc = cfg.train
    tc.seed = cfg.run.seed
    tc.deterministic = tc.deterministic or cfg.run.deterministic
    oracle = _oracle(cfg) if tc.filter_mode != "none" else None
    result = train(pairs, tc, build_vocab(vocab_pool), metrics_path=args.out + ".metrics.jsonl",
                   checkpoint_path=args.out, oracle=oracle)
    final = result.history[-1] if result.history else {}
    log.info("trained %d steps, final loss %.4f", len(result.history), final.get("loss", float("nan")))
    return EXIT_OK


def cmd_finetune(args, cfg: RunConfig) -> int:
    from .neural.finetune import finetune_classifier
    from .neural.model import CnmlModel
    from .neural.train import build_vocab, load_checkpoint

    pairs = read_records(args.inp)
    if args.checkpoint:
        model, vocab, tc = load_checkpoint(args.checkpoint)
    else:
        tc, vocab = cfg.train, build_vocab(pairs)
        model = CnmlModel(tc.encoder_config(len(vocab)), tc.tau)
    labeled = labeled_pairs(pairs, cfg.finetune.count, random.Random(cfg.run.seed), _oracle(cfg))
    ft = cfg.finetune
    ft.seed = cfg.run.seed
    res = finetune_classifier(model, vocab, labeled, ft, tc.max_len)
    out = {"init": "checkpoint" if args.checkpoint else "fresh", "checkpoint": args.checkpoint,
           "train": res.train_metrics, "test": res.test_metrics}
    with open(args.out, "w") as fh:
        json.dump(out, fh, indent=1)
    m = res.test_metrics
    print(f"accuracy {m['accuracy']:.4f} precision {m['precision']:.4f} recall {m['recall']:.4f} f1 {m['f1']:.4f}")
    return EXIT_OK


def _format_lasso(w) -> str:
    def letters(seq):
        return " ".join("{" + ",".join(sorted(a)) + "}" for a in seq)
    return f"prefix: {letters(w.prefix)}\nloop: {letters(w.loop)}"


def cmd_check(args, cfg: RunConfig) -> int:
    with open(args.circuit) as fh:
        circuit = parse_aag(fh.read())
    formula = parse_ltl(args.formula)
    verdict = model_check(circuit, formula, cfg.limits(), args.algorithm)
    print(verdict.name)
    if isinstance(verdict, Satisfies):
        return 0
    if isinstance(verdict, ResourceLimit):
        print(f"states explored: {verdict.states_explored}")
        return 2
    print(_format_lasso(verdict.witness))
    return 1


def _scorers(cfg: RunConfig, names, model, vocab, tc):
    from .evalkit import (ModelScorer, RandomScorer, WLScorer, bag_of_keywords_scorer, levenshtein_scorer)
    from .neural.model import CnmlModel
    from .neural.train import load_checkpoint

    scorers = [ModelScorer(model, vocab, tc.max_len, "CNML")]
    for name in names:
        if name == "untrained":
            torch.manual_seed(cfg.run.seed + 1)
            fresh = CnmlModel(tc.encoder_config(len(vocab)), tc.tau).to(next(model.parameters()).dtype)
            scorers.append(ModelScorer(fresh, vocab, tc.max_len, "Untrained encoders"))
        elif name == "random":
            scorers.append(RandomScorer(cfg.run.seed))
        elif name == "levenshtein":
            scorers.append(levenshtein_scorer())
        elif name == "bag_of_keywords":
            scorers.append(bag_of_keywords_scorer(vocab))
        elif name == "wl":
            scorers.append(WLScorer(cfg.eval.wl_h))
        elif name:
            raise ConfigError(f"unknown baseline {name!r}")
    if cfg.eval.siamese_checkpoint:
        sm, sv, stc = load_checkpoint(cfg.eval.siamese_checkpoint)
        scorers.append(ModelScorer(sm, sv, stc.max_len, "Siamese-CNML"))
    return scorers


def cmd_eval_retrieval(args, cfg: RunConfig) -> int:
    from .evalkit import WLScorer, evaluate_retrieval, write_metrics_table
    from .neural.train import load_checkpoint

    names = [n.strip() for n in cfg.eval.baselines.split(",") if n.strip()]
    sets = read_retrieval_sets(args.sets)
    if not sets:
        raise ValueError(f"{args.sets} holds no retrieval sets")
    model, vocab, tc = load_checkpoint(args.checkpoint)
    results = {}
    for scorer in _scorers(cfg, names, model, vocab, tc):
        if isinstance(scorer, WLScorer) and any(s.mode != "intra" for s in sets):
            continue
        results[scorer.name] = r = evaluate_retrieval(scorer, sets)
        print(f"{scorer.name:24s} MRR {r.mrr:.4f}  MR {r.mr:7.2f}  R@1% {r.r1:.3f}  R@10% {r.r10:.3f}")
    write_metrics_table(args.out, results)
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    from .evalkit import embedding_space_report, write_report
    from .neural.train import load_checkpoint

    model, vocab, tc = load_checkpoint(args.checkpoint)
    pairs = read_records(args.inp)
    rng = random.Random(cfg.run.seed)
    labeled = labeled_pairs(pairs, args.count, rng, _oracle(cfg))
    batch = build_batches(pairs, cfg.batch.batch_size, rng)[0].records
    report = embedding_space_report(model, vocab, tc.max_len, labeled, batch, cfg.eval.bins)
    write_report(args.out, report)
    print(f"mean cosine: positive {report['positive']['mean']:.4f} negative {report['negative']['mean']:.4f}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data, "augment": cmd_augment, "batch": cmd_batch, "mine-retrieval": cmd_mine_retrieval,
    "train": cmd_train, "finetune": cmd_finetune, "check": cmd_check, "eval-retrieval": cmd_eval_retrieval,
    "report": cmd_report,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        cfg = resolve_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:  # --help
        return int(e.code or 0)
    _setup(cfg)
    out = getattr(args, "out", None)
    try:
        if out:
            _ensure_dir(out)
        code = COMMANDS[args.command](args, cfg)
        if out:
            write_snapshot(out, cfg, {"command": args.command, "argv": list(argv or sys.argv[1:])})
        return code
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - every failure maps to one exit code
        log.debug("failure", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
