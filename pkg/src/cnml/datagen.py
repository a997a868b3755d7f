"""Circuit/specification pair generation, augmentation, batching and retrieval mining."""

from __future__ import annotations

import json
import logging
import os
import random
import shlex
import subprocess
import zlib
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .aiger import AigBuilder, AigerError, Circuit, pad_wires, parse_aag, random_circuit, render_aag
from .ltl import (AssumeGuaranteeSpec, GenConfig, atoms, PatternInstance, SpecSample, render_ltl, sample_spec,
                  shuffle_assumptions, split_spec)
from .verifier import Limits, ResourceLimit, Satisfies, find_violation_by_simulation, model_check

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# records


@dataclass
class PairRecord:
    spec: AssumeGuaranteeSpec
    circuit: Circuit
    provenance: dict = field(default_factory=dict)
    verified: bool = False

    @property
    def spec_text(self) -> str:
        return self.spec.text()

    @property
    def aag_text(self) -> str:
        return render_aag(self.circuit)

    def to_json(self) -> dict:
        return {"spec_text": self.spec_text, "aag_text": self.aag_text, "provenance": self.provenance,
                "verified": self.verified, **self.spec.to_json()}

    @classmethod
    def from_json(cls, d: dict) -> "PairRecord":
        spec = AssumeGuaranteeSpec.from_json(d)
        if spec.text() != d["spec_text"]:
            raise ValueError("spec_text does not match assumptions/guarantees")
        return cls(spec, parse_aag(d["aag_text"]), d.get("provenance", {}), bool(d.get("verified", False)))


def write_records(path: str, records: Iterable) -> None:
    """JSON lines, written to a temporary file and renamed into place."""
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "w") as fh:
            for r in records:
                fh.write(json.dumps(r if isinstance(r, dict) else r.to_json(), sort_keys=True) + "\n")
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def read_records(path: str) -> list[PairRecord]:
    with open(path) as fh:
        return [PairRecord.from_json(json.loads(line)) for line in fh if line.strip()]


def stable_seed(*parts) -> int:
    """Seed derived from text, stable across processes (unlike hash())."""
    return zlib.crc32("\x1f".join(map(str, parts)).encode())


def check_pair(circuit: Circuit, spec: AssumeGuaranteeSpec, limits: Limits | None = None,
               refute_trials: int = 16) -> bool | None:
    """True/False for Satisfies/Violates, None on resource limit.

    A circuit with fewer wires than the spec mentions is first padded (unused
    inputs, constant-FALSE outputs), the same neutral extension used for
    augmentation.
    """
    f = spec.flatten()
    circuit = _cover_wires(circuit, f)
    if refute_trials:
        rng = random.Random(stable_seed(render_aag(circuit), spec.text()))
        if find_violation_by_simulation(circuit, f, rng, refute_trials) is not None:
            return False
    v = model_check(circuit, f, limits)
    if isinstance(v, ResourceLimit):
        return None
    return isinstance(v, Satisfies)


def _cover_wires(circuit: Circuit, f) -> Circuit:
    if circuit.symbols:
        return circuit
    ni, no = circuit.num_inputs, circuit.num_outputs
    for name in atoms(f):
        if name[1:].isdigit() and name[0] in "io":
            if name[0] == "i":
                ni = max(ni, _index(name) + 1)
            else:
                no = max(no, _index(name) + 1)
    if (ni, no) == (circuit.num_inputs, circuit.num_outputs):
        return circuit
    return pad_wires(circuit, ni, no)


class PairOracle:
    """Memoized ``check_pair`` keyed by rendered texts."""

    def __init__(self, limits: Limits | None = None, refute_trials: int = 16):
        self.limits = limits
        self.refute_trials = refute_trials
        self.cache: dict[tuple[str, str], bool | None] = {}
        self.calls = 0

    def __call__(self, circuit: Circuit, spec: AssumeGuaranteeSpec) -> bool | None:
        key = (render_aag(circuit), spec.text())
        if key not in self.cache:
            self.calls += 1
            self.cache[key] = check_pair(circuit, spec, self.limits, self.refute_trials)
        return self.cache[key]


# ---------------------------------------------------------------------------
# circuit templates
#
# One realization per guarantee pattern drives its own output; all share the
# input wires. Each pattern has several behaviourally different realizations.

N_VARIANTS = {
    "invariance": 3, "next_response": 3, "response": 3, "mutex": 3, "eventuality": 3,
    "cond_invariance": 3, "cond_next_response": 3, "cond_eventuality": 3,
}


def _index(name: str) -> int:
    return int(name[1:])


class _Realizer:
    def __init__(self, builder: AigBuilder, rng: random.Random, num_inputs: int):
        self.b, self.rng, self.num_inputs = builder, rng, num_inputs

    def lit(self, literal) -> int:
        name, positive = literal
        x = self.b.input(_index(name))
        return x if positive else x ^ 1

    def trigger(self, inst: PatternInstance) -> int:
        out = 1
        for l in inst.trigger:
            out = self.b.and_(out, self.lit(l))
        return out

    def other(self, avoid: Iterable[str]) -> int:
        avoid = {_index(n) for n in avoid}
        choices = [k for k in range(self.num_inputs) if k not in avoid] or list(range(self.num_inputs))
        return self.b.input(self.rng.choice(choices)) ^ self.rng.randint(0, 1)

    def delayed(self, x: int) -> int:
        """Value of ``x`` one step earlier (FALSE-ish at step 0)."""
        if x & 1 and self.rng.random() < 0.5:
            # latch the positive signal and invert on read
            return self.b.add_latch(x ^ 1) ^ 1
        return self.b.add_latch(x)

    def realize(self, inst: PatternInstance, variant: int) -> int:
        b, k = self.b, inst.kind
        used = [l[0] for l in inst.trigger] + ([inst.condition[0]] if inst.condition else [])
        if k == "invariance":
            t = self.trigger(inst)
            if variant == 0:
                return t
            if variant == 1:
                return b.or_(t, self.delayed(t))
            return b.or_(t, self.other(used))
        if k == "next_response":
            t = self.trigger(inst)
            if variant == 0:
                return self.delayed(t)
            if variant == 1:
                return self.delayed(b.or_(t, self.other(used)))
            return b.or_(self.delayed(t), self.other(used))
        if k == "response":
            t = self.trigger(inst)
            if variant == 0:
                return t
            if variant == 1:
                return self.delayed(t)
            return self.delayed(self.delayed(t))
        if k == "mutex":
            t = self.trigger(inst)
            if variant == 0:
                return t ^ 1
            if variant == 1:
                return b.and_(t ^ 1, self.other(used))
            return b.and_(t ^ 1, self.delayed(self.other(used)))
        if k == "eventuality":
            if variant == 0:
                return b.add_latch(1)
            if variant == 1:
                return 1
            return b.add_latch(b.add_latch(1))
        c = self.lit(inst.condition)
        if k == "cond_invariance":
            t = self.trigger(inst)
            if variant == 0:
                return b.and_(t, c)
            if variant == 1:
                return b.and_(c, b.or_(t, self.other(used)))
            return b.and_(c, b.or_(t, self.delayed(t)))
        if k == "cond_next_response":
            t = self.trigger(inst)
            if variant == 0:
                return b.and_(c, self.delayed(t))
            if variant == 1:
                return self.delayed(b.and_(t, c))
            return b.and_(c, self.delayed(b.or_(t, self.other(used))))
        if k == "cond_eventuality":
            if variant == 0:
                return c
            if variant == 1:
                return b.or_(c, self.delayed(c))
            sticky = b.add_latch()
            keep = b.or_(sticky, c)
            b.set_next(sticky, keep)
            return keep
        raise ValueError(f"unknown pattern {k!r}")

    def noise(self) -> int:
        """A small random function for an unconstrained output."""
        x = self.b.input(self.rng.randrange(self.num_inputs)) ^ self.rng.randint(0, 1)
        y = self.b.input(self.rng.randrange(self.num_inputs)) ^ self.rng.randint(0, 1)
        r = self.rng.random()
        if r < 0.4:
            return self.b.and_(x, y)
        if r < 0.7:
            return self.delayed(x)
        return self.b.or_(x, self.delayed(y))


@dataclass
class DataConfig:
    count: int = 100
    gen: GenConfig = field(default_factory=GenConfig)
    noise_output_prob: float = 0.5
    dead_logic_prob: float = 0.3
    fallback_attempts: int = 200
    fallback_latches: int = 2
    fallback_gates: int = 6
    unique_specs: bool = True
    max_attempts_factor: int = 20

    def validate(self) -> None:
        if self.count < 1:
            raise ValueError("count must be positive")
        self.gen.validate()


def wire_counts(sample: SpecSample) -> tuple[int, int]:
    names = set()
    for f in sample.spec.assumptions + sample.spec.guarantees:
        names |= atoms(f)
    ni = 1 + max((_index(n) for n in names if n.startswith("i")), default=0)
    no = 1 + max((_index(n) for n in names if n.startswith("o")), default=0)
    return ni, no


def realize_circuit(sample: SpecSample, rng: random.Random, variants: Sequence[int] | None = None,
                    noise_output_prob: float = 0.5, dead_logic_prob: float = 0.3,
                    num_inputs: int | None = None, num_outputs: int | None = None) -> tuple[Circuit, list[int]]:
    """Compose per-guarantee templates into one circuit.

    Returns the circuit and the variant chosen for every pattern instance.
    """
    ni, no = wire_counts(sample)
    ni, no = max(ni, num_inputs or 0), max(no, num_outputs or 0)
    b = AigBuilder(ni)
    r = _Realizer(b, rng, ni)
    if variants is None:
        variants = [rng.randrange(N_VARIANTS[p.kind]) for p in sample.patterns]
    drive: dict[int, int] = {}
    order = list(range(len(sample.patterns)))
    rng.shuffle(order)
    for idx in order:
        inst = sample.patterns[idx]
        drive[_index(inst.output)] = r.realize(inst, variants[idx])
    for k in range(no):
        if k not in drive:
            drive[k] = r.noise() if rng.random() < noise_output_prob else 0
    if rng.random() < dead_logic_prob:
        for _ in range(rng.randint(1, 2)):
            r.noise()
    for k in range(no):
        b.add_output(drive[k])
    return b.build(), list(variants)


def patterns_to_json(patterns: Sequence[PatternInstance]) -> list[dict]:
    return [{"kind": p.kind, "output": p.output, "trigger": [list(t) for t in p.trigger],
             "condition": list(p.condition) if p.condition else None} for p in patterns]


def patterns_from_json(items: Sequence[dict]) -> tuple[PatternInstance, ...]:
    return tuple(PatternInstance(d["kind"], d["output"], tuple((t[0], bool(t[1])) for t in d["trigger"]),
                                 tuple(d["condition"]) if d.get("condition") else None) for d in items)


def _fallback_circuit(sample: SpecSample, rng: random.Random, config: DataConfig,
                      limits: Limits | None) -> Circuit | None:
    ni, no = wire_counts(sample)
    for _ in range(config.fallback_attempts):
        c = random_circuit(rng, ni, rng.randint(0, config.fallback_latches), no,
                           rng.randint(0, config.fallback_gates))
        if check_pair(c, sample.spec, limits):
            return c
    return None


def generate_pairs(config: DataConfig, rng: random.Random, limits: Limits | None = None,
                   synthesizer: "ExternalSynthesizer | None" = None) -> list[PairRecord]:
    """Verified circuit/specification pairs, one per distinct generated spec."""
    config.validate()
    records: list[PairRecord] = []
    seen: set[str] = set()
    discarded = duplicates = 0
    attempts = 0
    while len(records) < config.count:
        attempts += 1
        if attempts > config.count * config.max_attempts_factor:
            raise RuntimeError(f"gave up after {attempts} attempts ({len(records)} pairs generated)")
        seed = rng.getrandbits(32)
        local = random.Random(seed)
        sample = sample_spec(config.gen, local)
        text = sample.spec.text()
        if config.unique_specs and text in seen:
            duplicates += 1
            continue
        circuit, variants = realize_circuit(sample, local, None, config.noise_output_prob,
                                            config.dead_logic_prob)
        source = "template"
        verdict = check_pair(circuit, sample.spec, limits, refute_trials=0)
        if not verdict and synthesizer is not None:
            try:
                circuit, source, verdict = synthesizer(sample.spec), "external", True
            except SynthesisError as e:
                log.info("external synthesis failed: %s", e)
        if not verdict:
            fallback = _fallback_circuit(sample, local, config, limits)
            if fallback is None:
                discarded += 1
                continue
            circuit, source, verdict = fallback, "random", True
        seen.add(text)
        prov = {"seed": seed, "source": source, "patterns": patterns_to_json(sample.patterns),
                "variants": variants}
        records.append(PairRecord(sample.spec, circuit, prov, True))
    if discarded or duplicates:
        log.info("generate_pairs: %d discarded, %d duplicate specs skipped", discarded, duplicates)
    return records


def alternate_circuit(record: PairRecord, rng: random.Random, limits: Limits | None = None,
                      attempts: int = 20) -> Circuit | None:
    """A different verified circuit for the record's specification, padded alike."""
    if "patterns" not in record.provenance:
        return None
    patterns = patterns_from_json(record.provenance["patterns"])
    sample = SpecSample(AssumeGuaranteeSpec(record.spec.assumptions,
                                            tuple(p.guarantee() for p in patterns)), patterns)
    base = record.provenance.get("variants")
    original = render_aag(record.circuit)
    c = record.circuit
    for _ in range(attempts):
        variants = [rng.randrange(N_VARIANTS[p.kind]) for p in patterns]
        if base is not None and variants == list(base) and len(patterns) and attempts > 1:
            continue
        alt, _ = realize_circuit(sample, rng, variants)
        alt = pad_wires(alt, max(alt.num_inputs, c.num_inputs), max(alt.num_outputs, c.num_outputs))
        if render_aag(alt) == original:
            continue
        if check_pair(alt, record.spec, limits):
            return alt
    return None


# ---------------------------------------------------------------------------
# external synthesis


class SynthesisError(RuntimeError):
    pass


class SynthesisProcessError(SynthesisError):
    pass


class SynthesisTimeout(SynthesisError):
    pass


class SynthesisParseError(SynthesisError):
    pass


class SynthesisVerificationError(SynthesisError):
    pass


@dataclass
class ExternalSynthesizer:
    """Runs an LTL synthesis tool as a subprocess.

    ``args`` may contain ``{spec}``, ``{inputs}`` and ``{outputs}``
    placeholders (comma-separated proposition lists). With ``stdin=True`` the
    flattened spec is written to the process instead. The tool must print an
    aag circuit on stdout; anything before the ``aag`` header is ignored.
    """

    executable: str
    args: Sequence[str] = ("{spec}",)
    timeout: float = 60.0
    stdin: bool = False
    inputs: Sequence[str] = ()
    outputs: Sequence[str] = ()
    limits: Limits | None = None

    def __call__(self, spec: AssumeGuaranteeSpec) -> Circuit:
        return synthesize_external(spec, self)


def synthesize_external(spec: AssumeGuaranteeSpec, adapter: ExternalSynthesizer) -> Circuit:
    text = spec.text()
    subst = {"spec": text, "inputs": ",".join(adapter.inputs), "outputs": ",".join(adapter.outputs)}
    argv = [adapter.executable] + [a.format(**subst) for a in adapter.args]
    try:
        proc = subprocess.run(argv, input=text if adapter.stdin else None, capture_output=True, text=True,
                              timeout=adapter.timeout)
    except subprocess.TimeoutExpired:
        raise SynthesisTimeout(f"{shlex.join(argv)} timed out after {adapter.timeout}s") from None
    except OSError as e:
        raise SynthesisProcessError(f"cannot run {adapter.executable}: {e}") from None
    if proc.returncode != 0:
        raise SynthesisProcessError(f"{adapter.executable} exited with {proc.returncode}: {proc.stderr.strip()}")
    out = proc.stdout
    start = out.find("aag ")
    if start < 0:
        raise SynthesisParseError("no aag header in synthesizer output")
    try:
        circuit = parse_aag(out[start:])
    except AigerError as e:
        raise SynthesisParseError(str(e)) from None
    try:
        v = model_check(circuit, spec.flatten(), adapter.limits)
    except ValueError as e:
        raise SynthesisVerificationError(str(e)) from None
    if not isinstance(v, Satisfies):
        raise SynthesisVerificationError(f"synthesized circuit does not satisfy the spec ({v.name})")
    return circuit


# ---------------------------------------------------------------------------
# augmentation


@dataclass
class AugmentConfig:
    shuffle: bool = True
    pad: bool = True
    split: bool = False
    target_inputs: int | None = None   # None: maximum over the pool
    target_outputs: int | None = None


def augment_dataset(pairs: Sequence[PairRecord], config: AugmentConfig, rng: random.Random) -> list[PairRecord]:
    ti = config.target_inputs or max((p.circuit.num_inputs for p in pairs), default=0)
    to = config.target_outputs or max((p.circuit.num_outputs for p in pairs), default=0)
    out = []
    for p in pairs:
        spec, circuit = p.spec, p.circuit
        if config.shuffle:
            spec = shuffle_assumptions(spec, rng)
        if config.pad:
            circuit = pad_wires(circuit, ti, to)
        prov = dict(p.provenance)
        specs = split_spec(spec) if config.split else [spec]
        for k, s in enumerate(specs):
            q = dict(prov)
            if config.split:
                q["split_index"] = k
                if "patterns" in prov:
                    q["patterns"] = [prov["patterns"][k]]
                    if "variants" in prov:
                        q["variants"] = [prov["variants"][k]]
            out.append(PairRecord(s, circuit, q, p.verified))
    return out


# ---------------------------------------------------------------------------
# batches


@dataclass
class Batch:
    records: list[PairRecord]
    short: bool = False
    checked_cells: int = 0
    false_negatives: int = 0

    @property
    def false_negative_rate(self) -> float:
        return self.false_negatives / self.checked_cells if self.checked_cells else 0.0

    def __len__(self):
        return len(self.records)


def build_batches(pairs: Sequence[PairRecord], batch_size: int, rng: random.Random, filter_mode: str = "none",
                  oracle: PairOracle | None = None, sample_cells: int = 32) -> list[Batch]:
    """Greedy mini-batches without repeated circuits or specs.

    ``filter_mode``: ``none`` (dedup only), ``sampled`` (dedup, then measure the
    false-negative rate on ``sample_cells`` random off-diagonal cells) or
    ``oracle`` (refuse candidates that satisfy, or are satisfied by, a pair
    already in the batch).
    """
    if filter_mode not in ("none", "sampled", "oracle"):
        raise ValueError(f"unknown filter mode {filter_mode!r}")
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    if filter_mode != "none" and oracle is None:
        oracle = PairOracle()
    pool = list(pairs)
    rng.shuffle(pool)
    texts = [(p.aag_text, p.spec_text) for p in pool]
    remaining = list(range(len(pool)))
    batches = []
    while remaining:
        chosen: list[int] = []
        circuits: set[str] = set()
        specs: set[str] = set()
        rest = []
        for idx in remaining:
            if len(chosen) == batch_size:
                rest.append(idx)
                continue
            c_text, s_text = texts[idx]
            ok = c_text not in circuits and s_text not in specs
            if ok and filter_mode == "oracle":
                cand = pool[idx]
                ok = all(oracle(cand.circuit, pool[j].spec) is False and oracle(pool[j].circuit, cand.spec) is False
                         for j in chosen)
            if ok:
                chosen.append(idx)
                circuits.add(c_text)
                specs.add(s_text)
            else:
                rest.append(idx)
        if not chosen:  # cannot happen: the first candidate is always admissible
            raise RuntimeError("batch construction stalled")
        batch = Batch([pool[i] for i in chosen], short=len(chosen) < batch_size)
        if filter_mode == "sampled" and len(chosen) > 1:
            cells = [(i, j) for i in range(len(chosen)) for j in range(len(chosen)) if i != j]
            for i, j in rng.sample(cells, min(sample_cells, len(cells))):
                batch.checked_cells += 1
                if oracle(batch.records[i].circuit, batch.records[j].spec) is not False:
                    batch.false_negatives += 1
        batches.append(batch)
        remaining = rest
    return batches


def off_diagonal_positives(batch: Batch, oracle: PairOracle) -> int:
    """Exhaustively model-check every off-diagonal cell of ``batch``."""
    n = 0
    for i, ri in enumerate(batch.records):
        for j, rj in enumerate(batch.records):
            if i != j and oracle(ri.circuit, rj.spec) is not False:
                n += 1
    return n


# ---------------------------------------------------------------------------
# retrieval benchmarks


@dataclass
class RetrievalSet:
    mode: str                          # "cross" or "intra"
    query_spec: AssumeGuaranteeSpec
    query_circuit: Circuit | None      # set in intra mode
    candidates: list[Circuit]
    positive_index: int

    def to_json(self) -> dict:
        return {"mode": self.mode, "query_spec": self.query_spec.to_json(),
                "query_circuit": render_aag(self.query_circuit) if self.query_circuit else None,
                "candidates": [render_aag(c) for c in self.candidates], "positive_index": self.positive_index}

    @classmethod
    def from_json(cls, d: dict) -> "RetrievalSet":
        return cls(d["mode"], AssumeGuaranteeSpec.from_json(d["query_spec"]),
                   parse_aag(d["query_circuit"]) if d.get("query_circuit") else None,
                   [parse_aag(t) for t in d["candidates"]], int(d["positive_index"]))


def mine_retrieval_sets(pairs: Sequence[PairRecord], n: int, mode: str, count: int, rng: random.Random,
                        oracle: PairOracle | None = None, max_tries: int | None = None,
                        queries: Sequence[PairRecord] | None = None) -> list[RetrievalSet]:
    """Sets with exactly one candidate satisfying the query specification.

    Distractors are circuits of other pairs that the oracle shows to violate
    the query spec; in ``intra`` mode the positive is an alternate circuit
    realized for the query's spec.  Queries are drawn from ``queries`` when
    given, otherwise from ``pairs``.
    """
    if mode not in ("cross", "intra"):
        raise ValueError(f"unknown retrieval mode {mode!r}")
    if n < 2:
        raise ValueError("a retrieval set needs at least two candidates")
    oracle = oracle or PairOracle()
    by_circuit: dict[str, Circuit] = {}
    for p in pairs:
        by_circuit.setdefault(p.aag_text, p.circuit)
    circuit_texts = sorted(by_circuit)
    pool = list(pairs if queries is None else queries)
    order_q = list(range(len(pool)))
    rng.shuffle(order_q)
    sets: list[RetrievalSet] = []
    for qi in order_q:
        if len(sets) == count:
            break
        q = pool[qi]
        if mode == "cross":
            positive = q.circuit
            query_circuit = None
        else:
            positive = alternate_circuit(q, random.Random(stable_seed("alt", q.spec_text)), oracle.limits)
            if positive is None:
                continue
            query_circuit = q.circuit
        exclude = {q.aag_text, render_aag(positive)}
        order = [t for t in circuit_texts if t not in exclude]
        rng.shuffle(order)
        distractors = []
        tries = 0
        for t in order:
            if len(distractors) == n - 1 or (max_tries and tries >= max_tries):
                break
            tries += 1
            if oracle(by_circuit[t], q.spec) is False:
                distractors.append(by_circuit[t])
        if len(distractors) < n - 1:
            continue
        candidates = distractors + [positive]
        rng.shuffle(candidates)
        pos = next(i for i, c in enumerate(candidates) if c is positive)
        sets.append(RetrievalSet(mode, q.spec, query_circuit, candidates, pos))
    if len(sets) < count:
        raise ValueError(f"only {len(sets)} of {count} retrieval sets could be mined (insufficient distractors)")
    return sets


def write_retrieval_sets(path: str, sets: Iterable[RetrievalSet]) -> None:
    write_records(path, sets)


def read_retrieval_sets(path: str) -> list[RetrievalSet]:
    with open(path) as fh:
        return [RetrievalSet.from_json(json.loads(line)) for line in fh if line.strip()]


def labeled_pairs(pairs: Sequence[PairRecord], count: int, rng: random.Random,
                  oracle: PairOracle | None = None) -> list[tuple[PairRecord, int]]:
    """Balanced oracle-labeled (circuit, spec) pairs: half positive, half violating."""
    oracle = oracle or PairOracle()
    pos_n = count // 2
    idx = list(range(len(pairs)))
    rng.shuffle(idx)
    positives = [(pairs[i], 1) for i in idx[:pos_n]]
    negatives = []
    while len(negatives) < count - pos_n:
        i, j = rng.randrange(len(pairs)), rng.randrange(len(pairs))
        if pairs[i].spec_text == pairs[j].spec_text:
            continue
        r = PairRecord(pairs[j].spec, pairs[i].circuit, {"negative_of": [i, j]}, False)
        if oracle(r.circuit, r.spec) is False:
            negatives.append((r, 0))
    out = positives + negatives
    rng.shuffle(out)
    return out
