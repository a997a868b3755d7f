import os
import random
import stat
import sys

import pytest

from cnml.aiger import parse_aag, render_aag
from cnml.datagen import (AugmentConfig, DataConfig, ExternalSynthesizer, PairOracle, PairRecord, RetrievalSet,
                          SynthesisParseError, SynthesisProcessError, SynthesisTimeout, SynthesisVerificationError,
                          augment_dataset, build_batches, check_pair, generate_pairs, labeled_pairs,
                          mine_retrieval_sets, off_diagonal_positives, read_records, read_retrieval_sets,
                          realize_circuit, synthesize_external, write_records, write_retrieval_sets)
from cnml.ltl import AssumeGuaranteeSpec, GenConfig, PatternInstance, SpecSample, parse_ltl, split_spec
from cnml.verifier import Satisfies, Violates, model_check

from .conftest import REF_AAG, REF_PHI


@pytest.fixture(scope="module")
def pairs():
    return generate_pairs(DataConfig(count=150), random.Random(42))


@pytest.fixture(scope="module")
def oracle():
    return PairOracle()


# ---------------------------------------------------------------------------
# generation


def test_every_record_reverifies(pairs):
    fresh = PairOracle(refute_trials=0)
    assert all(p.verified for p in pairs)
    assert all(fresh(p.circuit, p.spec) is True for p in pairs)


def test_generation_is_deterministic():
    a = generate_pairs(DataConfig(count=20), random.Random(3))
    b = generate_pairs(DataConfig(count=20), random.Random(3))
    assert [r.to_json() for r in a] == [r.to_json() for r in b]


def test_specs_are_unique(pairs):
    assert len({p.spec_text for p in pairs}) == len(pairs)


def test_wire_through_invariance_template():
    inst = PatternInstance("invariance", "o0", (("i0", True),))
    sample = SpecSample(AssumeGuaranteeSpec((), (inst.guarantee(),)), (inst,))
    c, _ = realize_circuit(sample, random.Random(0), [0], noise_output_prob=0, dead_logic_prob=0)
    assert c.num_latches == 0 and len(c.and_gates) == 0
    assert c.outputs == c.inputs[:1]
    assert isinstance(model_check(c, sample.spec.flatten()), Satisfies)


def test_conditioned_next_response_can_take_reference_shape():
    inst = PatternInstance("cond_next_response", "o1", (("i1", False),), ("i0", True))
    spec = AssumeGuaranteeSpec((inst.assumption(),), (inst.guarantee(),))
    assert spec.flatten() == parse_ltl(REF_PHI)
    shapes = set()
    for seed in range(20):
        c, _ = realize_circuit(SpecSample(spec, (inst,)), random.Random(seed), [0], noise_output_prob=0,
                               dead_logic_prob=0)
        assert isinstance(model_check(c, spec.flatten()), Satisfies)
        latch = c.latches[0]
        gate = c.and_gates[0]
        # and-gate of an input and the inverted latch output, the latch storing i1
        if latch[1] == c.inputs[1] and sorted(gate[1:]) == sorted((c.inputs[0], latch[0] + 1)):
            shapes.add("reference")
    assert shapes == {"reference"}


def test_template_variants_are_all_sound():
    rng = random.Random(9)
    cfg = GenConfig()
    from cnml.datagen import N_VARIANTS
    from cnml.ltl import sample_spec
    for _ in range(300):
        sample = sample_spec(cfg, rng)
        variants = [rng.randrange(N_VARIANTS[p.kind]) for p in sample.patterns]
        c, _ = realize_circuit(sample, rng, variants)
        assert check_pair(c, sample.spec, refute_trials=0) is True


def test_record_round_trip(tmp_path, pairs):
    path = str(tmp_path / "pairs.jsonl")
    write_records(path, pairs)
    back = read_records(path)
    assert [r.to_json() for r in back] == [r.to_json() for r in pairs]
    assert not os.path.exists(path + ".tmp")


def test_record_rejects_mismatched_spec_text(pairs):
    d = pairs[0].to_json()
    d["spec_text"] = "(G i0)"
    with pytest.raises(ValueError):
        PairRecord.from_json(d)


# ---------------------------------------------------------------------------
# external synthesis


def _script(tmp_path, body):
    path = tmp_path / "synth.py"
    path.write_text(f"#!{sys.executable}\nimport sys, time\n{body}\n")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)
    return str(path)


def test_external_stub_round_trip(tmp_path):
    exe = _script(tmp_path, f"print('solver banner')\nsys.stdout.write({REF_AAG!r})")
    spec = AssumeGuaranteeSpec((parse_ltl("G i0"),), (parse_ltl("G ((! i1) -> (X o1))"),))
    c = synthesize_external(spec, ExternalSynthesizer(exe, timeout=20))
    assert c == parse_aag(REF_AAG)
    c2 = synthesize_external(spec, ExternalSynthesizer(exe, args=(), stdin=True, timeout=20))
    assert c2 == c


def test_external_violating_circuit(tmp_path):
    exe = _script(tmp_path, f"sys.stdout.write({REF_AAG!r})")
    spec = AssumeGuaranteeSpec((), (parse_ltl("G o1"),))
    with pytest.raises(SynthesisVerificationError):
        synthesize_external(spec, ExternalSynthesizer(exe, timeout=20))


def test_external_failures_are_distinct(tmp_path):
    spec = AssumeGuaranteeSpec((), (parse_ltl("G o1"),))
    with pytest.raises(SynthesisProcessError):
        synthesize_external(spec, ExternalSynthesizer(str(tmp_path / "missing"), timeout=5))
    with pytest.raises(SynthesisProcessError):
        synthesize_external(spec, ExternalSynthesizer(_script(tmp_path, "sys.exit(4)"), timeout=20))
    with pytest.raises(SynthesisParseError):
        synthesize_external(spec, ExternalSynthesizer(_script(tmp_path, "print('UNREALIZABLE')"), timeout=20))
    with pytest.raises(SynthesisTimeout):
        synthesize_external(spec, ExternalSynthesizer(_script(tmp_path, "time.sleep(10)"), timeout=0.5))


# ---------------------------------------------------------------------------
# augmentation


def test_split_mode_counts(pairs):
    multi = next(p for p in pairs if len(p.spec.guarantees) == 3)
    out = augment_dataset([multi], AugmentConfig(shuffle=False, pad=False, split=True), random.Random(0))
    assert len(out) == 3
    assert all(r.circuit == multi.circuit for r in out)
    assert [r.spec for r in out] == split_spec(multi.spec)


def test_pad_only_mode_keeps_count(pairs):
    out = augment_dataset(pairs, AugmentConfig(shuffle=False, pad=True), random.Random(0))
    assert len(out) == len(pairs)
    assert len({(r.circuit.num_inputs, r.circuit.num_outputs) for r in out}) == 1


def test_augmented_records_reverify(pairs, oracle):
    for cfg in (AugmentConfig(), AugmentConfig(split=True, target_inputs=6, target_outputs=6)):
        for r in augment_dataset(pairs, cfg, random.Random(1)):
            assert oracle(r.circuit, r.spec) is True


# ---------------------------------------------------------------------------
# batches


def test_batches_have_no_duplicates(pairs):
    pool = list(pairs) + list(pairs[:30])  # repeated circuits and specs
    batches = build_batches(pool, 16, random.Random(0))
    assert sum(len(b) for b in batches) == len(pool)
    for b in batches:
        assert len({r.aag_text for r in b.records}) == len(b)
        assert len({r.spec_text for r in b.records}) == len(b)


def test_single_batch_for_distinct_pool(pairs, oracle):
    pool = pairs[:8]
    batches = build_batches(pool, 8, random.Random(0), "oracle", oracle)
    # oracle mode may split the pool; every batch is then free of off-diagonal positives
    assert sum(len(b) for b in batches) == 8
    assert all(off_diagonal_positives(b, oracle) == 0 for b in batches)


def test_oracle_mode_has_zero_false_negatives(pairs, oracle):
    batches = build_batches(pairs, 16, random.Random(2), "oracle", oracle)
    assert all(off_diagonal_positives(b, oracle) == 0 for b in batches)
    assert sum(b.short for b in batches) >= 1


def test_sampled_mode_records_rate(pairs, oracle):
    batches = build_batches(pairs, 16, random.Random(3), "sampled", oracle, sample_cells=10)
    assert all(0.0 <= b.false_negative_rate <= 1.0 for b in batches)
    assert any(b.checked_cells for b in batches)


def test_unknown_filter_mode(pairs):
    with pytest.raises(ValueError):
        build_batches(pairs, 4, random.Random(0), "bogus")


# ---------------------------------------------------------------------------
# retrieval sets


@pytest.mark.parametrize("mode", ["cross", "intra"])
def test_single_positive_invariant(pairs, mode):
    sets = mine_retrieval_sets(pairs, 5, mode, 6, random.Random(4))
    fresh = PairOracle(refute_trials=0)
    for s in sets:
        verdicts = [fresh(c, s.query_spec) for c in s.candidates]
        assert verdicts.count(True) == 1
        assert verdicts.index(True) == s.positive_index
        assert all(v is False for k, v in enumerate(verdicts) if k != s.positive_index)
        if mode == "intra":
            assert render_aag(s.candidates[s.positive_index]) != render_aag(s.query_circuit)


def test_retrieval_file_round_trip(tmp_path, pairs):
    sets = mine_retrieval_sets(pairs, 5, "intra", 3, random.Random(5))
    path = str(tmp_path / "sets.jsonl")
    write_retrieval_sets(path, sets)
    back = read_retrieval_sets(path)
    assert [s.to_json() for s in back] == [s.to_json() for s in sets]


def test_insufficient_distractors(pairs):
    with pytest.raises(ValueError):
        mine_retrieval_sets(pairs[:10], 50, "cross", 1, random.Random(0))


def test_labeled_pairs_are_balanced_and_correct(pairs, oracle):
    lab = labeled_pairs(pairs, 60, random.Random(6), oracle)
    assert sum(y for _, y in lab) == 30
    fresh = PairOracle(refute_trials=0)
    assert all(fresh(r.circuit, r.spec) is bool(y) for r, y in lab)
