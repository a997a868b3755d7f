import random
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from cnml.aiger import (AigBuilder, AigerError, Circuit, parse_aag, pad_wires, random_circuit, reindex,
                        render_aag, simulate, simulate_step, to_labeled_graph)
from cnml.evalkit import wl_kernel_similarity

from .conftest import REF_AAG


def circuits(max_inputs=3, max_latches=3, max_outputs=3, max_gates=8):
    def build(seed):
        rng = random.Random(seed)
        return random_circuit(rng, rng.randint(0, max_inputs), rng.randint(0, max_latches),
                              rng.randint(0, max_outputs), rng.randint(0, max_gates))
    return st.integers(0, 2**32 - 1).map(build)


def eval_reference(text: str, state, inputs):
    """Independent evaluator: repeatedly resolves gate equations from the raw
    aag lines until every variable has a value."""
    lines = text.splitlines()
    m, i, l, o, a = map(int, lines[0].split()[1:])
    body = lines[1:]
    val = {0: 0}
    for k in range(i):
        val[int(body[k]) // 2] = inputs[k]
    latches = [tuple(map(int, body[i + k].split()[:2])) for k in range(l)]
    for k, (lit, _) in enumerate(latches):
        val[lit // 2] = state[k]
    gates = [tuple(map(int, body[i + l + o + k].split())) for k in range(a)]

    def lit_val(x):
        return val[x // 2] ^ (x & 1)

    pending = list(gates)
    while pending:
        rest = [g for g in pending if not (g[1] // 2 in val and g[2] // 2 in val)]
        for g in pending:
            if g not in rest:
                val[g[0] // 2] = lit_val(g[1]) & lit_val(g[2])
        assert len(rest) < len(pending)
        pending = rest
    outs = tuple(lit_val(int(body[i + l + k])) for k in range(o))
    nxt = tuple(lit_val(n) for _, n in latches)
    return outs, nxt


# ---------------------------------------------------------------------------
# parsing


def test_parse_reference_circuit(ref_circuit):
    assert (ref_circuit.max_var, ref_circuit.num_inputs, ref_circuit.num_latches, ref_circuit.num_outputs, len(ref_circuit.and_gates)) == (4, 2, 1, 1, 1)
    assert ref_circuit.inputs == (2, 4)
    assert ref_circuit.latches == ((6, 4),)
    assert ref_circuit.outputs == (8,)
    assert ref_circuit.and_gates == ((8, 2, 7),)
    assert ref_circuit.input_names == ["i0", "i1"]
    assert ref_circuit.output_names == ["o1"]
    assert render_aag(ref_circuit) == REF_AAG


def test_parse_empty_circuit():
    c = parse_aag("aag 0 0 0 0 0\n")
    assert (c.num_inputs, c.num_latches, c.num_outputs, len(c.and_gates)) == (0, 0, 0, 0)
    assert render_aag(c) == "aag 0 0 0 0 0\n"


def test_comment_section_is_ignored():
    assert parse_aag(REF_AAG + "c\nanything goes here\n") == parse_aag(REF_AAG)


def test_latch_reset_field():
    assert parse_aag("aag 1 0 1 0 0\n2 3 0\n").latches == ((2, 3),)
    with pytest.raises(AigerError):
        parse_aag("aag 1 0 1 0 0\n2 3 1\n")


@pytest.mark.parametrize("text", [
    "",
    "aig 1 1 0 0 0\n2\n",
    "aag 1 1 0 0\n2\n",
    "aag x 1 0 0 0\n2\n",
    "aag 1 2 0 0 0\n2\n",            # too few lines
    "aag 1 1 0 0 0\n3\n",            # odd input literal
    "aag 2 2 0 0 0\n2\n2\n",         # redefinition
    "aag 2 1 0 1 1\n2\n6\n6 2 2\n",  # literal beyond M
    "aag 3 1 0 0 2\n2\n4 2 6\n6 2 4\n",  # combinational cycle
    "aag 2 1 0 1 0\n2\n4\n",         # undefined output literal
    "aag 0 1 0 0 0\n2\n",            # I + L + A > M
])
def test_malformed_inputs(text):
    with pytest.raises(AigerError):
        parse_aag(text)


@given(circuits())
def test_round_trip(c):
    text = render_aag(c)
    assert parse_aag(text) == c
    assert render_aag(parse_aag(text)) == text


def test_round_trip_bulk():
    rng = random.Random(0)
    for _ in range(1000):
        c = random_circuit(rng, rng.randint(0, 4), rng.randint(0, 3), rng.randint(0, 4), rng.randint(0, 10))
        assert parse_aag(render_aag(c)) == c


# ---------------------------------------------------------------------------
# simulation


def test_simulate_reference_circuit(ref_circuit):
    assert simulate_step(ref_circuit, (0,), (1, 0)) == ((1,), (0,))
    assert simulate_step(ref_circuit, (1,), (1, 1)) == ((0,), (1,))


def test_constant_true_output():
    c = Circuit(1, (2,), (), (1, 0), ())
    for x in (0, 1):
        assert simulate_step(c, (), (x,))[0] == (1, 0)


def test_latch_delays_by_one_step(ref_circuit):
    # o = i0 & !prev(i1)
    rows = simulate(ref_circuit, [(1, 1), (1, 0), (1, 0), (1, 1)])
    assert [r[0] for r in rows] == [1, 0, 1, 1]


@given(circuits(), st.integers(0, 2**32 - 1))
def test_simulation_matches_reference(c, seed):
    rng = random.Random(seed)
    text = render_aag(c)
    state = c.initial_state()
    for _ in range(10):
        x = tuple(rng.randint(0, 1) for _ in range(c.num_inputs))
        got = simulate_step(c, state, x)
        assert got == eval_reference(text, state, x)
        state = got[1]


def test_simulation_is_order_independent_of_gate_lines():
    rng = random.Random(4)
    for _ in range(50):
        c = random_circuit(rng, 2, 2, 2, 8)
        lines = render_aag(c).splitlines()
        k = 1 + c.num_inputs + c.num_latches + c.num_outputs
        head, gates = lines[:k], lines[k:]
        rng.shuffle(gates)
        d = parse_aag("\n".join(head + gates) + "\n")
        state_c = state_d = c.initial_state()
        for _ in range(20):
            x = (rng.randint(0, 1), rng.randint(0, 1))
            oc, state_c = simulate_step(c, state_c, x)
            od, state_d = simulate_step(d, state_d, x)
            assert oc == od


# ---------------------------------------------------------------------------
# padding and restructuring


def test_pad_shape(ref_circuit):
    c = pad_wires(ref_circuit, 4, 2)
    assert (c.num_inputs, c.num_outputs) == (4, 2)
    assert pad_wires(ref_circuit, 2, 1) == ref_circuit
    with pytest.raises(ValueError):
        pad_wires(ref_circuit, 1, 1)


def test_pad_preserves_original_wires():
    rng = random.Random(8)
    for _ in range(100):
        c = random_circuit(rng, rng.randint(0, 3), rng.randint(0, 3), rng.randint(0, 3), rng.randint(0, 8))
        d = pad_wires(c, c.num_inputs + rng.randint(0, 3), c.num_outputs + rng.randint(0, 3))
        sc, sd = c.initial_state(), d.initial_state()
        for _ in range(100):
            x = [rng.randint(0, 1) for _ in range(d.num_inputs)]
            oc, sc = simulate_step(c, sc, x[:c.num_inputs])
            od, sd = simulate_step(d, sd, x)
            assert od[:c.num_outputs] == oc
            assert all(v == 0 for v in od[c.num_outputs:])


@given(circuits())
def test_reindex_preserves_behavior(c):
    d = reindex(c)
    rng = random.Random(0)
    sc, sd = c.initial_state(), d.initial_state()
    for _ in range(10):
        x = [rng.randint(0, 1) for _ in range(c.num_inputs)]
        oc, sc = simulate_step(c, sc, x)
        od, sd = simulate_step(d, sd, x)
        assert oc == od


def test_builder_folds_constants_and_shares_structure():
    b = AigBuilder(2)
    x, y = b.input(0), b.input(1)
    assert b.and_(x, 0) == 0
    assert b.and_(x, 1) == x
    assert b.and_(x, x ^ 1) == 0
    g = b.and_(x, y)
    assert b.and_(y, x) == g
    b.add_output(b.or_(x, y))
    c = b.build()
    for i0 in (0, 1):
        for i1 in (0, 1):
            assert simulate_step(c, (), (i0, i1))[0] == (i0 | i1,)


# ---------------------------------------------------------------------------
# graph view


def test_reference_circuit_graph(ref_circuit):
    g = to_labeled_graph(ref_circuit)
    assert Counter(g.labels) == Counter({"input": 2, "latch": 1, "and": 1, "output": 1})
    assert len(g.edges) == 4
    inverted = [(g.labels[s], g.labels[d]) for s, d, pol in g.edges if pol == "inverted"]
    assert inverted == [("latch", "and")]


def test_empty_graph_has_constant_node():
    g = to_labeled_graph(parse_aag("aag 0 0 0 0 0\n"))
    assert g.labels == ("const",)


def test_graph_invariant_under_gate_reordering():
    rng = random.Random(21)
    for _ in range(30):
        c = random_circuit(rng, 3, 2, 2, 8)
        lines = render_aag(c).splitlines()
        k = 1 + c.num_inputs + c.num_latches + c.num_outputs
        gates = lines[k:]
        rng.shuffle(gates)
        d = parse_aag("\n".join(lines[:k] + gates) + "\n")
        gc, gd = to_labeled_graph(c), to_labeled_graph(d)
        assert len(gc.labels) == len(gd.labels) and len(gc.edges) == len(gd.edges)
        assert wl_kernel_similarity(gc, gd, 3) == pytest.approx(1.0)
