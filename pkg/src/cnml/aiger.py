"""ASCII AIGER (aag) circuits: parsing, rendering, simulation, padding.

Literals follow the AIGER convention: ``2*v`` is variable ``v`` and ``2*v+1``
its negation; 0 and 1 are the constants FALSE and TRUE. Latches start FALSE.
Inputs and outputs are named positionally (``i0``, ``i1``, ... / ``o0``, ...)
unless the symbol table says otherwise.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence


class AigerError(ValueError):
    pass


@dataclass(frozen=True)
class Circuit:
    max_var: int
    inputs: tuple[int, ...] = ()
    latches: tuple[tuple[int, int], ...] = ()
    outputs: tuple[int, ...] = ()
    and_gates: tuple[tuple[int, int, int], ...] = ()
    symbols: tuple[tuple[str, int, str], ...] = ()  # (kind, position, name)
    topo_order: tuple[int, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        for name in ("inputs", "outputs"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "latches", tuple(tuple(l) for l in self.latches))
        object.__setattr__(self, "and_gates", tuple(tuple(g) for g in self.and_gates))
        object.__setattr__(self, "symbols", tuple(tuple(s) for s in self.symbols))
        _validate(self)
        object.__setattr__(self, "topo_order", _topological_order(self))

    @property
    def num_inputs(self) -> int:
        return len(self.inputs)

    @property
    def num_latches(self) -> int:
        return len(self.latches)

    @property
    def num_outputs(self) -> int:
        return len(self.outputs)

    def _names(self, kind: str, count: int, default: str) -> list[str]:
        names = [f"{default}{k}" for k in range(count)]
        for k, pos, name in self.symbols:
            if k == kind:
                names[pos] = name
        return names

    @property
    def input_names(self) -> list[str]:
        return self._names("i", self.num_inputs, "i")

    @property
    def output_names(self) -> list[str]:
        return self._names("o", self.num_outputs, "o")

    def initial_state(self) -> tuple[int, ...]:
        return (0,) * self.num_latches


def _validate(c: Circuit) -> None:
    limit = 2 * c.max_var + 1
    defined: dict[int, str] = {}

    def define(lit, what):
        if lit & 1:
            raise AigerError(f"{what} literal {lit} is odd")
        if lit < 2 or lit > limit:
            raise AigerError(f"{what} literal {lit} out of range (M={c.max_var})")
        if lit in defined:
            raise AigerError(f"literal {lit} defined twice ({defined[lit]}, {what})")
        defined[lit] = what

    for lit in c.inputs:
        define(lit, "input")
    for lit, _ in c.latches:
        define(lit, "latch")
    for lhs, _, _ in c.and_gates:
        define(lhs, "and")

    def use(lit, what):
        if lit < 0 or lit > limit:
            raise AigerError(f"{what} literal {lit} out of range (M={c.max_var})")
        if lit > 1 and (lit & ~1) not in defined:
            raise AigerError(f"{what} uses undefined literal {lit}")

    for _, nxt in c.latches:
        use(nxt, "latch next-state")
    for lit in c.outputs:
        use(lit, "output")
    for _, a, b in c.and_gates:
        use(a, "and")
        use(b, "and")
    counts = {"i": c.num_inputs, "l": c.num_latches, "o": c.num_outputs}
    for kind, pos, _ in c.symbols:
        if kind not in counts or not 0 <= pos < counts[kind]:
            raise AigerError(f"symbol {kind}{pos} does not name a wire")


def _topological_order(c: Circuit) -> tuple[int, ...]:
    """Indices into ``and_gates`` such that operands precede their gate."""
    by_lhs = {g[0]: idx for idx, g in enumerate(c.and_gates)}
    state = [0] * len(c.and_gates)  # 0 new, 1 on stack, 2 done
    order: list[int] = []
    for root in range(len(c.and_gates)):
        if state[root]:
            continue
        stack = [(root, 0)]
        state[root] = 1
        while stack:
            idx, k = stack.pop()
            operands = c.and_gates[idx][1:]
            if k < 2:
                stack.append((idx, k + 1))
                child = by_lhs.get(operands[k] & ~1)
                if child is not None:
                    if state[child] == 1:
                        raise AigerError(f"combinational cycle through literal {c.and_gates[child][0]}")
                    if state[child] == 0:
                        state[child] = 1
                        stack.append((child, 0))
            else:
                state[idx] = 2
                order.append(idx)
    return tuple(order)


# ---------------------------------------------------------------------------
# text format


def parse_aag(text: str) -> Circuit:
    lines = text.splitlines()
    if not lines:
        raise AigerError("empty input")
    header = lines[0].split()
    if len(header) != 6 or header[0] != "aag":
        raise AigerError(f"malformed header {lines[0]!r}")
    try:
        m, i, l, o, a = (int(x) for x in header[1:])
    except ValueError:
        raise AigerError(f"malformed header {lines[0]!r}") from None
    if min(m, i, l, o, a) < 0:
        raise AigerError("negative header count")
    if i + l + a > m:
        raise AigerError(f"header M={m} smaller than I+L+A={i + l + a}")
    body = lines[1:]
    need = i + l + o + a
    if len(body) < need:
        raise AigerError(f"header announces {need} definition lines, found {len(body)}")

    def ints(idx, arity, what):
        parts = body[idx].split()
        if len(parts) != arity:
            raise AigerError(f"line {idx + 2}: expected {arity} fields for {what}")
        try:
            return [int(p) for p in parts]
        except ValueError:
            raise AigerError(f"line {idx + 2}: non-integer field in {what}") from None

    pos = 0
    inputs = []
    for _ in range(i):
        inputs.append(ints(pos, 1, "input")[0])
        pos += 1
    latches = []
    for _ in range(l):
        parts = body[pos].split()
        if len(parts) == 3:
            if parts[2] != "0":
                raise AigerError(f"line {pos + 2}: only FALSE latch initialisation is supported")
            parts = parts[:2]
        if len(parts) != 2:
            raise AigerError(f"line {pos + 2}: expected 2 fields for latch")
        try:
            latches.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise AigerError(f"line {pos + 2}: non-integer field in latch") from None
        pos += 1
    outputs = []
    for _ in range(o):
        outputs.append(ints(pos, 1, "output")[0])
        pos += 1
    gates = []
    for _ in range(a):
        gates.append(tuple(ints(pos, 3, "and")))
        pos += 1

    symbols = []
    for idx in range(pos, len(body)):
        line = body[idx]
        if line.startswith("c"):
            break
        if not line.strip():
            continue
        head, _, name = line.partition(" ")
        kind, num = head[:1], head[1:]
        if kind not in ("i", "l", "o") or not num.isdigit() or not name:
            raise AigerError(f"line {idx + 2}: expected symbol entry, found {line!r}")
        symbols.append((kind, int(num), name))
    return Circuit(m, tuple(inputs), tuple(latches), tuple(outputs), tuple(gates), tuple(symbols))


def render_aag(c: Circuit) -> str:
    out = [f"aag {c.max_var} {c.num_inputs} {c.num_latches} {c.num_outputs} {len(c.and_gates)}"]
    out += [str(x) for x in c.inputs]
    out += [f"{a} {b}" for a, b in c.latches]
    out += [str(x) for x in c.outputs]
    out += [f"{a} {b} {d}" for a, b, d in c.and_gates]
    out += [f"{k}{p} {n}" for k, p, n in c.symbols]
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# simulation


def _lit(vals: list[int], lit: int) -> int:
    return vals[lit >> 1] ^ (lit & 1)


def simulate_step(c: Circuit, state: Sequence[int], inputs: Sequence[int]) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """One clock tick: returns (output bits, next latch state)."""
    if len(inputs) != c.num_inputs:
        raise ValueError(f"expected {c.num_inputs} input bits, got {len(inputs)}")
    vals = [0] * (c.max_var + 1)
    for lit, bit in zip(c.inputs, inputs):
        vals[lit >> 1] = 1 if bit else 0
    for (lit, _), bit in zip(c.latches, state):
        vals[lit >> 1] = 1 if bit else 0
    gates = c.and_gates
    for idx in c.topo_order:
        lhs, a, b = gates[idx]
        vals[lhs >> 1] = _lit(vals, a) & _lit(vals, b)
    outs = tuple(_lit(vals, lit) for lit in c.outputs)
    nxt = tuple(_lit(vals, n) for _, n in c.latches)
    return outs, nxt


def simulate(c: Circuit, input_seq: Sequence[Sequence[int]], state: Sequence[int] | None = None):
    """Run ``input_seq`` from ``state`` (default all-FALSE); returns the output rows."""
    s = tuple(state) if state is not None else c.initial_state()
    rows = []
    for x in input_seq:
        out, s = simulate_step(c, s, x)
        rows.append(out)
    return rows


# ---------------------------------------------------------------------------
# restructuring


def reindex(c: Circuit) -> Circuit:
    """Renumber variables as inputs, then latches, then gates in topological order."""
    mapping = {0: 0}
    nxt = 1
    for lit in c.inputs:
        mapping[lit >> 1] = nxt
        nxt += 1
    for lit, _ in c.latches:
        mapping[lit >> 1] = nxt
        nxt += 1
    for idx in c.topo_order:
        mapping[c.and_gates[idx][0] >> 1] = nxt
        nxt += 1

    def m(lit):
        return 2 * mapping[lit >> 1] + (lit & 1)

    return Circuit(
        nxt - 1,
        tuple(m(x) for x in c.inputs),
        tuple((m(a), m(b)) for a, b in c.latches),
        tuple(m(x) for x in c.outputs),
        tuple((m(c.and_gates[i][0]), m(c.and_gates[i][1]), m(c.and_gates[i][2])) for i in c.topo_order),
        c.symbols,
    )


def pad_wires(c: Circuit, target_inputs: int, target_outputs: int) -> Circuit:
    """Add unused inputs and constant-FALSE outputs up to the target counts."""
    if target_inputs < c.num_inputs or target_outputs < c.num_outputs:
        raise ValueError(
            f"cannot pad ({c.num_inputs}, {c.num_outputs}) wires down to ({target_inputs}, {target_outputs})")
    if target_inputs == c.num_inputs and target_outputs == c.num_outputs:
        return c
    extra = target_inputs - c.num_inputs
    new_inputs = c.inputs + tuple(2 * (c.max_var + k + 1) for k in range(extra))
    padded = Circuit(c.max_var + extra, new_inputs, c.latches,
                     c.outputs + (0,) * (target_outputs - c.num_outputs), c.and_gates, c.symbols)
    return reindex(padded) if _is_canonical(c) else padded


def _is_canonical(c: Circuit) -> bool:
    return reindex(c) == c


class AigBuilder:
    """Incremental construction of a circuit from literal-level operations."""

    def __init__(self, num_inputs: int = 0):
        self._next_var = 1
        self.inputs: list[int] = []
        self.latches: list[list[int]] = []
        self.gates: list[tuple[int, int, int]] = []
        self.outputs: list[int] = []
        self._strash: dict[tuple[int, int], int] = {}
        for _ in range(num_inputs):
            self.add_input()

    def _fresh(self) -> int:
        lit = 2 * self._next_var
        self._next_var += 1
        return lit

    def add_input(self) -> int:
        lit = self._fresh()
        self.inputs.append(lit)
        return lit

    def input(self, k: int) -> int:
        return self.inputs[k]

    def add_latch(self, next_lit: int | None = None) -> int:
        lit = self._fresh()
        self.latches.append([lit, 0 if next_lit is None else next_lit])
        return lit

    def set_next(self, latch_lit: int, next_lit: int) -> None:
        for entry in self.latches:
            if entry[0] == latch_lit:
                entry[1] = next_lit
                return
        raise KeyError(latch_lit)

    def and_(self, a: int, b: int, share: bool = True) -> int:
        if a == 0 or b == 0 or a == (b ^ 1):
            return 0
        if a == 1:
            return b
        if b == 1 or a == b:
            return a
        key = (min(a, b), max(a, b))
        if share and key in self._strash:
            return self._strash[key]
        lhs = self._fresh()
        self.gates.append((lhs, a, b))
        self._strash[key] = lhs
        return lhs

    def or_(self, a: int, b: int) -> int:
        return self.and_(a ^ 1, b ^ 1) ^ 1

    def buffer(self, a: int) -> int:
        """A redundant gate computing ``a`` (AND with itself via TRUE is folded, so use a & a)."""
        lhs = self._fresh()
        self.gates.append((lhs, a, a))
        return lhs

    def add_output(self, lit: int) -> None:
        self.outputs.append(lit)

    def build(self, canonical: bool = True) -> Circuit:
        c = Circuit(self._next_var - 1, tuple(self.inputs), tuple(tuple(l) for l in self.latches),
                    tuple(self.outputs), tuple(self.gates))
        return reindex(c) if canonical else c


# ---------------------------------------------------------------------------
# graph view

NODE_LABELS = ("const", "input", "latch", "and", "output")


@dataclass(frozen=True)
class LabeledGraph:
    labels: tuple[str, ...]
    edges: tuple[tuple[int, int, str], ...]  # (src, dst, "plain" | "inverted")

    def neighborhoods(self) -> list[tuple[list[tuple[str, int]], list[tuple[str, int]]]]:
        """Per node: (incoming (polarity, src), outgoing (polarity, dst))."""
        nb = [([], []) for _ in self.labels]
        for s, d, pol in self.edges:
            nb[d][0].append((pol, s))
            nb[s][1].append((pol, d))
        return nb


def to_labeled_graph(c: Circuit) -> LabeledGraph:
    """Graph with a node per input, latch, gate and output tap.

    A single constant node is added when some wire reads a constant, or when
    the circuit has no other node.
    """
    labels: list[str] = []
    node_of_var: dict[int, int] = {}
    for lit in c.inputs:
        node_of_var[lit >> 1] = len(labels)
        labels.append("input")
    for lit, _ in c.latches:
        node_of_var[lit >> 1] = len(labels)
        labels.append("latch")
    for lhs, _, _ in c.and_gates:
        node_of_var[lhs >> 1] = len(labels)
        labels.append("and")
    out_nodes = []
    for _ in c.outputs:
        out_nodes.append(len(labels))
        labels.append("output")

    uses = [(a, node_of_var[lhs >> 1]) for lhs, a0, b0 in c.and_gates for a in (a0, b0)]
    uses += [(n, node_of_var[lit >> 1]) for lit, n in c.latches]
    uses += list(zip(c.outputs, out_nodes))
    if any(lit < 2 for lit, _ in uses) or not labels:
        node_of_var[0] = len(labels)
        labels.append("const")
    edges = tuple((node_of_var[lit >> 1], dst, "inverted" if lit & 1 else "plain") for lit, dst in uses)
    return LabeledGraph(tuple(labels), edges)


def random_circuit(rng: random.Random, num_inputs: int, num_latches: int, num_outputs: int,
                   num_gates: int) -> Circuit:
    """A random well-formed circuit (gates only read earlier literals)."""
    b = AigBuilder(num_inputs)
    latch_lits = [b.add_latch() for _ in range(num_latches)]
    pool = [0, 1] + b.inputs + latch_lits

    def pick():
        return rng.choice(pool) ^ rng.randint(0, 1) if len(pool) > 2 else rng.randint(0, 1)

    for _ in range(num_gates):
        lhs = b._fresh()
        b.gates.append((lhs, pick(), pick()))
        pool.append(lhs)
    for lit in latch_lits:
        b.set_next(lit, pick())
    for _ in range(num_outputs):
        b.add_output(pick())
    return b.build()
