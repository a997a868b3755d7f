"""Explicit-state LTL model checking of AIGER circuits.

The negated property is translated to a generalized Büchi automaton with the
on-the-fly tableau of Gerth, Peled, Vardi and Wolper, degeneralized with a
counter, and composed with the reachable latch-state graph of the circuit.
Emptiness of the product is decided by nested depth-first search; an
independent SCC-based check is kept alongside as an oracle.

Letters are read on entering an automaton state: a run
``init -s0-> q0 -s1-> q1 ...`` accepts the word ``s0 s1 ...`` when every
acceptance set is visited infinitely often.
"""

from __future__ import annotations

import random
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

from .aiger import Circuit, simulate_step
from .ltl import (And, Atom, Eventually, FalseF, Formula, Globally, Implies, Lasso, Next, Not, Or,
                  Release, TrueF, Until, atoms, eval_on_lasso)


class BudgetExceeded(Exception):
    def __init__(self, explored: int, reason: str = "state budget"):
        super().__init__(f"{reason} exhausted after {explored} states")
        self.explored = explored


@dataclass
class Limits:
    max_states: int = 1_000_000
    timeout: float = 30.0
    max_automaton_states: int = 100_000


class _Budget:
    def __init__(self, limits: Limits | None):
        self.limits = limits or Limits()
        self.deadline = time.monotonic() + self.limits.timeout
        self.count = 0

    def tick(self) -> None:
        self.count += 1
        if self.count > self.limits.max_states:
            raise BudgetExceeded(self.count)
        if not self.count & 1023 and time.monotonic() > self.deadline:
            raise BudgetExceeded(self.count, "time budget")


# ---------------------------------------------------------------------------
# negation normal form over interned nodes
#
# node kinds: T, F, AP(name, positive), AND, OR, X, U, R

class _Nnf:
    def __init__(self):
        self.nodes: list[tuple] = []
        self.index: dict[tuple, int] = {}

    def mk(self, *node) -> int:
        idx = self.index.get(node)
        if idx is None:
            idx = len(self.nodes)
            self.nodes.append(node)
            self.index[node] = idx
        return idx

    def convert(self, f: Formula, positive: bool = True) -> int:
        mk, conv = self.mk, self.convert
        if isinstance(f, TrueF):
            return mk("T") if positive else mk("F")
        if isinstance(f, FalseF):
            return mk("F") if positive else mk("T")
        if isinstance(f, Atom):
            return mk("AP", f.name, positive)
        if isinstance(f, Not):
            return conv(f.arg, not positive)
        if isinstance(f, Next):
            return mk("X", conv(f.arg, positive))
        if isinstance(f, And):
            return mk("AND" if positive else "OR", conv(f.left, positive), conv(f.right, positive))
        if isinstance(f, Or):
            return mk("OR" if positive else "AND", conv(f.left, positive), conv(f.right, positive))
        if isinstance(f, Implies):
            return mk("OR" if positive else "AND", conv(f.left, not positive), conv(f.right, positive))
        if isinstance(f, Until):
            return mk("U" if positive else "R", conv(f.left, positive), conv(f.right, positive))
        if isinstance(f, Release):
            return mk("R" if positive else "U", conv(f.left, positive), conv(f.right, positive))
        if isinstance(f, Eventually):
            return mk("U", mk("T"), conv(f.arg, True)) if positive else mk("R", mk("F"), conv(f.arg, False))
        if isinstance(f, Globally):
            return mk("R", mk("F"), conv(f.arg, True)) if positive else mk("U", mk("T"), conv(f.arg, False))
        raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# automata


@dataclass
class BuchiAutomaton:
    """State 0 is the initial pseudo-state; it carries no guard.

    ``guards[q]`` is a pair of proposition sets (must hold, must not hold) that
    the letter read when entering ``q`` has to satisfy.
    """

    guards: list[tuple[frozenset, frozenset]]
    successors: list[list[int]]
    acceptance: list[frozenset]
    names: list = field(default_factory=list)

    @property
    def num_states(self) -> int:
        return len(self.successors)

    initial = 0

    def accepts_letter(self, q: int, letter: frozenset) -> bool:
        pos, neg = self.guards[q]
        return pos <= letter and not (neg & letter)

    def degeneralize(self) -> "BuchiAutomaton":
        """Counter construction; the result has a single acceptance set."""
        k = len(self.acceptance)
        if k <= 1:
            acc = self.acceptance[0] if k else frozenset(range(1, self.num_states))
            return BuchiAutomaton(list(self.guards), [list(s) for s in self.successors], [frozenset(acc)],
                                  list(self.names) or list(range(self.num_states)))
        index = {(0, 0): 0}
        order = [(0, 0)]
        succ: list[list[int]] = []
        i = 0
        while i < len(order):
            q, c = order[i]
            c2 = (c + 1) % k if q in self.acceptance[c] else c
            row = []
            for q2 in self.successors[q]:
                key = (q2, c2)
                if key not in index:
                    index[key] = len(order)
                    order.append(key)
                row.append(index[key])
            succ.append(row)
            i += 1
        accepting = frozenset(idx for (q, c), idx in index.items() if c == k - 1 and q in self.acceptance[k - 1])
        return BuchiAutomaton([self.guards[q] for q, _ in order], succ, [accepting], order)


def ltl_to_buchi(f: Formula, max_states: int = 100_000) -> BuchiAutomaton:
    """Generalized Büchi automaton accepting exactly the models of ``f``."""
    nnf = _Nnf()
    root = nnf.convert(f)
    nodes = nnf.nodes
    until_nodes = [i for i, n in enumerate(nodes) if n[0] == "U"]

    # tableau nodes keyed by (old, next); incoming edges accumulate
    key_to_id: dict[tuple[frozenset, frozenset], int] = {}
    olds: list[frozenset] = [frozenset()]
    incoming: list[set[int]] = [set()]
    pending = [({0}, frozenset([root]), frozenset(), frozenset())]

    def complement(i):
        n = nodes[i]
        if n[0] == "AP":
            return nnf.index.get(("AP", n[1], not n[2]))
        if n[0] == "T":
            return nnf.index.get(("F",))
        if n[0] == "F":
            return nnf.index.get(("T",))
        return None

    while pending:
        inc, new, old, nxt = pending.pop()
        if not new:
            key = (old, nxt)
            q = key_to_id.get(key)
            if q is not None:
                incoming[q] |= inc
                continue
            q = len(olds)
            if q > max_states:
                raise BudgetExceeded(q, "automaton size")
            key_to_id[key] = q
            olds.append(old)
            incoming.append(set(inc))
            pending.append(({q}, nxt, frozenset(), frozenset()))
            continue
        eta = next(iter(new))
        new = new - {eta}
        if eta in old:
            pending.append((inc, new, old, nxt))
            continue
        kind = nodes[eta][0]
        if kind in ("AP", "T", "F"):
            if kind == "F":
                continue
            neg = complement(eta)
            if neg is not None and neg in old:
                continue
            pending.append((inc, new, old | {eta}, nxt))
        elif kind == "AND":
            _, a, b = nodes[eta]
            pending.append((inc, new | ({a, b} - old), old | {eta}, nxt))
        elif kind == "X":
            pending.append((inc, new, old | {eta}, nxt | {nodes[eta][1]}))
        else:
            _, a, b = nodes[eta]
            old2 = old | {eta}
            if kind == "OR":
                first, second, carry = {a}, {b}, False
            elif kind == "U":
                first, second, carry = {a}, {b}, True
            else:  # R
                first, second, carry = {b}, {a, b}, True
            pending.append((inc, new | (first - old), old2, nxt | {eta} if carry else nxt))
            pending.append((inc, new | (second - old), old2, nxt))

    n = len(olds)
    succ: list[list[int]] = [[] for _ in range(n)]
    for q in range(1, n):
        for p in sorted(incoming[q]):
            succ[p].append(q)
    guards: list[tuple[frozenset, frozenset]] = [(frozenset(), frozenset())]
    for q in range(1, n):
        pos = frozenset(nodes[i][1] for i in olds[q] if nodes[i][0] == "AP" and nodes[i][2])
        negs = frozenset(nodes[i][1] for i in olds[q] if nodes[i][0] == "AP" and not nodes[i][2])
        guards.append((pos, negs))
    acceptance = []
    for u in until_nodes:
        target = nodes[u][2]
        acceptance.append(frozenset(q for q in range(1, n) if u not in olds[q] or target in olds[q]))
    return BuchiAutomaton(guards, succ, acceptance, list(range(n)))


# ---------------------------------------------------------------------------
# emptiness


class Graph:
    """Product graph interface consumed by the emptiness checks."""

    def initial_states(self) -> Iterable[Hashable]:
        raise NotImplementedError

    def successors(self, s) -> list[tuple[object, Hashable]]:
        """(edge label, successor) pairs."""
        raise NotImplementedError

    def is_accepting(self, s) -> bool:
        raise NotImplementedError


class ExplicitGraph(Graph):
    def __init__(self, initial: Sequence, edges: dict, accepting: Iterable):
        self.initial = list(initial)
        self.edges = edges
        self.accepting = set(accepting)

    def initial_states(self):
        return self.initial

    def successors(self, s):
        return self.edges.get(s, [])

    def is_accepting(self, s):
        return s in self.accepting


@dataclass
class AcceptingLasso:
    prefix: list        # edge labels from an initial state to the loop entry
    loop: list          # edge labels around the cycle (nonempty)
    prefix_states: list  # states before each prefix edge, followed by the loop entry
    loop_states: list   # states before each loop edge


def check_emptiness_ndfs(g: Graph, limits: Limits | None = None) -> AcceptingLasso | None:
    """Nested DFS; returns an accepting lasso, or None if the language is empty."""
    budget = _Budget(limits)
    visited1: set = set()
    visited2: set = set()
    for s0 in g.initial_states():
        if s0 in visited1:
            continue
        visited1.add(s0)
        budget.tick()
        # stack entries: [state, successor list, next index, label of edge into state]
        stack = [[s0, g.successors(s0), 0, None]]
        on_stack = {s0: 0}
        while stack:
            frame = stack[-1]
            state, succs, k = frame[0], frame[1], frame[2]
            if k < len(succs):
                frame[2] += 1
                label, t = succs[k]
                if t not in visited1:
                    visited1.add(t)
                    budget.tick()
                    on_stack[t] = len(stack)
                    stack.append([t, g.successors(t), 0, label])
                continue
            if g.is_accepting(state):
                found = _inner_dfs(g, state, on_stack, visited2, budget)
                if found is not None:
                    hit, path = found
                    return _ndfs_lasso(stack, on_stack[hit], path)
            stack.pop()
            del on_stack[state]
    return None


def _inner_dfs(g, seed, on_stack, visited2, budget):
    """Search from ``seed`` for a state on the outer stack; returns (hit, edges)."""
    if seed in visited2:
        return None
    visited2.add(seed)
    stack = [[seed, g.successors(seed), 0]]
    path: list[tuple[object, Hashable]] = []
    while stack:
        frame = stack[-1]
        if frame[2] < len(frame[1]):
            label, t = frame[1][frame[2]]
            frame[2] += 1
            if t in on_stack:
                return t, path + [(label, t)]
            if t not in visited2:
                visited2.add(t)
                budget.tick()
                path.append((label, t))
                stack.append([t, g.successors(t), 0])
            continue
        stack.pop()
        if path:
            path.pop()
    return None


def _ndfs_lasso(stack, hit_index, path) -> AcceptingLasso:
    states = [f[0] for f in stack]
    labels = [f[3] for f in stack[1:]]  # labels[i] is the edge states[i] -> states[i+1]
    prefix = labels[:hit_index]
    loop = labels[hit_index:] + [lab for lab, _ in path]
    loop_states = states[hit_index:] + [t for _, t in path[:-1]]
    return AcceptingLasso(prefix, loop, states[:hit_index + 1], loop_states)


def check_emptiness_scc(g: Graph, limits: Limits | None = None) -> AcceptingLasso | None:
    """Tarjan SCC decomposition of the reachable graph; nonempty iff some
    nontrivial SCC holds an accepting state."""
    budget = _Budget(limits)
    index: dict = {}
    low: dict = {}
    comp_stack: list = []
    on_comp: set = set()
    succ_cache: dict = {}
    counter = 0
    parent: dict = {}
    for s0 in g.initial_states():
        if s0 in index:
            continue
        parent.setdefault(s0, None)
        work = [(s0, 0)]
        while work:
            v, k = work.pop()
            if k == 0:
                index[v] = low[v] = counter
                counter += 1
                budget.tick()
                comp_stack.append(v)
                on_comp.add(v)
                succ_cache[v] = g.successors(v)
            succs = succ_cache[v]
            recurse = False
            while k < len(succs):
                _, w = succs[k]
                k += 1
                if w not in index:
                    parent[w] = (v, succs[k - 1][0])
                    work.append((v, k))
                    work.append((w, 0))
                    recurse = True
                    break
                if w in on_comp:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = comp_stack.pop()
                    on_comp.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                found = _scc_witness(g, comp, succ_cache, parent)
                if found is not None:
                    return found
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
    return None


def _scc_witness(g, comp, succ_cache, parent) -> AcceptingLasso | None:
    members = set(comp)
    nontrivial = len(comp) > 1 or any(t == comp[0] for _, t in succ_cache[comp[0]])
    if not nontrivial:
        return None
    acc = next((s for s in comp if g.is_accepting(s)), None)
    if acc is None:
        return None
    # prefix along DFS tree parents, loop by BFS inside the component
    prefix_states, prefix = [acc], []
    s = acc
    while parent.get(s) is not None:
        p, lab = parent[s]
        prefix_states.append(p)
        prefix.append(lab)
        s = p
    prefix_states.reverse()
    prefix.reverse()
    back: dict = {}
    queue = deque()
    for lab, t in succ_cache[acc]:
        if t in members and t not in back:
            back[t] = (acc, lab)
            queue.append(t)
    while acc not in back:
        v = queue.popleft()
        for lab, t in succ_cache[v]:
            if t in members and t not in back:
                back[t] = (v, lab)
                queue.append(t)
    loop_states, loop = [], []
    s = acc
    while True:
        p, lab = back[s]
        loop_states.append(p)
        loop.append(lab)
        s = p
        if s == acc:
            break
    loop_states.reverse()
    loop.reverse()
    return AcceptingLasso(prefix, loop, prefix_states, loop_states)


# ---------------------------------------------------------------------------
# products


class LassoProduct(Graph):
    """Product of a fixed lasso word with a (degeneralized) automaton."""

    def __init__(self, ba: BuchiAutomaton, w: Lasso):
        self.ba, self.w = ba, w
        self.accepting = ba.acceptance[0]

    def initial_states(self):
        return [(0, self.ba.initial)]

    def successors(self, s):
        i, p = s
        letter = self.w.letter(i)
        j = self.w.successor(i)
        return [(i, (j, q)) for q in self.ba.successors[p] if self.ba.accepts_letter(q, letter)]

    def is_accepting(self, s):
        return s[1] in self.accepting


def lasso_in_language(ba: BuchiAutomaton, w: Lasso, emptiness=check_emptiness_ndfs) -> bool:
    dba = ba if len(ba.acceptance) == 1 else ba.degeneralize()
    return emptiness(LassoProduct(dba, w)) is not None


class CircuitProduct(Graph):
    """Reachable latch states of ``c`` composed with automaton states.

    Only inputs and latches in the cone of influence of the property matter;
    the rest are held at FALSE.
    """

    def __init__(self, c: Circuit, ba: BuchiAutomaton, props: Iterable[str]):
        self.c, self.ba = c, ba
        self.accepting = ba.acceptance[0]
        props = set(props)
        in_names, out_names = c.input_names, c.output_names
        outs = [k for k, n in enumerate(out_names) if n in props]
        self.out_props = [(k, out_names[k]) for k in outs]
        rel_in, rel_latch = _cone_of_influence(c, [c.outputs[k] for k in outs])
        rel_in |= {k for k, n in enumerate(in_names) if n in props}
        self.rel_inputs = sorted(rel_in)
        self.rel_latches = sorted(rel_latch)
        self.in_names = in_names
        self.in_props = {k: in_names[k] for k in self.rel_inputs if in_names[k] in props}
        self._step_cache: dict = {}

    def initial_states(self):
        return [(self.c.initial_state(), self.ba.initial)]

    def _steps(self, state):
        hit = self._step_cache.get(state)
        if hit is not None:
            return hit
        rows = []
        n = len(self.rel_inputs)
        mask_latch = self.rel_latches
        for bits in range(1 << n):
            x = [0] * self.c.num_inputs
            for j, k in enumerate(self.rel_inputs):
                x[k] = (bits >> j) & 1
            out, nxt = simulate_step(self.c, state, x)
            if len(mask_latch) != len(nxt):
                nxt = tuple(nxt[k] if k in mask_latch else 0 for k in range(len(nxt)))
            letter = frozenset([name for k, name in self.in_props.items() if x[k]]
                               + [name for k, name in self.out_props if out[k]])
            rows.append((tuple(x), letter, nxt))
        self._step_cache[state] = rows
        return rows

    def successors(self, s):
        state, p = s
        out = []
        for x, letter, nxt in self._steps(state):
            for q in self.ba.successors[p]:
                if self.ba.accepts_letter(q, letter):
                    out.append((x, (nxt, q)))
        return out

    def is_accepting(self, s):
        return s[1] in self.accepting


def _cone_of_influence(c: Circuit, roots: Iterable[int]) -> tuple[set[int], set[int]]:
    gate_of = {lhs >> 1: (a, b) for lhs, a, b in c.and_gates}
    input_of = {lit >> 1: k for k, lit in enumerate(c.inputs)}
    latch_of = {lit >> 1: (k, nxt) for k, (lit, nxt) in enumerate(c.latches)}
    seen: set[int] = set()
    ins: set[int] = set()
    lats: set[int] = set()
    stack = [r >> 1 for r in roots]
    while stack:
        v = stack.pop()
        if v in seen or v == 0:
            continue
        seen.add(v)
        if v in gate_of:
            a, b = gate_of[v]
            stack += [a >> 1, b >> 1]
        elif v in input_of:
            ins.add(input_of[v])
        elif v in latch_of:
            k, nxt = latch_of[v]
            lats.add(k)
            stack.append(nxt >> 1)
    return ins, lats


# ---------------------------------------------------------------------------
# verdicts


class Verdict:
    name = "?"


@dataclass(frozen=True)
class Satisfies(Verdict):
    name = "SAT"


@dataclass(frozen=True)
class Violates(Verdict):
    witness: Lasso
    name = "UNSAT"


@dataclass(frozen=True)
class ResourceLimit(Verdict):
    states_explored: int
    name = "LIMIT"


def model_check(c: Circuit, f: Formula, limits: Limits | None = None, algorithm: str = "ndfs") -> Verdict:
    """Decide whether every input trace of ``c`` satisfies ``f``."""
    limits = limits or Limits()
    names = set(c.input_names) | set(c.output_names)
    unknown = atoms(f) - names
    if unknown:
        raise ValueError(f"unknown propositions: {sorted(unknown)}")
    try:
        ba = ltl_to_buchi(Not(f), limits.max_automaton_states).degeneralize()
    except BudgetExceeded as e:
        return ResourceLimit(e.explored)
    product = CircuitProduct(c, ba, atoms(f))
    check = {"ndfs": check_emptiness_ndfs, "scc": check_emptiness_scc}[algorithm]
    try:
        found = check(product, limits)
    except BudgetExceeded as e:
        return ResourceLimit(e.explored)
    if found is None:
        return Satisfies()
    names_in = c.input_names
    to_set = lambda x: frozenset(names_in[k] for k, bit in enumerate(x) if bit)
    witness = Lasso(tuple(map(to_set, found.prefix)), tuple(map(to_set, found.loop)), frozenset(names_in))
    return Violates(witness)


def circuit_trace(c: Circuit, w: Lasso) -> Lasso:
    """The lasso of full input/output valuations produced by feeding ``w`` to ``c``."""
    in_names, out_names = c.input_names, c.output_names
    p, period = len(w.prefix), len(w.loop)
    seen: dict = {}
    letters = []
    state = c.initial_state()
    t = 0
    while True:
        if t >= p:
            key = (state, (t - p) % period)
            if key in seen:
                start = seen[key]
                return Lasso(tuple(letters[:start]), tuple(letters[start:]),
                             frozenset(in_names) | frozenset(out_names))
            seen[key] = t
        letter = w.letter(t)
        x = [1 if n in letter else 0 for n in in_names]
        out, state = simulate_step(c, state, x)
        letters.append(frozenset(letter) | frozenset(n for n, bit in zip(out_names, out) if bit))
        t += 1


def validate_witness(c: Circuit, f: Formula, w: Lasso) -> bool:
    """True when feeding the input lasso ``w`` to ``c`` falsifies ``f``."""
    return eval_on_lasso(Not(f), circuit_trace(c, w))


def find_violation_by_simulation(c: Circuit, f: Formula, rng: random.Random, trials: int = 32,
                                 max_prefix: int = 4, max_loop: int = 4) -> Lasso | None:
    """Cheap refutation: random input lassos; a hit is a genuine counterexample."""
    names = c.input_names
    for _ in range(trials):
        bias = rng.choice((0.2, 0.5, 0.8))
        pre = tuple(frozenset(n for n in names if rng.random() < bias) for _ in range(rng.randint(0, max_prefix)))
        loop = tuple(frozenset(n for n in names if rng.random() < bias) for _ in range(rng.randint(1, max_loop)))
        w = Lasso(pre, loop, frozenset(names))
        if validate_witness(c, f, w):
            return w
    return None


def satisfies(c: Circuit, f: Formula, limits: Limits | None = None, rng: random.Random | None = None,
              trials: int = 16) -> bool | None:
    """Three-valued check with a simulation pre-pass; None on resource limit."""
    if rng is not None and trials and find_violation_by_simulation(c, f, rng, trials) is not None:
        return False
    v = model_check(c, f, limits)
    if isinstance(v, ResourceLimit):
        return None
    return isinstance(v, Satisfies)
