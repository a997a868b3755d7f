"""LTL formulas: syntax tree, text format, trace semantics and spec generation.

Concrete syntax (tightest binding first)::

    unary   ! G F X
    binary  U R          (right-associative)
            &
            |
            -> <->       (right-associative)

Constants are ``true`` and ``false``. ``render_ltl`` wraps every compound
subformula in parentheses, so its output re-parses to the same tree.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, Union


class Formula:
    """Base class of all formula nodes."""

    __slots__ = ()

    def children(self) -> tuple["Formula", ...]:
        return ()


@dataclass(frozen=True)
class TrueF(Formula):
    pass


@dataclass(frozen=True)
class FalseF(Formula):
    pass


@dataclass(frozen=True)
class Atom(Formula):
    name: str

    def __post_init__(self):
        if not self.name:
            raise ValueError("proposition name must be nonempty")


@dataclass(frozen=True)
class _Unary(Formula):
    arg: Formula

    def children(self):
        return (self.arg,)


@dataclass(frozen=True)
class _Binary(Formula):
    left: Formula
    right: Formula

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True)
class Not(_Unary):
    pass


@dataclass(frozen=True)
class Next(_Unary):
    pass


@dataclass(frozen=True)
class Globally(_Unary):
    pass


@dataclass(frozen=True)
class Eventually(_Unary):
    pass


@dataclass(frozen=True)
class And(_Binary):
    pass


@dataclass(frozen=True)
class Or(_Binary):
    pass


@dataclass(frozen=True)
class Implies(_Binary):
    pass


@dataclass(frozen=True)
class Until(_Binary):
    pass


@dataclass(frozen=True)
class Release(_Binary):
    pass


TRUE = TrueF()
FALSE = FalseF()

CORE_TYPES = (Atom, TrueF, FalseF, Not, And, Next, Until)

_UNARY_SYMBOL = {Not: "!", Next: "X", Globally: "G", Eventually: "F"}
_BINARY_SYMBOL = {And: "&", Or: "|", Implies: "->", Until: "U", Release: "R"}


# ---------------------------------------------------------------------------
# structural helpers


def subformulas(f: Formula) -> Iterator[Formula]:
    """Yield every node of ``f`` in post-order (duplicates included)."""
    stack = [(f, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            yield node
            continue
        stack.append((node, True))
        for child in reversed(node.children()):
            stack.append((child, False))


def atoms(f: Formula) -> frozenset[str]:
    return frozenset(n.name for n in subformulas(f) if isinstance(n, Atom))


def size(f: Formula) -> int:
    return sum(1 for _ in subformulas(f))


def depth(f: Formula) -> int:
    kids = f.children()
    return 1 + max((depth(k) for k in kids), default=0)


def conjoin(parts: Sequence[Formula]) -> Formula:
    """Left fold of ``And`` over ``parts``; ``true`` for an empty list."""
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


# ---------------------------------------------------------------------------
# text format


class LtlSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownPropositionError(ValueError):
    pass


_TOKEN_RE = re.compile(r"\s*(<->|->|[()!&|]|[A-Za-z_][A-Za-z0-9_]*)")
_KEYWORDS = {"G", "F", "X", "U", "R", "true", "false"}


def _tokenize(text: str) -> list[tuple[str, int]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise LtlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        tokens.append((m.group(1), m.start(1)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str, alphabet: Iterable[str] | None):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.alphabet = None if alphabet is None else frozenset(alphabet)

    def peek(self) -> str | None:
        return self.tokens[self.i][0] if self.i < len(self.tokens) else None

    def pos(self) -> int:
        return self.tokens[self.i][1] if self.i < len(self.tokens) else len(self.text)

    def take(self, expected: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise LtlSyntaxError("unexpected end of input", self.pos())
        if expected is not None and tok != expected:
            raise LtlSyntaxError(f"expected {expected!r}, found {tok!r}", self.pos())
        self.i += 1
        return tok

    def parse(self) -> Formula:
        f = self.implication()
        if self.peek() is not None:
            raise LtlSyntaxError(f"unexpected token {self.peek()!r}", self.pos())
        return f

    def implication(self) -> Formula:
        left = self.disjunction()
        op = self.peek()
        if op == "->":
            self.take()
            return Implies(left, self.implication())
        if op == "<->":
            self.take()
            right = self.implication()
            return And(Implies(left, right), Implies(right, left))
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.peek() == "|":
            self.take()
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.temporal()
        while self.peek() == "&":
            self.take()
            left = And(left, self.temporal())
        return left

    def temporal(self) -> Formula:
        left = self.unary()
        op = self.peek()
        if op == "U":
            self.take()
            return Until(left, self.temporal())
        if op == "R":
            self.take()
            return Release(left, self.temporal())
        return left

    def unary(self) -> Formula:
        tok = self.peek()
        if tok is None:
            raise LtlSyntaxError("unexpected end of input", self.pos())
        if tok in ("!", "G", "F", "X"):
            self.take()
            arg = self.unary()
            return {"!": Not, "G": Globally, "F": Eventually, "X": Next}[tok](arg)
        if tok == "(":
            self.take()
            inner = self.implication()
            self.take(")")
            return inner
        if tok == "true":
            self.take()
            return TRUE
        if tok == "false":
            self.take()
            return FALSE
        if tok in _KEYWORDS or not (tok[0].isalpha() or tok[0] == "_"):
            raise LtlSyntaxError(f"unexpected token {tok!r}", self.pos())
        if self.alphabet is not None and tok not in self.alphabet:
            raise UnknownPropositionError(f"unknown proposition {tok!r} at position {self.pos()}")
        self.take()
        return Atom(tok)


def parse_ltl(text: str, alphabet: Iterable[str] | None = None) -> Formula:
    """Parse ``text``; ``a <-> b`` is read as ``(a -> b) & (b -> a)``."""
    return _Parser(text, alphabet).parse()


def render_ltl(f: Formula) -> str:
    if isinstance(f, Atom):
        return f.name
    if isinstance(f, TrueF):
        return "true"
    if isinstance(f, FalseF):
        return "false"
    if isinstance(f, _Unary):
        return f"({_UNARY_SYMBOL[type(f)]} {render_ltl(f.arg)})"
    if isinstance(f, _Binary):
        return f"({render_ltl(f.left)} {_BINARY_SYMBOL[type(f)]} {render_ltl(f.right)})"
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# core grammar


def negate(f: Formula) -> Formula:
    """``Not(f)`` with double negation and constants folded."""
    if isinstance(f, Not):
        return f.arg
    if isinstance(f, TrueF):
        return FALSE
    if isinstance(f, FalseF):
        return TRUE
    return Not(f)


def desugar(f: Formula) -> Formula:
    """Rewrite into {Atom, true, false, !, &, X, U} preserving meaning."""
    if isinstance(f, (Atom, TrueF, FalseF)):
        return f
    if isinstance(f, Not):
        return Not(desugar(f.arg))
    if isinstance(f, Next):
        return Next(desugar(f.arg))
    if isinstance(f, Eventually):
        return Until(TRUE, desugar(f.arg))
    if isinstance(f, Globally):
        return Not(Until(TRUE, negate(desugar(f.arg))))
    a, b = desugar(f.left), desugar(f.right)
    if isinstance(f, And):
        return And(a, b)
    if isinstance(f, Until):
        return Until(a, b)
    if isinstance(f, Or):
        return Not(And(negate(a), negate(b)))
    if isinstance(f, Implies):
        return Not(And(a, negate(b)))
    if isinstance(f, Release):
        return Not(Until(negate(a), negate(b)))
    raise TypeError(f"not a formula: {f!r}")


def is_core(f: Formula) -> bool:
    return all(isinstance(n, CORE_TYPES) for n in subformulas(f))


# ---------------------------------------------------------------------------
# lasso semantics

Valuation = frozenset  # set of propositions that hold at one position


@dataclass(frozen=True)
class Lasso:
    """The ultimately periodic word ``prefix . loop^omega``."""

    prefix: tuple[frozenset, ...]
    loop: tuple[frozenset, ...]
    alphabet: frozenset | None = None

    def __post_init__(self):
        object.__setattr__(self, "prefix", tuple(frozenset(v) for v in self.prefix))
        object.__setattr__(self, "loop", tuple(frozenset(v) for v in self.loop))
        if not self.loop:
            raise ValueError("lasso loop must be nonempty")
        if self.alphabet is not None:
            alpha = frozenset(self.alphabet)
            object.__setattr__(self, "alphabet", alpha)
            for v in self.prefix + self.loop:
                if not v <= alpha:
                    raise ValueError(f"valuation {set(v)} outside alphabet")

    def __len__(self):
        return len(self.prefix) + len(self.loop)

    def letter(self, i: int) -> frozenset:
        """Letter at absolute position ``i`` of the infinite word."""
        p = len(self.prefix)
        return self.prefix[i] if i < p else self.loop[(i - p) % len(self.loop)]

    def successor(self, i: int) -> int:
        return i + 1 if i + 1 < len(self) else len(self.prefix)

    def unrolled(self) -> "Lasso":
        """Same word with the loop copied once into the prefix."""
        return Lasso(self.prefix + self.loop, self.loop, self.alphabet)


def eval_on_lasso(f: Formula, w: Lasso) -> bool:
    """Whether ``w`` satisfies ``f`` at position 0."""
    if w.alphabet is not None:
        missing = atoms(f) - w.alphabet
        if missing:
            raise ValueError(f"unvalued propositions: {sorted(missing)}")
    return _truth_vector(f, w, {})[0]


def _truth_vector(f: Formula, w: Lasso, memo: dict) -> list[bool]:
    hit = memo.get(f)
    if hit is not None:
        return hit
    n = len(w)
    letters = [w.letter(i) for i in range(n)]
    succ = [w.successor(i) for i in range(n)]
    if isinstance(f, TrueF):
        out = [True] * n
    elif isinstance(f, FalseF):
        out = [False] * n
    elif isinstance(f, Atom):
        out = [f.name in letters[i] for i in range(n)]
    elif isinstance(f, Not):
        out = [not v for v in _truth_vector(f.arg, w, memo)]
    elif isinstance(f, Next):
        a = _truth_vector(f.arg, w, memo)
        out = [a[succ[i]] for i in range(n)]
    elif isinstance(f, (And, Or, Implies)):
        a = _truth_vector(f.left, w, memo)
        b = _truth_vector(f.right, w, memo)
        if isinstance(f, And):
            out = [x and y for x, y in zip(a, b)]
        elif isinstance(f, Or):
            out = [x or y for x, y in zip(a, b)]
        else:
            out = [(not x) or y for x, y in zip(a, b)]
    elif isinstance(f, (Until, Eventually)):
        a = [True] * n if isinstance(f, Eventually) else _truth_vector(f.left, w, memo)
        b = _truth_vector(f.arg if isinstance(f, Eventually) else f.right, w, memo)
        # least fixpoint of  x = b | (a & X x)
        out = list(b)
        changed = True
        while changed:
            changed = False
            for i in reversed(range(n)):
                if not out[i] and a[i] and out[succ[i]]:
                    out[i] = True
                    changed = True
    elif isinstance(f, (Release, Globally)):
        a = [False] * n if isinstance(f, Globally) else _truth_vector(f.left, w, memo)
        b = _truth_vector(f.arg if isinstance(f, Globally) else f.right, w, memo)
        # greatest fixpoint of  x = b & (a | X x)
        out = list(b)
        changed = True
        while changed:
            changed = False
            for i in reversed(range(n)):
                if out[i] and not a[i] and not out[succ[i]]:
                    out[i] = False
                    changed = True
    else:
        raise TypeError(f"not a formula: {f!r}")
    memo[f] = out
    return out


def random_lasso(rng: random.Random, alphabet: Sequence[str], max_prefix: int = 3,
                 max_loop: int = 3, p_true: float = 0.5) -> Lasso:
    def letter():
        return frozenset(a for a in alphabet if rng.random() < p_true)

    prefix = tuple(letter() for _ in range(rng.randint(0, max_prefix)))
    loop = tuple(letter() for _ in range(rng.randint(1, max_loop)))
    return Lasso(prefix, loop, frozenset(alphabet))


# ---------------------------------------------------------------------------
# assume-guarantee specifications


@dataclass(frozen=True)
class AssumeGuaranteeSpec:
    assumptions: tuple[Formula, ...]
    guarantees: tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "assumptions", tuple(self.assumptions))
        object.__setattr__(self, "guarantees", tuple(self.guarantees))
        if not self.guarantees:
            raise ValueError("a specification needs at least one guarantee")

    def flatten(self) -> Formula:
        """``(a1 & ... & an) -> (g1 & ... & gm)``; just the guarantees if n == 0."""
        body = conjoin(self.guarantees)
        if not self.assumptions:
            return body
        return Implies(conjoin(self.assumptions), body)

    def text(self) -> str:
        return render_ltl(self.flatten())

    def to_json(self) -> dict:
        return {"assumptions": [render_ltl(a) for a in self.assumptions],
                "guarantees": [render_ltl(g) for g in self.guarantees]}

    @classmethod
    def from_json(cls, d: Mapping) -> "AssumeGuaranteeSpec":
        return cls(tuple(parse_ltl(a) for a in d["assumptions"]),
                   tuple(parse_ltl(g) for g in d["guarantees"]))


def split_spec(s: AssumeGuaranteeSpec) -> list[AssumeGuaranteeSpec]:
    """One spec per guarantee, each keeping every assumption in order."""
    return [AssumeGuaranteeSpec(s.assumptions, (g,)) for g in s.guarantees]


def shuffle_assumptions(s: AssumeGuaranteeSpec, rng: random.Random) -> AssumeGuaranteeSpec:
    order = list(s.assumptions)
    rng.shuffle(order)
    return AssumeGuaranteeSpec(tuple(order), s.guarantees)


# ---------------------------------------------------------------------------
# pattern-based generation
#
# Every guarantee constrains exactly one output, so circuit templates for
# different guarantees can be composed over shared input wires.

PATTERNS = (
    "invariance",          # G(t -> o)
    "next_response",       # G(t -> X o)
    "response",            # G(t -> F o)
    "mutex",               # G !(t & o)
    "eventuality",         # F o
    "cond_invariance",     # G c  |-  G(t -> o)
    "cond_next_response",  # G c  |-  G(t -> X o)
    "cond_eventuality",    # F c  |-  F o
)

CONDITIONED = {"cond_invariance": "G", "cond_next_response": "G", "cond_eventuality": "F"}

Literal = tuple[str, bool]  # (proposition, positive?)


def literal_formula(lit: Literal) -> Formula:
    name, positive = lit
    return Atom(name) if positive else Not(Atom(name))


@dataclass(frozen=True)
class PatternInstance:
    kind: str
    output: str
    trigger: tuple[Literal, ...] = ()
    condition: Literal | None = None

    def trigger_formula(self) -> Formula:
        return conjoin([literal_formula(l) for l in self.trigger])

    def guarantee(self) -> Formula:
        o = Atom(self.output)
        k = self.kind
        if k in ("invariance", "cond_invariance"):
            return Globally(Implies(self.trigger_formula(), o))
        if k in ("next_response", "cond_next_response"):
            return Globally(Implies(self.trigger_formula(), Next(o)))
        if k == "response":
            return Globally(Implies(self.trigger_formula(), Eventually(o)))
        if k == "mutex":
            return Globally(Not(And(self.trigger_formula(), o)))
        if k in ("eventuality", "cond_eventuality"):
            return Eventually(o)
        raise ValueError(f"unknown pattern {k!r}")

    def assumption(self) -> Formula | None:
        if self.condition is None:
            return None
        op = Globally if CONDITIONED[self.kind] == "G" else Eventually
        return op(literal_formula(self.condition))


@dataclass
class GenConfig:
    n_inputs: int = 4
    n_outputs: int = 4
    min_assumptions: int = 0
    max_assumptions: int = 2
    min_guarantees: int = 1
    max_guarantees: int = 3
    max_depth: int = 6
    conj_prob: float = 0.25
    neg_prob: float = 0.3
    pattern_weights: dict = field(default_factory=lambda: {p: 1.0 for p in PATTERNS})

    @property
    def inputs(self) -> list[str]:
        return [f"i{k}" for k in range(self.n_inputs)]

    @property
    def outputs(self) -> list[str]:
        return [f"o{k}" for k in range(self.n_outputs)]

    def validate(self) -> None:
        if self.n_inputs < 1 or self.n_outputs < 1:
            raise ValueError("alphabet must contain at least one input and one output")
        if self.min_guarantees < 1 or self.max_guarantees < self.min_guarantees:
            raise ValueError("guarantee count bounds must satisfy 1 <= min <= max")
        if self.max_guarantees > self.n_outputs:
            raise ValueError("each guarantee needs its own output: max_guarantees > n_outputs")
        if self.min_assumptions < 0 or self.max_assumptions < self.min_assumptions:
            raise ValueError("assumption count bounds must satisfy 0 <= min <= max")
        if self.max_assumptions > 4 * self.n_inputs:
            raise ValueError("not enough distinct assumptions over the input alphabet")
        unknown = set(self.pattern_weights) - set(PATTERNS)
        if unknown:
            raise ValueError(f"unknown patterns: {sorted(unknown)}")
        if not any(w > 0 for w in self.pattern_weights.values()):
            raise ValueError("at least one pattern needs positive weight")
        if self.max_depth < 3:
            raise ValueError("max_depth below 3 admits no pattern")


@dataclass(frozen=True)
class SpecSample:
    """A generated spec together with the pattern instances it came from."""

    spec: AssumeGuaranteeSpec
    patterns: tuple[PatternInstance, ...]


def _weighted_choice(rng: random.Random, weights: Mapping[str, float]) -> str:
    names = [k for k in PATTERNS if weights.get(k, 0) > 0]
    return rng.choices(names, weights=[weights[k] for k in names])[0]


def sample_spec(config: GenConfig, rng: random.Random) -> SpecSample:
    config.validate()
    inputs = config.inputs
    n_g = rng.randint(config.min_guarantees, config.max_guarantees)
    n_a = rng.randint(config.min_assumptions, config.max_assumptions)
    outputs = rng.sample(config.outputs, n_g)

    def lit(pool):
        return (rng.choice(pool), rng.random() >= config.neg_prob)

    instances = []
    cond_assumptions: list[Formula] = []
    for out in outputs:
        weights = dict(config.pattern_weights)
        while True:
            kind = _weighted_choice(rng, weights)
            if kind in CONDITIONED and len(cond_assumptions) >= n_a:
                weights[kind] = 0
                if not any(v > 0 for v in weights.values()):
                    weights = {k: v for k, v in config.pattern_weights.items() if k not in CONDITIONED}
                    if not any(v > 0 for v in weights.values()):
                        raise ValueError("conditioned patterns need max_assumptions >= 1")
                continue
            break
        cond = None
        pool = inputs
        if kind in CONDITIONED:
            cond = (rng.choice(inputs), True)
            if len(inputs) > 1:
                pool = [i for i in inputs if i != cond[0]]
        trigger: tuple[Literal, ...] = ()
        if kind not in ("eventuality", "cond_eventuality"):
            if kind != "mutex" and len(pool) > 1 and rng.random() < config.conj_prob:
                a, b = rng.sample(pool, 2)
                trigger = ((a, rng.random() >= config.neg_prob), (b, rng.random() >= config.neg_prob))
            else:
                trigger = (lit(pool),)
        inst = PatternInstance(kind, out, trigger, cond)
        if depth(inst.guarantee()) > config.max_depth and len(trigger) > 1:
            inst = PatternInstance(kind, out, trigger[:1], cond)
        if depth(inst.guarantee()) > config.max_depth:
            inst = PatternInstance("eventuality", out)
        a = inst.assumption()
        if a is not None and a not in cond_assumptions:
            cond_assumptions.append(a)
        instances.append(inst)

    assumptions = list(cond_assumptions)
    while len(assumptions) < n_a:
        name = rng.choice(inputs)
        op = rng.choice((Globally, Eventually))
        cand = op(literal_formula((name, rng.random() >= config.neg_prob)))
        if cand not in assumptions:
            assumptions.append(cand)
    rng.shuffle(assumptions)
    spec = AssumeGuaranteeSpec(tuple(assumptions), tuple(i.guarantee() for i in instances))
    return SpecSample(spec, tuple(instances))


def generate_spec(config: GenConfig, rng: random.Random) -> AssumeGuaranteeSpec:
    return sample_spec(config, rng).spec


FormulaLike = Union[Formula, str]


def as_formula(f: FormulaLike) -> Formula:
    return parse_ltl(f) if isinstance(f, str) else f


_RANDOM_UNARY = (Not, Next, Globally, Eventually)
_RANDOM_BINARY = (And, Or, Implies, Until, Release)


def random_formula(rng: random.Random, props: Sequence[str], max_depth: int = 5) -> Formula:
    """Unstructured random formula over every connective, depth <= ``max_depth``."""
    if max_depth <= 1 or rng.random() < 0.25:
        r = rng.random()
        if r < 0.05:
            return TRUE
        if r < 0.1:
            return FALSE
        return Atom(rng.choice(props))
    if rng.random() < 0.4:
        return rng.choice(_RANDOM_UNARY)(random_formula(rng, props, max_depth - 1))
    op = rng.choice(_RANDOM_BINARY)
    return op(random_formula(rng, props, max_depth - 1), random_formula(rng, props, max_depth - 1))
