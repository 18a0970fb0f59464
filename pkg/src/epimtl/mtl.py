"""Metric temporal logic (MTL) over uniformly sampled trajectories.

Formulas are finite trees built from half-space atoms on named channels
(``D <= 0.05``), the Boolean connectives, and the interval-bounded
temporal operators until (``U``), eventually (``F``) and always (``G``).
Time is discrete: an interval ``[lo, hi]`` shifts the evaluation index
``k`` to the window ``k + lo .. k + hi``.

Three evaluation modes are provided:

* :func:`eval_bool` -- exact Boolean satisfaction,
* :func:`eval_robustness` -- signed satisfaction margin (same recursion
  with min/max; positive implies satisfied, negative implies violated),
* :func:`smooth_robustness` -- differentiable relaxation where min/max
  are replaced by softmax-weighted averages at temperature ``beta``.
  Each n-ary min/max node deviates from the exact value by at most
  ``log(n)/beta``, so the total error is bounded by the sum of
  ``log(width)/beta`` over the nested min/max nodes of the formula.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

__all__ = [
    "TimeIndexInterval",
    "MtlFormula",
    "MtlTrue",
    "TRUE",
    "Atom",
    "AtomicProposition",
    "Not",
    "And",
    "Or",
    "Until",
    "Eventually",
    "Always",
    "Trajectory",
    "MtlError",
    "MtlSyntaxError",
    "TrajectoryTooShortError",
    "parse_formula",
    "format_formula",
    "horizon",
    "atoms",
    "eval_bool",
    "eval_robustness",
    "smooth_robustness",
    "smooth_robustness_grad",
]


class MtlError(ValueError):
    """Base class for formula construction and evaluation errors."""


class MtlSyntaxError(MtlError):
    """Raised by the parser; carries the offending character position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"syntax error at position {position}: {message}")
        self.position = position


class TrajectoryTooShortError(MtlError):
    """The trajectory does not cover the formula horizon at the given index."""


@dataclass(frozen=True, slots=True)
class TimeIndexInterval:
    """Inclusive window of nonnegative time-index offsets."""

    lo: int
    hi: int

    def __post_init__(self):
        for name, v in (("lo", self.lo), ("hi", self.hi)):
            if isinstance(v, bool) or not isinstance(v, int):
                raise MtlError(f"interval bound {name} must be an integer, got {v!r}")
            if v < 0:
                raise MtlError(f"interval bound {name} must be nonnegative, got {v}")
        if self.lo > self.hi:
            raise MtlError(f"malformed interval [{self.lo},{self.hi}]: lo > hi")

    def window(self, k: int) -> range:
        """Absolute indices reached from ``k``: ``k+lo .. k+hi`` inclusive."""
        return range(k + self.lo, k + self.hi + 1)

    def __str__(self) -> str:
        return f"[{self.lo},{self.hi}]"


class MtlFormula:
    """Base class of all formula nodes.  Nodes are immutable value objects."""

    __slots__ = ()

    def __str__(self) -> str:
        return format_formula(self)


@dataclass(frozen=True, slots=True)
class MtlTrue(MtlFormula):
    """The Boolean constant."""


TRUE = MtlTrue()


@dataclass(frozen=True, slots=True)
class Atom(MtlFormula):
    """Half-space predicate ``channel <= threshold`` or ``channel >= threshold``."""

    channel: str
    op: str
    threshold: float

    def __post_init__(self):
        if not self.channel:
            raise MtlError("atom channel name must be nonempty")
        if self.op not in ("<=", ">="):
            raise MtlError(f"atom comparison must be '<=' or '>=', got {self.op!r}")
        if not math.isfinite(self.threshold):
            raise MtlError(f"atom threshold must be finite, got {self.threshold!r}")


# The atomic proposition and its formula node coincide in this representation.
AtomicProposition = Atom


@dataclass(frozen=True, slots=True)
class Not(MtlFormula):
    operand: MtlFormula


@dataclass(frozen=True, slots=True)
class And(MtlFormula):
    left: MtlFormula
    right: MtlFormula


@dataclass(frozen=True, slots=True)
class Or(MtlFormula):
    left: MtlFormula
    right: MtlFormula


@dataclass(frozen=True, slots=True)
class Until(MtlFormula):
    interval: TimeIndexInterval
    left: MtlFormula
    right: MtlFormula


@dataclass(frozen=True, slots=True)
class Eventually(MtlFormula):
    interval: TimeIndexInterval
    operand: MtlFormula


@dataclass(frozen=True, slots=True)
class Always(MtlFormula):
    interval: TimeIndexInterval
    operand: MtlFormula


def atoms(phi: MtlFormula) -> Iterator[Atom]:
    """Yield every atom of ``phi`` in preorder."""
    if isinstance(phi, Atom):
        yield phi
    elif isinstance(phi, Not):
        yield from atoms(phi.operand)
    elif isinstance(phi, (And, Or)):
        yield from atoms(phi.left)
        yield from atoms(phi.right)
    elif isinstance(phi, Until):
        yield from atoms(phi.left)
        yield from atoms(phi.right)
    elif isinstance(phi, (Eventually, Always)):
        yield from atoms(phi.operand)


def horizon(phi: MtlFormula) -> int:
    """Largest channel index that evaluating ``phi`` at index 0 can read.

    Evaluation at index ``k`` therefore needs trajectory length at least
    ``k + horizon(phi) + 1``.
    """
    if isinstance(phi, (MtlTrue, Atom)):
        return 0
    if isinstance(phi, Not):
        return horizon(phi.operand)
    if isinstance(phi, (And, Or)):
        return max(horizon(phi.left), horizon(phi.right))
    if isinstance(phi, (Eventually, Always)):
        return phi.interval.hi + horizon(phi.operand)
    if isinstance(phi, Until):
        hi = phi.interval.hi
        h_right = horizon(phi.right)
        if hi == 0:
            # The only witness is k itself; the left operand is never read.
            return h_right
        return max(hi + h_right, hi - 1 + horizon(phi.left))
    raise TypeError(f"not an MTL formula node: {phi!r}")


# ---------------------------------------------------------------------------
# Trajectories


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled multi-channel time series.

    All channels share the same length; values are stored as read-only
    float arrays.  ``ts`` is the sampling period in days; ``t0_label`` is
    optional calendar metadata and does not affect semantics.
    """

    ts: float
    channels: Mapping[str, np.ndarray]
    t0_label: str | None = None

    def __post_init__(self):
        if not self.ts > 0:
            raise MtlError(f"sampling period must be positive, got {self.ts}")
        converted: dict[str, np.ndarray] = {}
        length = None
        for name, values in self.channels.items():
            arr = np.asarray(values, dtype=float)
            if arr.ndim != 1:
                raise MtlError(f"channel {name!r} must be one-dimensional")
            if length is None:
                length = arr.shape[0]
            elif arr.shape[0] != length:
                raise MtlError(
                    f"channel {name!r} has length {arr.shape[0]}, expected {length}"
                )
            arr = arr.copy()
            arr.setflags(write=False)
            converted[name] = arr
        if length is None or length < 1:
            raise MtlError("trajectory needs at least one channel with one sample")
        object.__setattr__(self, "channels", converted)

    @property
    def length(self) -> int:
        return next(iter(self.channels.values())).shape[0]

    @property
    def times(self) -> np.ndarray:
        """Time stamps in days, ``t[k] = k * ts``."""
        return np.arange(self.length) * self.ts

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.channels[name]
        except KeyError:
            raise MtlError(f"trajectory has no channel {name!r}") from None


# ---------------------------------------------------------------------------
# Concrete syntax

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<le><=)
  | (?P<ge>>=)
  | (?P<sym>[()&|!\[\],])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise MtlSyntaxError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tok_kind = m.group() if kind == "sym" else kind
            tokens.append(_Token(tok_kind, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("eof", "", len(text)))
    return tokens


class _Parser:
    """Recursive-descent parser for the concrete grammar.

    Precedence, loosest first: U, |, &, then the unary operators
    (!, G, F) which bind tightest below atoms.  U is right-associative.
    The letters G/F/U act as operators only when immediately followed by
    an interval bracket, so they remain usable as channel names.
    """

    def __init__(self, text: str, known_channels: set[str] | frozenset[str]):
        self.tokens = _tokenize(text)
        self.idx = 0
        self.known = frozenset(known_channels)

    def peek(self, ahead: int = 0) -> _Token:
        return self.tokens[min(self.idx + ahead, len(self.tokens) - 1)]

    def advance(self) -> _Token:
        tok = self.tokens[self.idx]
        if tok.kind != "eof":
            self.idx += 1
        return tok

    def expect(self, kind: str, what: str) -> _Token:
        tok = self.peek()
        if tok.kind != kind:
            got = tok.text or "end of input"
            raise MtlSyntaxError(f"expected {what}, got {got!r}", tok.pos)
        return self.advance()

    def parse(self) -> MtlFormula:
        phi = self.parse_until()
        tok = self.peek()
        if tok.kind != "eof":
            raise MtlSyntaxError(f"unexpected trailing input {tok.text!r}", tok.pos)
        return phi

    def parse_until(self) -> MtlFormula:
        left = self.parse_disj()
        tok = self.peek()
        if tok.kind == "ident" and tok.text == "U" and self.peek(1).kind == "[":
            self.advance()
            interval = self.parse_interval()
            right = self.parse_until()
            return Until(interval, left, right)
        return left

    def parse_disj(self) -> MtlFormula:
        phi = self.parse_conj()
        while self.peek().kind == "|":
            self.advance()
            phi = Or(phi, self.parse_conj())
        return phi

    def parse_conj(self) -> MtlFormula:
        phi = self.parse_unary()
        while self.peek().kind == "&":
            self.advance()
            phi = And(phi, self.parse_unary())
        return phi

    def parse_unary(self) -> MtlFormula:
        tok = self.peek()
        if tok.kind == "!":
            self.advance()
            return Not(self.parse_unary())
        if tok.kind == "ident" and tok.text in ("G", "F") and self.peek(1).kind == "[":
            self.advance()
            interval = self.parse_interval()
            operand = self.parse_unary()
            node = Always if tok.text == "G" else Eventually
            return node(interval, operand)
        if tok.kind == "(":
            self.advance()
            phi = self.parse_until()
            self.expect(")", "')'")
            return phi
        if tok.kind == "ident" and tok.text == "TRUE":
            self.advance()
            return TRUE
        if tok.kind == "ident":
            return self.parse_atom()
        got = tok.text or "end of input"
        raise MtlSyntaxError(f"expected a formula, got {got!r}", tok.pos)

    def parse_atom(self) -> MtlFormula:
        name_tok = self.advance()
        if name_tok.text not in self.known:
            raise MtlSyntaxError(f"unknown channel name {name_tok.text!r}", name_tok.pos)
        op_tok = self.peek()
        if op_tok.kind not in ("le", "ge"):
            got = op_tok.text or "end of input"
            raise MtlSyntaxError(f"expected '<=' or '>=' after channel, got {got!r}", op_tok.pos)
        self.advance()
        num_tok = self.expect("number", "a threshold number")
        threshold = float(num_tok.text)
        if not math.isfinite(threshold):
            raise MtlSyntaxError("threshold must be finite", num_tok.pos)
        return Atom(name_tok.text, "<=" if op_tok.kind == "le" else ">=", threshold)

    def parse_interval(self) -> TimeIndexInterval:
        self.expect("[", "'['")
        lo = self.parse_interval_bound()
        self.expect(",", "','")
        hi = self.parse_interval_bound()
        close = self.expect("]", "']'")
        if lo > hi:
            raise MtlSyntaxError(f"malformed interval [{lo},{hi}]: lo > hi", close.pos)
        return TimeIndexInterval(lo, hi)

    def parse_interval_bound(self) -> int:
        tok = self.expect("number", "an integer interval bound")
        value = float(tok.text)
        if value < 0 or value != int(value):
            raise MtlSyntaxError(
                f"malformed interval: bound {tok.text} is not a nonnegative integer",
                tok.pos,
            )
        return int(value)


def parse_formula(text: str, known_channels) -> MtlFormula:
    """Parse concrete MTL syntax; every atom channel must be known.

    Raises :class:`MtlSyntaxError` with the character position on syntax
    errors, unknown channel names and malformed intervals.
    """
    return _Parser(text, set(known_channels)).parse()


_PRECEDENCE = {
    Until: 1,
    Or: 2,
    And: 3,
    Not: 4,
    Eventually: 4,
    Always: 4,
    Atom: 5,
    MtlTrue: 5,
}


def _format_number(x: float) -> str:
    return repr(float(x))


def format_formula(phi: MtlFormula) -> str:
    """Canonical concrete syntax; ``parse_formula`` inverts it exactly."""

    def fmt(node: MtlFormula, min_prec: int) -> str:
        prec = _PRECEDENCE[type(node)]
        if isinstance(node, MtlTrue):
            s = "TRUE"
        elif isinstance(node, Atom):
            s = f"{node.channel} {node.op} {_format_number(node.threshold)}"
        elif isinstance(node, Not):
            s = f"!{fmt(node.operand, 4)}"
        elif isinstance(node, Always):
            s = f"G{node.interval} {fmt(node.operand, 4)}"
        elif isinstance(node, Eventually):
            s = f"F{node.interval} {fmt(node.operand, 4)}"
        elif isinstance(node, And):
            s = f"{fmt(node.left, 3)} & {fmt(node.right, 4)}"
        elif isinstance(node, Or):
            s = f"{fmt(node.left, 2)} | {fmt(node.right, 3)}"
        elif isinstance(node, Until):
            s = f"{fmt(node.left, 2)} U{node.interval} {fmt(node.right, 1)}"
        else:
            raise TypeError(f"not an MTL formula node: {node!r}")
        return f"({s})" if prec < min_prec else s

    return fmt(phi, 0)


# ---------------------------------------------------------------------------
# Boolean semantics


def _require_horizon(phi: MtlFormula, xi: Trajectory, k: int) -> None:
    if k < 0:
        raise MtlError(f"evaluation index must be nonnegative, got {k}")
    needed = k + horizon(phi)
    if needed > xi.length - 1:
        raise TrajectoryTooShortError(
            f"formula evaluated at index {k} reads up to index {needed}, "
            f"but the trajectory has only {xi.length} samples"
        )


def eval_bool(phi: MtlFormula, xi: Trajectory, k: int = 0) -> bool:
    """Exact Boolean satisfaction of ``phi`` on ``xi`` at index ``k``."""
    _require_horizon(phi, xi, k)
    return _eval_bool(phi, xi.channels, k)


def _eval_bool(phi: MtlFormula, ch: Mapping[str, np.ndarray], k: int) -> bool:
    if isinstance(phi, MtlTrue):
        return True
    if isinstance(phi, Atom):
        x = ch[phi.channel][k]
        return bool(x <= phi.threshold if phi.op == "<=" else x >= phi.threshold)
    if isinstance(phi, Not):
        return not _eval_bool(phi.operand, ch, k)
    if isinstance(phi, And):
        return _eval_bool(phi.left, ch, k) and _eval_bool(phi.right, ch, k)
    if isinstance(phi, Or):
        return _eval_bool(phi.left, ch, k) or _eval_bool(phi.right, ch, k)
    if isinstance(phi, Eventually):
        return any(_eval_bool(phi.operand, ch, j) for j in phi.interval.window(k))
    if isinstance(phi, Always):
        return all(_eval_bool(phi.operand, ch, j) for j in phi.interval.window(k))
    if isinstance(phi, Until):
        for j in phi.interval.window(k):
            if _eval_bool(phi.right, ch, j) and all(
                _eval_bool(phi.left, ch, i) for i in range(k, j)
            ):
                return True
        return False
    raise TypeError(f"not an MTL formula node: {phi!r}")


# ---------------------------------------------------------------------------
# Robustness semantics


def eval_robustness(phi: MtlFormula, xi: Trajectory, k: int = 0) -> float:
    """Signed satisfaction margin of ``phi`` on ``xi`` at index ``k``.

    Positive values imply Boolean satisfaction and negative values imply
    violation; zero is reported on ties and carries no Boolean verdict.
    """
    _require_horizon(phi, xi, k)
    return _eval_rho(phi, xi.channels, k)


def _atom_margin(phi: Atom, x: float) -> float:
    return phi.threshold - x if phi.op == "<=" else x - phi.threshold


def _eval_rho(phi: MtlFormula, ch: Mapping[str, np.ndarray], k: int) -> float:
    if isinstance(phi, MtlTrue):
        return math.inf
    if isinstance(phi, Atom):
        return _atom_margin(phi, float(ch[phi.channel][k]))
    if isinstance(phi, Not):
        return -_eval_rho(phi.operand, ch, k)
    if isinstance(phi, And):
        return min(_eval_rho(phi.left, ch, k), _eval_rho(phi.right, ch, k))
    if isinstance(phi, Or):
        return max(_eval_rho(phi.left, ch, k), _eval_rho(phi.right, ch, k))
    if isinstance(phi, Eventually):
        return max(_eval_rho(phi.operand, ch, j) for j in phi.interval.window(k))
    if isinstance(phi, Always):
        return min(_eval_rho(phi.operand, ch, j) for j in phi.interval.window(k))
    if isinstance(phi, Until):
        best = -math.inf
        for j in phi.interval.window(k):
            cand = _eval_rho(phi.right, ch, j)
            for i in range(k, j):
                cand = min(cand, _eval_rho(phi.left, ch, i))
            best = max(best, cand)
        return best
    raise TypeError(f"not an MTL formula node: {phi!r}")


# ---------------------------------------------------------------------------
# Smooth robustness

# Soft minimum used throughout: the softmax-weighted average
#   softmin(v) = sum_i w_i v_i,  w_i = exp(-beta v_i) / sum_j exp(-beta v_j).
# It is shift-invariant, returns the common value exactly on ties, and
# overestimates the true minimum by at most entropy(w)/beta <= log(n)/beta.
# The soft maximum is its mirror image (underestimates by <= log(n)/beta).


def _soft_min(values: np.ndarray, beta: float) -> float:
    m = values.min()
    if not math.isfinite(m):
        return float(m)
    finite = values[np.isfinite(values)]
    w = np.exp(-beta * (finite - m))
    return float((w @ finite) / w.sum())


def _soft_max(values: np.ndarray, beta: float) -> float:
    return -_soft_min(-values, beta)


def _soft_min_coeffs(values: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """Soft minimum and d(softmin)/d(values).

    The derivative of the weighted average is
    ``w_j * (1 - beta * (v_j - softmin))``; the coefficients sum to 1.
    Non-finite entries get zero weight and zero coefficient.
    """
    m = values.min()
    coeffs = np.zeros_like(values)
    if not math.isfinite(m):
        return float(m), coeffs
    finite = np.isfinite(values)
    w = np.zeros_like(values)
    w[finite] = np.exp(-beta * (values[finite] - m))
    w /= w.sum()
    value = float(w @ np.where(finite, values, 0.0))
    coeffs = w * (1.0 - beta * (np.where(finite, values, 0.0) - value))
    coeffs[~finite] = 0.0
    return value, coeffs


def _soft_max_coeffs(values: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    value, coeffs = _soft_min_coeffs(-values, beta)
    return -value, coeffs


def smooth_robustness(phi: MtlFormula, xi: Trajectory, k: int = 0, beta: float = 100.0) -> float:
    """Smooth robustness at temperature ``beta > 0``.

    Follows the :func:`eval_robustness` recursion with min/max replaced
    by the soft versions documented above; converges to the exact value
    as ``beta`` grows.  Formulas without min/max nodes (single atoms,
    negations of atoms) evaluate exactly for any ``beta``.
    """
    if not beta > 0:
        raise MtlError(f"beta must be positive, got {beta}")
    _require_horizon(phi, xi, k)
    value, _ = _smooth_eval(phi, xi.channels, k, beta, want_grad=False, memo={})
    return value


def smooth_robustness_grad(
    phi: MtlFormula,
    channels: Mapping[str, np.ndarray],
    k: int,
    beta: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """Smooth robustness together with its gradient per channel sample.

    ``channels`` maps channel names to equal-length arrays; the returned
    gradient maps each referenced channel to an array of the same length.
    """
    if not beta > 0:
        raise MtlError(f"beta must be positive, got {beta}")
    value, grad = _smooth_eval(phi, channels, k, beta, want_grad=True, memo={})
    return value, dict(grad)


def _length_of(channels: Mapping[str, np.ndarray]) -> int:
    return next(iter(channels.values())).shape[0]


def _combine(
    parts: list[tuple[float, dict | None]],
    coeffs: np.ndarray,
    channels: Mapping[str, np.ndarray],
) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    length = _length_of(channels)
    for (_, grad), c in zip(parts, coeffs):
        if grad is None or c == 0.0:
            continue
        for name, arr in grad.items():
            acc = out.get(name)
            if acc is None:
                acc = np.zeros(length)
                out[name] = acc
            acc += c * arr
    return out


def _smooth_eval(phi, channels, k, beta, want_grad, memo):
    key = (id(phi), k)
    hit = memo.get(key)
    if hit is not None:
        return hit

    grad: dict[str, np.ndarray] | None = None
    if isinstance(phi, MtlTrue):
        value = math.inf
        grad = {} if want_grad else None
    elif isinstance(phi, Atom):
        value = _atom_margin(phi, float(channels[phi.channel][k]))
        if want_grad:
            arr = np.zeros(_length_of(channels))
            arr[k] = -1.0 if phi.op == "<=" else 1.0
            grad = {phi.channel: arr}
    elif isinstance(phi, Not):
        v, g = _smooth_eval(phi.operand, channels, k, beta, want_grad, memo)
        value = -v
        if want_grad:
            grad = {name: -arr for name, arr in g.items()}
    elif isinstance(phi, (And, Or)):
        parts = [
            _smooth_eval(phi.left, channels, k, beta, want_grad, memo),
            _smooth_eval(phi.right, channels, k, beta, want_grad, memo),
        ]
        values = np.array([p[0] for p in parts])
        soft = _soft_min_coeffs if isinstance(phi, And) else _soft_max_coeffs
        value, coeffs = soft(values, beta)
        if want_grad:
            grad = _combine(parts, coeffs, channels)
    elif isinstance(phi, (Always, Eventually)):
        window = phi.interval.window(k)
        soft = _soft_min_coeffs if isinstance(phi, Always) else _soft_max_coeffs
        if isinstance(phi.operand, Atom):
            # Fast path: window over a plain atom is a single soft node.
            atom = phi.operand
            xs = channels[atom.channel][window.start : window.stop]
            margins = atom.threshold - xs if atom.op == "<=" else xs - atom.threshold
            value, coeffs = soft(margins, beta)
            if want_grad:
                arr = np.zeros(_length_of(channels))
                sign = -1.0 if atom.op == "<=" else 1.0
                arr[window.start : window.stop] = sign * coeffs
                grad = {atom.channel: arr}
        else:
            parts = [_smooth_eval(phi.operand, channels, j, beta, want_grad, memo) for j in window]
            values = np.array([p[0] for p in parts])
            value, coeffs = soft(values, beta)
            if want_grad:
                grad = _combine(parts, coeffs, channels)
    elif isinstance(phi, Until):
        # One soft-min per witness index (right operand plus the prefix of
        # left operands), one soft-max across witnesses.
        disjuncts: list[tuple[float, dict | None]] = []
        inner_coeffs: list[tuple[list, np.ndarray]] = []
        for j in phi.interval.window(k):
            parts = [_smooth_eval(phi.right, channels, j, beta, want_grad, memo)]
            parts.extend(_smooth_eval(phi.left, channels, i, beta, want_grad, memo) for i in range(k, j))
            values = np.array([p[0] for p in parts])
            v, coeffs = _soft_min_coeffs(values, beta)
            disjuncts.append((v, None))
            inner_coeffs.append((parts, coeffs))
        values = np.array([d[0] for d in disjuncts])
        value, outer = _soft_max_coeffs(values, beta)
        if want_grad:
            grad = {}
            length = _length_of(channels)
            for (parts, coeffs), c in zip(inner_coeffs, outer):
                if c == 0.0:
                    continue
                for (_, g), ci in zip(parts, coeffs):
                    if g is None or ci == 0.0:
                        continue
                    for name, arr in g.items():
                        acc = grad.get(name)
                        if acc is None:
                            acc = np.zeros(length)
                            grad[name] = acc
                        acc += c * ci * arr
    else:
        raise TypeError(f"not an MTL formula node: {phi!r}")

    result = (value, grad)
    memo[key] = result
    return result
