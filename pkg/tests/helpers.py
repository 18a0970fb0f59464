"""Shared test utilities: random instance generators, the brute-force
semantics oracle, and a vectorized brute-force feasibility checker for
the mixed-integer encoding."""

from __future__ import annotations

import itertools
import math

import numpy as np

from epimtl.mip_export import LinearDynamics, MipModel, encode_linear_mip
from epimtl.mtl import (
    TRUE,
    Always,
    And,
    Atom,
    Eventually,
    MtlTrue,
    Not,
    Or,
    TimeIndexInterval,
    Trajectory,
    Until,
    horizon,
)

CHANNELS = ("a", "b")


def random_interval(rng, max_hi=3) -> TimeIndexInterval:
    lo = int(rng.integers(0, max_hi + 1))
    hi = int(rng.integers(lo, max_hi + 1))
    return TimeIndexInterval(lo, hi)


def random_formula(rng, depth: int, channels=CHANNELS, max_hi=3):
    """Random formula of at most the given operator depth."""
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.08:
            return TRUE
        channel = channels[int(rng.integers(len(channels)))]
        op = "<=" if rng.random() < 0.5 else ">="
        return Atom(channel, op, float(rng.normal(0.0, 0.6)))
    kind = rng.integers(6)
    if kind == 0:
        return Not(random_formula(rng, depth - 1, channels, max_hi))
    if kind == 1:
        return And(
            random_formula(rng, depth - 1, channels, max_hi),
            random_formula(rng, depth - 1, channels, max_hi),
        )
    if kind == 2:
        return Or(
            random_formula(rng, depth - 1, channels, max_hi),
            random_formula(rng, depth - 1, channels, max_hi),
        )
    if kind == 3:
        return Until(
            random_interval(rng, max_hi),
            random_formula(rng, depth - 1, channels, max_hi),
            random_formula(rng, depth - 1, channels, max_hi),
        )
    if kind == 4:
        return Eventually(random_interval(rng, max_hi), random_formula(rng, depth - 1, channels, max_hi))
    return Always(random_interval(rng, max_hi), random_formula(rng, depth - 1, channels, max_hi))


def random_instance(rng, depth=3, max_length=12, channels=CHANNELS):
    """A random (formula, trajectory) pair with the trajectory covering
    the formula horizon within the length cap."""
    while True:
        phi = random_formula(rng, depth, channels)
        h = horizon(phi)
        if h <= max_length - 1:
            break
    length = int(rng.integers(h + 1, max_length + 1))
    xi = Trajectory(
        ts=1.0, channels={c: rng.normal(0.0, 0.6, size=length) for c in channels}
    )
    return phi, xi


def oracle_eval(phi, channels, k: int) -> bool:
    """Brute-force Boolean semantics, independent of the library path.

    Eventually/always are first rewritten through until, and until is
    expanded literally by enumerating every witness index and every
    prefix index without short-circuiting.
    """
    if isinstance(phi, MtlTrue):
        return True
    if isinstance(phi, Atom):
        x = channels[phi.channel][k]
        return bool(x <= phi.threshold) if phi.op == "<=" else bool(x >= phi.threshold)
    if isinstance(phi, Not):
        return not oracle_eval(phi.operand, channels, k)
    if isinstance(phi, And):
        results = [oracle_eval(phi.left, channels, k), oracle_eval(phi.right, channels, k)]
        return all(results)
    if isinstance(phi, Or):
        results = [oracle_eval(phi.left, channels, k), oracle_eval(phi.right, channels, k)]
        return any(results)
    if isinstance(phi, Eventually):
        return oracle_eval(Until(phi.interval, TRUE, phi.operand), channels, k)
    if isinstance(phi, Always):
        return oracle_eval(
            Not(Until(phi.interval, TRUE, Not(phi.operand))), channels, k
        )
    if isinstance(phi, Until):
        disjuncts = []
        for j in range(k + phi.interval.lo, k + phi.interval.hi + 1):
            conjuncts = [oracle_eval(phi.right, channels, j)]
            for i in range(k, j):
                conjuncts.append(oracle_eval(phi.left, channels, i))
            disjuncts.append(all(conjuncts))
        return any(disjuncts)
    raise TypeError(f"unexpected node {phi!r}")


def soft_error_bound(phi, k: int, seen=None) -> float:
    """Sum of ln(arity) over every soft min/max node in the evaluation
    DAG; dividing by beta bounds |smooth - exact|."""
    if seen is None:
        seen = set()
    key = (id(phi), k)
    if key in seen:
        return 0.0
    seen.add(key)
    if isinstance(phi, (MtlTrue, Atom)):
        return 0.0
    if isinstance(phi, Not):
        return soft_error_bound(phi.operand, k, seen)
    if isinstance(phi, (And, Or)):
        return (
            math.log(2.0)
            + soft_error_bound(phi.left, k, seen)
            + soft_error_bound(phi.right, k, seen)
        )
    if isinstance(phi, (Always, Eventually)):
        width = phi.interval.hi - phi.interval.lo + 1
        return math.log(width) + sum(
            soft_error_bound(phi.operand, j, seen) for j in phi.interval.window(k)
        )
    if isinstance(phi, Until):
        width = phi.interval.hi - phi.interval.lo + 1
        total = math.log(width)
        for j in phi.interval.window(k):
            if j > k:
                total += math.log(1 + j - k)
            total += soft_error_bound(phi.right, j, seen)
            for i in range(k, j):
                total += soft_error_bound(phi.left, i, seen)
        return total
    raise TypeError(f"unexpected node {phi!r}")


class MipBruteForce:
    """Brute-force feasibility of an encoded linear-dynamics model with
    the continuous variables pinned to a simulated trajectory and every
    binary assignment enumerated (vectorized over assignments)."""

    def __init__(self, dynamics: LinearDynamics, spec, t: int):
        self.dynamics = dynamics
        self.t = t
        self.mip = encode_linear_mip(dynamics, spec, t)
        self.cont_vars = list(self.mip.bounds)
        cidx = {v: i for i, v in enumerate(self.cont_vars)}
        nb = len(self.mip.binaries)
        bidx = {b: j for j, b in enumerate(self.mip.binaries)}

        pure_rows, bin_rows = [], []
        for con in self.mip.constraints:
            (bin_rows if any(v in bidx for v in con.coeffs) else pure_rows).append(con)

        def split(rows):
            a_c = np.zeros((len(rows), len(self.cont_vars)))
            a_b = np.zeros((len(rows), nb))
            rhs = np.zeros(len(rows))
            senses = []
            for r, con in enumerate(rows):
                for v, c in con.coeffs.items():
                    if v in bidx:
                        a_b[r, bidx[v]] = c
                    else:
                        a_c[r, cidx[v]] = c
                rhs[r] = con.rhs
                senses.append(con.sense)
            return a_c, a_b, rhs, senses

        self.pure = split(pure_rows)
        self.mixed = split(bin_rows)
        self.bits = (
            np.array(list(itertools.product((0.0, 1.0), repeat=nb)))
            if nb
            else np.zeros((1, 0))
        )
        self.mixed_bin_part = self.mixed[1] @ self.bits.T  # (rows, assignments)

    def _xvec(self, channels, controls) -> np.ndarray:
        x = np.zeros(len(self.cont_vars))
        for i, name in enumerate(self.cont_vars):
            if name == "rho":
                x[i] = 0.0
                continue
            base, _, idx = name.rpartition("_")
            k = int(idx)
            if base == self.dynamics.control_name:
                x[i] = controls[k]
            else:
                x[i] = channels[base][k]
        return x

    @staticmethod
    def _ok(lhs, rhs, senses, tol):
        out = np.ones(lhs.shape[-1] if lhs.ndim > 1 else 1, dtype=bool)
        for r, sense in enumerate(senses):
            row = lhs[r]
            if sense == "<=":
                out &= row <= rhs[r] + tol
            elif sense == ">=":
                out &= row >= rhs[r] - tol
            else:
                out &= np.abs(row - rhs[r]) <= tol
        return out

    def feasible(self, controls, tol: float = 1e-7) -> bool:
        channels = self.dynamics.simulate_channels(controls)
        x = self._xvec(channels, np.asarray(controls, dtype=float))
        for i, name in enumerate(self.cont_vars):
            lo, hi = self.mip.bounds[name]
            if x[i] < lo - tol or x[i] > hi + tol:
                return False
        a_c, _, rhs, senses = self.pure
        lhs = (a_c @ x)[:, None]
        if not self._ok(lhs, rhs, senses, tol).all():
            return False
        a_c, _, rhs, senses = self.mixed
        lhs = (a_c @ x)[:, None] + self.mixed_bin_part
        return bool(self._ok(lhs, rhs, senses, tol).any())


def random_mip_model(rng) -> MipModel:
    """Random small model exercising the LP writer/parser surface."""
    m = MipModel(name=f"random-{int(rng.integers(1_000_000))}")
    m.metadata = {
        "model": "random",
        "note": f"case {int(rng.integers(1000))}",
    }
    m.big_m = float(abs(rng.normal(0, 50)) + 1)
    n_vars = int(rng.integers(2, 8))
    names = [f"v{j}" for j in range(n_vars)]
    for name in names:
        shape = rng.integers(4)
        if shape == 0:
            m.add_var(name, -math.inf, math.inf)
        elif shape == 1:
            m.add_var(name, float(rng.normal()), math.inf)
        elif shape == 2:
            m.add_var(name, -math.inf, float(rng.normal()))
        else:
            lo, hi = sorted(rng.normal(0, 3, size=2))
            m.add_var(name, float(lo), float(hi))
    n_bin = int(rng.integers(0, 4))
    bin_names = [f"z{j}" for j in range(n_bin)]
    for name in bin_names:
        m.add_binary(name)
    everything = names + bin_names
    for j in range(int(rng.integers(1, 7))):
        size = int(rng.integers(1, min(4, len(everything)) + 1))
        chosen = list(rng.choice(everything, size=size, replace=False))
        coeffs = {v: float(rng.normal()) for v in chosen}
        sense = ("<=", ">=", "=")[int(rng.integers(3))]
        m.add_constraint(f"c{j}", coeffs, sense, float(rng.normal()))
    for v in rng.choice(names, size=int(rng.integers(0, n_vars + 1)), replace=False):
        m.objective_linear[str(v)] = float(rng.normal())
    for v in rng.choice(names, size=int(rng.integers(0, n_vars + 1)), replace=False):
        m.objective_quadratic[str(v)] = float(abs(rng.normal()) + 0.1)
    if rng.random() < 0.5 and n_vars >= 3:
        m.add_mccormick(names[0], names[1], names[2], 0.0, float(abs(rng.normal()) + 1), 0.0, float(abs(rng.normal()) + 1))
    return m
