"""Mixed-integer encoding of synthesis problems and LP-format export.

The dynamics enter as equality constraints with the initial-population
approximation in the transmission term; each bilinear product (state
times state, or control times state) is replaced by an auxiliary
variable constrained by its four McCormick envelope inequalities over
the variable boxes.  The MTL satisfaction constraint is encoded with
witness binaries and big-M deactivation:

* conjunctions and always-windows expand into plain obligations,
* disjunctive nodes (or, eventually, until) get one binary per disjunct
  per relevant time index, a selection constraint requiring at least one
  witness, and big-M terms that deactivate the obligations of unselected
  witnesses.

A trajectory admits a feasible binary assignment exactly when it
satisfies the formula, which is what the desk-scale brute-force test in
the suite checks.  Specifications using only conjunction and always
produce binary-free models.

``export_lp`` serializes to CPLEX-style LP text (with a quadratic
objective block for the sum-of-squares norm) and ``import_lp`` parses
that text back; export - import - export is byte-identical.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import models, mtl, synth
from .models import SEIR_SHIELD, SEIR_VACCINATION, SUQC_QUARANTINE, ModelSpec
from .mtl import (
    Always,
    And,
    Atom,
    Eventually,
    MtlFormula,
    MtlTrue,
    Not,
    Or,
    Until,
)
from .synth import SynthesisProblem, VerificationReport

__all__ = [
    "MipModel",
    "Constraint",
    "McCormickPair",
    "LinearDynamics",
    "UnsupportedSpecError",
    "encode_mip",
    "encode_linear_mip",
    "export_lp",
    "import_lp",
    "parse_assignment",
    "replay_assignment",
]


class UnsupportedSpecError(ValueError):
    """Specification outside the encodable fragment."""


def _num(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class Constraint:
    name: str
    coeffs: dict[str, float]
    sense: str  # "<=", ">=", "="
    rhs: float


@dataclass
class McCormickPair:
    """Envelope record for ``product = x * y`` over a box."""

    product: str
    x: str
    y: str
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float


@dataclass
class MipModel:
    name: str = "epimtl-mip"
    metadata: dict[str, str] = dataclass_field(default_factory=dict)
    big_m: float = 0.0
    objective_linear: dict[str, float] = dataclass_field(default_factory=dict)
    objective_quadratic: dict[str, float] = dataclass_field(default_factory=dict)
    constraints: list[Constraint] = dataclass_field(default_factory=list)
    bounds: dict[str, tuple[float, float]] = dataclass_field(default_factory=dict)
    binaries: list[str] = dataclass_field(default_factory=list)
    mccormick: list[McCormickPair] = dataclass_field(default_factory=list)

    # -- construction helpers -------------------------------------------------

    def add_var(self, name: str, lo: float, hi: float) -> str:
        if name in self.bounds or name in self.binaries:
            raise ValueError(f"variable {name!r} declared twice")
        self.bounds[name] = (float(lo), float(hi))
        return name

    def add_binary(self, name: str) -> str:
        if name in self.bounds or name in self.binaries:
            raise ValueError(f"variable {name!r} declared twice")
        self.binaries.append(name)
        return name

    def add_constraint(self, name: str, coeffs: dict[str, float], sense: str, rhs: float) -> None:
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown constraint sense {sense!r}")
        clean = {var: float(c) for var, c in coeffs.items() if c != 0.0}
        unknown = [v for v in clean if v not in self.bounds and v not in self.binaries]
        if unknown:
            raise ValueError(f"constraint {name!r} references undeclared variables {unknown}")
        self.constraints.append(Constraint(name, clean, sense, float(rhs)))

    def add_mccormick(self, product: str, x: str, y: str, x_lo, x_hi, y_lo, y_hi) -> None:
        """Add the four envelope inequalities for ``product = x * y``."""
        self.mccormick.append(
            McCormickPair(product, x, y, float(x_lo), float(x_hi), float(y_lo), float(y_hi))
        )
        n = len(self.mccormick)
        # w >= xL y + x yL - xL yL ;  w >= xU y + x yU - xU yU
        self.add_constraint(
            f"mc{n}_ll", {product: 1.0, y: -x_lo, x: -y_lo}, ">=", -x_lo * y_lo
        )
        self.add_constraint(
            f"mc{n}_uu", {product: 1.0, y: -x_hi, x: -y_hi}, ">=", -x_hi * y_hi
        )
        # w <= xU y + x yL - xU yL ;  w <= xL y + x yU - xL yU
        self.add_constraint(
            f"mc{n}_ul", {product: 1.0, y: -x_hi, x: -y_lo}, "<=", -x_hi * y_lo
        )
        self.add_constraint(
            f"mc{n}_lu", {product: 1.0, y: -x_lo, x: -y_hi}, "<=", -x_lo * y_hi
        )

    # -- evaluation ------------------------------------------------------------

    def violations(self, assignment: dict[str, float], tol: float = 1e-9) -> list[str]:
        """Names of constraints/bounds violated by a full variable assignment."""
        bad = []
        for var, (lo, hi) in self.bounds.items():
            v = assignment.get(var)
            if v is None:
                bad.append(f"missing:{var}")
            elif v < lo - tol or v > hi + tol:
                bad.append(f"bounds:{var}")
        for var in self.binaries:
            v = assignment.get(var)
            if v is None:
                bad.append(f"missing:{var}")
            elif min(abs(v), abs(v - 1.0)) > tol:
                bad.append(f"integrality:{var}")
        for con in self.constraints:
            lhs = sum(c * assignment[v] for v, c in con.coeffs.items())
            if con.sense == "<=" and lhs > con.rhs + tol:
                bad.append(con.name)
            elif con.sense == ">=" and lhs < con.rhs - tol:
                bad.append(con.name)
            elif con.sense == "=" and abs(lhs - con.rhs) > tol:
                bad.append(con.name)
        return bad

    def check_assignment(self, assignment: dict[str, float], tol: float = 1e-9) -> bool:
        return not self.violations(assignment, tol)


# ---------------------------------------------------------------------------
# Dynamics emitters


@dataclass(frozen=True)
class LinearDynamics:
    """Generic linear dynamics ``x[k+1] = A x[k] + b u[k]`` for desk-scale
    encoder validation against the exact semantics."""

    channels: tuple[str, ...]
    a: tuple[tuple[float, ...], ...]
    b: tuple[float, ...]
    x0: tuple[float, ...]
    control_name: str = "u"
    control_bounds: tuple[float, float] = (0.0, 1.0)
    state_bounds: tuple[float, float] = (-100.0, 100.0)

    def simulate_channels(self, controls) -> dict[str, np.ndarray]:
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        u = np.asarray(controls, dtype=float)
        states = [np.asarray(self.x0, dtype=float)]
        for k in range(u.shape[0]):
            states.append(a @ states[-1] + b * u[k])
        arr = np.array(states)
        return {name: arr[:, j] for j, name in enumerate(self.channels)}


class _LinearEmitter:
    def __init__(self, dynamics: LinearDynamics, t: int):
        self.dyn = dynamics
        self.t = t

    def control_vars(self) -> list[str]:
        return [f"{self.dyn.control_name}_{k}" for k in range(self.t)]

    def emit(self, mip: MipModel) -> None:
        dyn, t = self.dyn, self.t
        lo, hi = dyn.state_bounds
        for name in dyn.channels:
            for k in range(t + 1):
                mip.add_var(f"{name}_{k}", lo, hi)
        for k in range(t):
            mip.add_var(f"{dyn.control_name}_{k}", *dyn.control_bounds)
        for j, name in enumerate(dyn.channels):
            mip.add_constraint(f"init_{name}", {f"{name}_0": 1.0}, "=", dyn.x0[j])
        for k in range(t):
            for j, name in enumerate(dyn.channels):
                coeffs = {f"{name}_{k + 1}": 1.0}
                for jj, other in enumerate(dyn.channels):
                    c = dyn.a[j][jj]
                    if c != 0.0:
                        coeffs[f"{other}_{k}"] = coeffs.get(f"{other}_{k}", 0.0) - c
                if dyn.b[j] != 0.0:
                    coeffs[f"{dyn.control_name}_{k}"] = -dyn.b[j]
                mip.add_constraint(f"dyn_{name}_{k}", coeffs, "=", 0.0)

    def channel_var(self, mip: MipModel, channel: str, k: int) -> str:
        if channel not in self.dyn.channels:
            raise UnsupportedSpecError(f"unknown channel {channel!r} for linear dynamics")
        return f"{channel}_{k}"


class _SeirVaccinationEmitter:
    def __init__(self, model: ModelSpec, t: int):
        self.model = model
        self.t = t
        self._derived: set[str] = set()

    def control_vars(self) -> list[str]:
        return [f"V_{k}" for k in range(self.t)]

    def emit(self, mip: MipModel) -> None:
        p = self.model.params
        t, n0, ts = self.t, p.n0, p.ts
        for name in ("I", "E", "S", "R", "D"):
            for k in range(t + 1):
                mip.add_var(f"{name}_{k}", 0.0, n0)
        for k in range(t):
            mip.add_var(f"V_{k}", 0.0, n0)
        for k in range(t):
            mip.add_var(f"W_{k}", 0.0, n0 * n0)

        init = self.model.init
        for name, value in (("I", init.i), ("E", init.e), ("S", init.s), ("R", init.r)):
            mip.add_constraint(f"init_{name}", {f"{name}_0": 1.0}, "=", value)

        decay_i = 1.0 - ts * (p.recovery_rate + p.death_rate + p.fatality_rate)
        decay_e = 1.0 - ts * (p.death_rate + p.progression_rate)
        c_w = ts * p.transmission_rate / n0
        for k in range(t):
            mip.add_constraint(
                f"dyn_I_{k}",
                {f"I_{k + 1}": 1.0, f"I_{k}": -decay_i, f"E_{k}": -ts * p.progression_rate},
                "=",
                0.0,
            )
            mip.add_constraint(
                f"dyn_E_{k}",
                {f"E_{k + 1}": 1.0, f"E_{k}": -decay_e, f"W_{k}": -c_w},
                "=",
                0.0,
            )
            lam = ts * p.birth_rate
            mip.add_constraint(
                f"dyn_S_{k}",
                {
                    f"S_{k + 1}": 1.0,
                    f"S_{k}": -(1.0 + lam - ts * p.death_rate),
                    f"I_{k}": -lam,
                    f"E_{k}": -lam,
                    f"R_{k}": -lam,
                    f"W_{k}": c_w,
                    f"V_{k}": ts,
                },
                "=",
                0.0,
            )
            mip.add_constraint(
                f"dyn_R_{k}",
                {
                    f"R_{k + 1}": 1.0,
                    f"R_{k}": -(1.0 - ts * p.death_rate),
                    f"I_{k}": -ts * p.recovery_rate,
                    f"V_{k}": -ts,
                },
                "=",
                0.0,
            )
            mip.add_constraint(f"vbound_{k}", {f"V_{k}": 1.0, f"S_{k}": -1.0}, "<=", 0.0)
        for k in range(t + 1):
            mip.add_constraint(
                f"def_D_{k}",
                {f"D_{k}": 1.0, f"I_{k}": 1.0, f"E_{k}": 1.0, f"S_{k}": 1.0, f"R_{k}": 1.0},
                "=",
                n0,
            )
        for k in range(t):
            mip.add_mccormick(f"W_{k}", f"S_{k}", f"I_{k}", 0.0, n0, 0.0, n0)

    def channel_var(self, mip: MipModel, channel: str, k: int) -> str:
        n0 = self.model.params.n0
        if channel in ("I", "E", "S", "R", "D"):
            return f"{channel}_{k}"
        if channel == "dD":
            name = f"dD_{k}"
            if name not in self._derived:
                self._derived.add(name)
                mip.add_var(name, -n0, n0)
                if k == 0:
                    mip.add_constraint("def_dD_0", {name: 1.0}, "=", 0.0)
                else:
                    mip.add_constraint(
                        f"def_dD_{k}", {name: 1.0, f"D_{k}": -1.0, f"D_{k - 1}": 1.0}, "=", 0.0
                    )
            return name
        if channel == "N":
            name = f"N_{k}"
            if name not in self._derived:
                self._derived.add(name)
                mip.add_var(name, 0.0, n0)
                mip.add_constraint(
                    f"def_N_{k}",
                    {name: 1.0, f"I_{k}": -1.0, f"E_{k}": -1.0, f"S_{k}": -1.0, f"R_{k}": -1.0},
                    "=",
                    0.0,
                )
            return name
        raise UnsupportedSpecError(f"channel {channel!r} is not available in this model")


class _SeirShieldEmitter(_SeirVaccinationEmitter):
    """Shield-immunity dynamics under the initial-population approximation.

    The exact transmission flux is ``beta S I / (N + chi R)``; with the
    denominator's live population approximated by ``n0``, introducing the
    flux ``F`` and the product ``P = chi * R`` turns the defining relation
    into ``n0 F + F P = beta S I``, and the remaining products (``S I``
    and ``F P``) get McCormick envelopes.  The export is therefore a
    relaxation and is flagged as approximate in the header.
    """

    def control_vars(self) -> list[str]:
        return [f"chi_{k}" for k in range(self.t)]

    def emit(self, mip: MipModel) -> None:
        p = self.model.params
        t, n0, ts = self.t, p.n0, p.ts
        chi_max = self.model.control_upper
        f_max = p.transmission_rate * n0
        p_max = chi_max * n0
        for name in ("I", "E", "S", "R", "D"):
            for k in range(t + 1):
                mip.add_var(f"{name}_{k}", 0.0, n0)
        for k in range(t):
            mip.add_var(f"chi_{k}", 0.0, chi_max)
        for k in range(t):
            mip.add_var(f"W_{k}", 0.0, n0 * n0)
            mip.add_var(f"F_{k}", 0.0, f_max)
            mip.add_var(f"P_{k}", 0.0, p_max)
            mip.add_var(f"Y_{k}", 0.0, f_max * p_max)

        init = self.model.init
        for name, value in (("I", init.i), ("E", init.e), ("S", init.s), ("R", init.r)):
            mip.add_constraint(f"init_{name}", {f"{name}_0": 1.0}, "=", value)

        decay_i = 1.0 - ts * (p.recovery_rate + p.death_rate + p.fatality_rate)
        decay_e = 1.0 - ts * (p.death_rate + p.progression_rate)
        for k in range(t):
            mip.add_constraint(
                f"dyn_I_{k}",
                {f"I_{k + 1}": 1.0, f"I_{k}": -decay_i, f"E_{k}": -ts * p.progression_rate},
                "=",
                0.0,
            )
            mip.add_constraint(
                f"dyn_E_{k}",
                {f"E_{k + 1}": 1.0, f"E_{k}": -decay_e, f"F_{k}": -ts},
                "=",
                0.0,
            )
            lam = ts * p.birth_rate
            mip.add_constraint(
                f"dyn_S_{k}",
                {
                    f"S_{k + 1}": 1.0,
                    f"S_{k}": -(1.0 + lam - ts * p.death_rate),
                    f"I_{k}": -lam,
                    f"E_{k}": -lam,
                    f"R_{k}": -lam,
                    f"F_{k}": ts,
                },
                "=",
                0.0,
            )
            mip.add_constraint(
                f"dyn_R_{k}",
                {
                    f"R_{k + 1}": 1.0,
                    f"R_{k}": -(1.0 - ts * p.death_rate),
                    f"I_{k}": -ts * p.recovery_rate,
                },
                "=",
                0.0,
            )
            # n0 F + Y = beta W with Y = F P and P = chi R.
            mip.add_constraint(
                f"def_flux_{k}",
                {f"F_{k}": n0, f"Y_{k}": 1.0, f"W_{k}": -p.transmission_rate},
                "=",
                0.0,
            )
        for k in range(t + 1):
            mip.add_constraint(
                f"def_D_{k}",
                {f"D_{k}": 1.0, f"I_{k}": 1.0, f"E_{k}": 1.0, f"S_{k}": 1.0, f"R_{k}": 1.0},
                "=",
                n0,
            )
        for k in range(t):
            mip.add_mccormick(f"W_{k}", f"S_{k}", f"I_{k}", 0.0, n0, 0.0, n0)
            mip.add_mccormick(f"P_{k}", f"chi_{k}", f"R_{k}", 0.0, chi_max, 0.0, n0)
            mip.add_mccormick(f"Y_{k}", f"F_{k}", f"P_{k}", 0.0, f_max, 0.0, p_max)


class _SuqcEmitter:
    def __init__(self, model: ModelSpec, t: int):
        self.model = model
        self.t = t
        self._derived: set[str] = set()

    def control_vars(self) -> list[str]:
        return [f"q_{k}" for k in range(self.t)]

    def emit(self, mip: MipModel) -> None:
        p = self.model.params
        t, n0, ts = self.t, p.n0, p.ts
        q_max = self.model.control_upper
        for name in ("S", "U", "Q", "C"):
            for k in range(t + 1):
                mip.add_var(f"{name}_{k}", 0.0, n0)
        for k in range(t):
            mip.add_var(f"q_{k}", 0.0, q_max)
        for k in range(t):
            mip.add_var(f"W_{k}", 0.0, n0 * n0)
            mip.add_var(f"P_{k}", 0.0, q_max * n0)

        init = self.model.init
        for name, value in (("S", init.s), ("U", init.u), ("Q", init.q), ("C", init.c)):
            mip.add_constraint(f"init_{name}", {f"{name}_0": 1.0}, "=", value)

        c_w = ts * p.infection_rate / n0
        conf = ts * p.total_confirmation_rate
        for k in range(t):
            mip.add_constraint(
                f"dyn_S_{k}", {f"S_{k + 1}": 1.0, f"S_{k}": -1.0, f"W_{k}": c_w}, "=", 0.0
            )
            mip.add_constraint(
                f"dyn_U_{k}",
                {f"U_{k + 1}": 1.0, f"U_{k}": -1.0, f"W_{k}": -c_w, f"P_{k}": ts},
                "=",
                0.0,
            )
            mip.add_constraint(
                f"dyn_Q_{k}",
                {f"Q_{k + 1}": 1.0, f"Q_{k}": -(1.0 - conf), f"P_{k}": -ts},
                "=",
                0.0,
            )
            mip.add_constraint(
                f"dyn_C_{k}",
                {f"C_{k + 1}": 1.0, f"C_{k}": -1.0, f"Q_{k}": -conf},
                "=",
                0.0,
            )
        for k in range(t):
            mip.add_mccormick(f"W_{k}", f"U_{k}", f"S_{k}", 0.0, n0, 0.0, n0)
            mip.add_mccormick(f"P_{k}", f"q_{k}", f"U_{k}", 0.0, q_max, 0.0, n0)

    def channel_var(self, mip: MipModel, channel: str, k: int) -> str:
        n0 = self.model.params.n0
        if channel in ("S", "U", "Q", "C"):
            return f"{channel}_{k}"
        if channel == "dC":
            name = f"dC_{k}"
            if name not in self._derived:
                self._derived.add(name)
                mip.add_var(name, -n0, n0)
                if k == 0:
                    mip.add_constraint("def_dC_0", {name: 1.0}, "=", 0.0)
                else:
                    mip.add_constraint(
                        f"def_dC_{k}", {name: 1.0, f"C_{k}": -1.0, f"C_{k - 1}": 1.0}, "=", 0.0
                    )
            return name
        if channel == "N":
            name = f"N_{k}"
            if name not in self._derived:
                self._derived.add(name)
                mip.add_var(name, 0.0, n0)
                mip.add_constraint(
                    f"def_N_{k}",
                    {name: 1.0, f"S_{k}": -1.0, f"U_{k}": -1.0, f"Q_{k}": -1.0, f"C_{k}": -1.0},
                    "=",
                    0.0,
                )
            return name
        raise UnsupportedSpecError(f"channel {channel!r} is not available in this model")


# ---------------------------------------------------------------------------
# MTL constraint encoding


def _check_fragment(phi: MtlFormula) -> None:
    if isinstance(phi, (MtlTrue, Atom)):
        return
    if isinstance(phi, Not):
        if not isinstance(phi.operand, Atom):
            raise UnsupportedSpecError(
                "negation is only supported directly on atoms in the MIP encoding"
            )
        return
    if isinstance(phi, (And, Or)):
        _check_fragment(phi.left)
        _check_fragment(phi.right)
        return
    if isinstance(phi, Until):
        _check_fragment(phi.left)
        _check_fragment(phi.right)
        return
    if isinstance(phi, (Always, Eventually)):
        _check_fragment(phi.operand)
        return
    raise UnsupportedSpecError(f"unsupported node {type(phi).__name__}")


def _flip(atom: Atom) -> Atom:
    return Atom(atom.channel, ">=" if atom.op == "<=" else "<=", atom.threshold)


class _MtlEncoder:
    def __init__(self, mip: MipModel, emitter, big_m: float):
        self.mip = mip
        self.emitter = emitter
        self.big_m = big_m
        self.node_index: dict[int, int] = {}
        self.counter = 0
        self.seen: set[tuple] = set()
        self.shared_binaries: dict[tuple, str] = {}

    def _index(self, phi: MtlFormula) -> int:
        key = id(phi)
        if key not in self.node_index:
            self.node_index[key] = len(self.node_index)
        return self.node_index[key]

    def _next_name(self, prefix: str) -> str:
        self.counter += 1
        return f"{prefix}_{self.counter}"

    def _binary(self, key: tuple, name: str) -> str:
        if key not in self.shared_binaries:
            self.shared_binaries[key] = self.mip.add_binary(name)
        return self.shared_binaries[key]

    def encode(self, phi: MtlFormula, k: int, guards: tuple[str, ...]) -> None:
        key = (id(phi), k, guards)
        if key in self.seen:
            return
        self.seen.add(key)

        if isinstance(phi, MtlTrue):
            return
        if isinstance(phi, Not):
            self._encode_atom(_flip(phi.operand), k, guards)
            return
        if isinstance(phi, Atom):
            self._encode_atom(phi, k, guards)
            return
        if isinstance(phi, And):
            self.encode(phi.left, k, guards)
            self.encode(phi.right, k, guards)
            return
        if isinstance(phi, Always):
            for j in phi.interval.window(k):
                self.encode(phi.operand, j, guards)
            return
        if isinstance(phi, Or):
            idx = self._index(phi)
            left = self._binary((idx, k, "L"), f"b{idx}_{k}_l")
            right = self._binary((idx, k, "R"), f"b{idx}_{k}_r")
            self.mip.add_constraint(
                self._next_name("sel"), {left: 1.0, right: 1.0}, ">=", 1.0
            )
            self.encode(phi.left, k, guards + (left,))
            self.encode(phi.right, k, guards + (right,))
            return
        if isinstance(phi, Eventually):
            # Witness binaries are shared per absolute index: a binary
            # asserts "the operand holds here", which any window may use.
            idx = self._index(phi)
            names = [self._binary((idx, j), f"b{idx}_{j}") for j in phi.interval.window(k)]
            self.mip.add_constraint(
                self._next_name("sel"), {b: 1.0 for b in names}, ">=", 1.0
            )
            for j, b in zip(phi.interval.window(k), names):
                self.encode(phi.operand, j, guards + (b,))
            return
        if isinstance(phi, Until):
            # The prefix obligation depends on both endpoints, so until
            # witnesses are keyed by (start, witness index).
            idx = self._index(phi)
            names = [
                self._binary((idx, k, j), f"b{idx}_{k}_{j}") for j in phi.interval.window(k)
            ]
            self.mip.add_constraint(
                self._next_name("sel"), {b: 1.0 for b in names}, ">=", 1.0
            )
            for j, b in zip(phi.interval.window(k), names):
                self.encode(phi.right, j, guards + (b,))
                for i in range(k, j):
                    self.encode(phi.left, i, guards + (b,))
            return
        raise UnsupportedSpecError(f"unsupported node {type(phi).__name__}")

    def _encode_atom(self, atom: Atom, k: int, guards: tuple[str, ...]) -> None:
        var = self.emitter.channel_var(self.mip, atom.channel, k)
        m = self.big_m
        if atom.op == "<=":
            coeffs = {var: 1.0, "rho": 1.0}
            for b in guards:
                coeffs[b] = coeffs.get(b, 0.0) + m
            self.mip.add_constraint(
                self._next_name("mtl"), coeffs, "<=", atom.threshold + m * len(guards)
            )
        else:
            coeffs = {var: 1.0, "rho": -1.0}
            for b in guards:
                coeffs[b] = coeffs.get(b, 0.0) - m
            self.mip.add_constraint(
                self._next_name("mtl"), coeffs, ">=", atom.threshold - m * len(guards)
            )


def _encode(emitter, spec: MtlFormula, t: int, effort_norm: str, big_m: float, metadata):
    _check_fragment(spec)
    if mtl.horizon(spec) > t:
        raise UnsupportedSpecError(
            f"specification horizon {mtl.horizon(spec)} exceeds the encoding horizon {t}"
        )
    mip = MipModel(metadata=dict(metadata), big_m=float(big_m))
    emitter.emit(mip)
    # Satisfaction margin slack: fixing rho > 0 strengthens every atom
    # obligation by that margin; left free it is costless.
    mip.add_var("rho", 0.0, math.inf)
    controls = emitter.control_vars()
    if effort_norm == "sum":
        mip.objective_linear = {v: 1.0 for v in controls}
    elif effort_norm == "sum_squares":
        mip.objective_quadratic = {v: 1.0 for v in controls}
    elif effort_norm == "sup":
        uppers = [mip.bounds[v][1] for v in controls]
        mip.add_var("t_sup", 0.0, max(uppers) if uppers else 0.0)
        for j, v in enumerate(controls):
            mip.add_constraint(f"sup_{j}", {v: 1.0, "t_sup": -1.0}, "<=", 0.0)
        mip.objective_linear = {"t_sup": 1.0}
    else:
        raise UnsupportedSpecError(f"unknown effort norm {effort_norm!r}")
    _MtlEncoder(mip, emitter, big_m).encode(spec, 0, ())
    return mip


def encode_mip(
    problem: SynthesisProblem,
    allow_shield_approx: bool = False,
    preset_name: str | None = None,
) -> MipModel:
    """Encode a synthesis problem as a mixed-integer model.

    The shield model has a fractional transmission term with no exact
    mixed-integer form; it is exported only with
    ``allow_shield_approx=True`` and the file header flags the
    approximation.
    """
    model = problem.model
    t = problem.horizon_t
    metadata = {
        "model": model.kind,
        "preset": preset_name or "custom",
        "spec": mtl.format_formula(problem.spec),
        "effort_norm": problem.effort_norm,
        "horizon": str(t),
    }
    big_m = 2.0 * model.params.n0
    if model.kind == SEIR_VACCINATION:
        metadata["approximation"] = (
            f"transmission denominator fixed at n0 = {_num(model.params.n0)}"
        )
        emitter = _SeirVaccinationEmitter(model, t)
    elif model.kind == SEIR_SHIELD:
        if not allow_shield_approx:
            raise UnsupportedSpecError(
                "the shield model exports only under the initial-population "
                "approximation; pass allow_shield_approx=True to consent"
            )
        metadata["approximation"] = (
            "APPROXIMATE: shield transmission beta*S*I/(N + chi*R) linearized with "
            f"N ~ n0 = {_num(model.params.n0)} and McCormick-relaxed products; "
            "the exact fractional dynamics stay in the penalty solver"
        )
        emitter = _SeirShieldEmitter(model, t)
    elif model.kind == SUQC_QUARANTINE:
        metadata["approximation"] = (
            f"transmission denominator fixed at n0 = {_num(model.params.n0)}"
        )
        emitter = _SuqcEmitter(model, t)
    else:
        raise UnsupportedSpecError(f"unknown model kind {model.kind!r}")
    return _encode(emitter, problem.spec, t, problem.effort_norm, big_m, metadata)


def encode_linear_mip(
    dynamics: LinearDynamics,
    spec: MtlFormula,
    horizon_t: int,
    effort_norm: str = "sum_squares",
    big_m: float | None = None,
) -> MipModel:
    """Encode generic linear dynamics; used to validate the MTL encoding
    against the exact semantics by brute force at desk scale."""
    if big_m is None:
        big_m = 2.0 * max(abs(b) for b in dynamics.state_bounds)
    metadata = {
        "model": "linear",
        "spec": mtl.format_formula(spec),
        "effort_norm": effort_norm,
        "horizon": str(horizon_t),
    }
    return _encode(_LinearEmitter(dynamics, horizon_t), spec, horizon_t, effort_norm, big_m, metadata)


# ---------------------------------------------------------------------------
# LP format


def _format_terms(coeffs: dict[str, float]) -> str:
    parts: list[str] = []
    for var, c in coeffs.items():
        if not parts:
            parts.append(f"{_num(c)} {var}" if c >= 0 else f"- {_num(-c)} {var}")
        elif c >= 0:
            parts.append(f"+ {_num(c)} {var}")
        else:
            parts.append(f"- {_num(-c)} {var}")
    return " ".join(parts)


def export_lp(m: MipModel) -> str:
    """Serialize to CPLEX-style LP text.

    Header comment lines carry the model metadata, the big-M constant
    and the McCormick pair records so that :func:`import_lp` restores an
    equal model and re-export is byte-identical.
    """
    lines = [f"\\ {m.name}"]
    for key, value in m.metadata.items():
        lines.append(f"\\ {key}: {value}")
    lines.append(f"\\ big_m: {_num(m.big_m)}")
    for pair in m.mccormick:
        lines.append(
            f"\\ mccormick: {pair.product} = {pair.x} * {pair.y} in "
            f"[{_num(pair.x_lo)},{_num(pair.x_hi)}]x[{_num(pair.y_lo)},{_num(pair.y_hi)}]"
        )
    lines.append("Minimize")
    obj = _format_terms(m.objective_linear)
    if m.objective_quadratic:
        quad_parts: list[str] = []
        for var, c in m.objective_quadratic.items():
            coeff = 2.0 * c
            if not quad_parts:
                quad_parts.append(f"{_num(coeff)} {var} ^ 2" if coeff >= 0 else f"- {_num(-coeff)} {var} ^ 2")
            elif coeff >= 0:
                quad_parts.append(f"+ {_num(coeff)} {var} ^ 2")
            else:
                quad_parts.append(f"- {_num(-coeff)} {var} ^ 2")
        block = "[ " + " ".join(quad_parts) + " ] / 2"
        obj = f"{obj} + {block}" if obj else block
    lines.append(f" obj: {obj}" if obj else " obj:")
    lines.append("Subject To")
    for con in m.constraints:
        lines.append(f" {con.name}: {_format_terms(con.coeffs)} {con.sense} {_num(con.rhs)}")
    lines.append("Bounds")
    for var, (lo, hi) in m.bounds.items():
        if lo == -math.inf and hi == math.inf:
            lines.append(f" {var} free")
        elif lo == -math.inf:
            lines.append(f" {var} <= {_num(hi)}")
        elif hi == math.inf:
            lines.append(f" {var} >= {_num(lo)}")
        else:
            lines.append(f" {_num(lo)} <= {var} <= {_num(hi)}")
    if m.binaries:
        lines.append("Binaries")
        for var in m.binaries:
            lines.append(f" {var}")
    lines.append("End")
    return "\n".join(lines) + "\n"


_MC_RE = re.compile(
    r"^(?P<w>\S+) = (?P<x>\S+) \* (?P<y>\S+) in "
    r"\[(?P<xlo>[^,]+),(?P<xhi>[^\]]+)\]x\[(?P<ylo>[^,]+),(?P<yhi>[^\]]+)\]$"
)


def _parse_terms(tokens: list[str]) -> dict[str, float]:
    coeffs: dict[str, float] = {}
    sign = 1.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "+":
            sign = 1.0
            i += 1
            continue
        if tok == "-":
            sign = -1.0
            i += 1
            continue
        coeff = sign * float(tok)
        var = tokens[i + 1]
        coeffs[var] = coeffs.get(var, 0.0) + coeff
        sign = 1.0
        i += 2
    return coeffs


def _parse_quadratic_terms(tokens: list[str]) -> dict[str, float]:
    """Parse ``c var ^ 2`` terms from inside an LP quadratic block."""
    coeffs: dict[str, float] = {}
    sign = 1.0
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok == "+":
            sign = 1.0
            i += 1
            continue
        if tok == "-":
            sign = -1.0
            i += 1
            continue
        coeff = sign * float(tok)
        var = tokens[i + 1]
        if tokens[i + 2 : i + 4] != ["^", "2"]:
            raise ValueError(f"malformed quadratic term near {var!r}")
        coeffs[var] = coeffs.get(var, 0.0) + coeff
        sign = 1.0
        i += 4
    return coeffs


def import_lp(text: str) -> MipModel:
    """Parse LP text produced by :func:`export_lp` back into a model."""
    m = MipModel()
    binaries_declared: list[str] = []
    section = "header"
    first_comment = True
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            body = line[1:].strip()
            if first_comment:
                m.name = body
                first_comment = False
                continue
            key, _, value = body.partition(":")
            key, value = key.strip(), value.strip()
            if key == "big_m":
                m.big_m = float(value)
            elif key == "mccormick":
                match = _MC_RE.match(value)
                if not match:
                    raise ValueError(f"malformed mccormick record: {value!r}")
                m.mccormick.append(
                    McCormickPair(
                        match["w"],
                        match["x"],
                        match["y"],
                        float(match["xlo"]),
                        float(match["xhi"]),
                        float(match["ylo"]),
                        float(match["yhi"]),
                    )
                )
            else:
                m.metadata[key] = value
            continue
        lowered = line.lower()
        if lowered == "minimize":
            section = "objective"
            continue
        if lowered == "subject to":
            section = "constraints"
            continue
        if lowered == "bounds":
            section = "bounds"
            continue
        if lowered == "binaries":
            section = "binaries"
            continue
        if lowered == "end":
            break

        if section == "objective":
            _, _, expr = line.partition(":")
            tokens = expr.split()
            if "[" in tokens:
                start = tokens.index("[")
                end = tokens.index("]")
                quad = _parse_quadratic_terms(tokens[start + 1 : end])
                m.objective_quadratic = {v: c / 2.0 for v, c in quad.items()}
                linear_tokens = tokens[:start]
                if linear_tokens and linear_tokens[-1] == "+":
                    linear_tokens = linear_tokens[:-1]
                tokens = linear_tokens
            m.objective_linear = _parse_terms(tokens)
        elif section == "constraints":
            name, _, rest = line.partition(":")
            tokens = rest.split()
            sense_pos = max(
                (tokens.index(s) for s in ("<=", ">=", "=") if s in tokens),
                default=-1,
            )
            if sense_pos < 0:
                raise ValueError(f"constraint without sense: {line!r}")
            sense = tokens[sense_pos]
            coeffs = _parse_terms(tokens[:sense_pos])
            rhs = float(tokens[sense_pos + 1])
            m.constraints.append(Constraint(name.strip(), coeffs, sense, rhs))
        elif section == "bounds":
            tokens = line.split()
            if len(tokens) == 2 and tokens[1] == "free":
                m.bounds[tokens[0]] = (-math.inf, math.inf)
            elif len(tokens) == 3 and tokens[1] == ">=":
                m.bounds[tokens[0]] = (float(tokens[2]), math.inf)
            elif len(tokens) == 3 and tokens[1] == "<=":
                m.bounds[tokens[0]] = (-math.inf, float(tokens[2]))
            elif len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
                m.bounds[tokens[2]] = (float(tokens[0]), float(tokens[4]))
            else:
                raise ValueError(f"malformed bounds line: {line!r}")
        elif section == "binaries":
            binaries_declared.append(line)
        else:
            raise ValueError(f"unexpected line outside any section: {line!r}")
    m.binaries = binaries_declared
    return m


# ---------------------------------------------------------------------------
# Solver assignment replay


def parse_assignment(text: str) -> dict[str, float]:
    """Parse ``name value`` lines (a common solver solution dump)."""
    assignment: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace("=", " ").split()
        if len(parts) != 2:
            raise ValueError(f"malformed assignment line: {raw!r}")
        assignment[parts[0]] = float(parts[1])
    return assignment


_CONTROL_PREFIX = {SEIR_VACCINATION: "V", SEIR_SHIELD: "chi", SUQC_QUARANTINE: "q"}


def replay_assignment(text: str, problem: SynthesisProblem) -> VerificationReport:
    """Extract the control sequence from a solver assignment and verify it
    against the exact dynamics and semantics."""
    assignment = parse_assignment(text)
    prefix = _CONTROL_PREFIX[problem.model.kind]
    values = []
    for k in range(problem.horizon_t):
        name = f"{prefix}_{k}"
        if name not in assignment:
            raise ValueError(f"assignment is missing control variable {name!r}")
        values.append(assignment[name])
    return synth.verify(np.asarray(values), problem)
