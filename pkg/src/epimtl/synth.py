"""Minimum-effort control synthesis under MTL specifications.

The optimizer is a penalty/continuation method over the smooth
robustness surrogate: the decision vector is a per-day control fraction
in ``[0, 1]``; the objective is the control-effort norm plus a quadratic
penalty on the shortfall of the smooth robustness below a small margin.
The smoothing temperature and the penalty weight are increased over a
schedule of outer rounds, each solved by projected gradient descent with
a backtracking line search, and the penalty weight keeps growing until
the round equilibrium satisfies the exact Boolean semantics.  Gradients
are computed analytically by back-propagating through the model step
recursions and the smooth robustness; a finite-difference check is part
of the test suite.

Satisfaction of the returned control is always re-established with the
exact Boolean semantics; the smooth surrogate is advisory only.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import models, mtl
from .models import (
    SEIR_SHIELD,
    SEIR_VACCINATION,
    SUQC_QUARANTINE,
    ModelSpec,
    SimulationError,
)
from .mtl import MtlFormula, Trajectory

__all__ = [
    "ControlSequence",
    "MethodOptions",
    "SynthesisProblem",
    "SynthesisResult",
    "VerificationReport",
    "SynthesisError",
    "EFFORT_NORMS",
    "effort",
    "effort_gradient",
    "synthesize",
    "verify",
]

EFFORT_NORMS = ("sum_squares", "sum", "sup")

_NEG_ABORT = models._NEGATIVITY_ABORT


class SynthesisError(ValueError):
    """Inconsistent synthesis problem."""


@dataclass(frozen=True)
class ControlSequence:
    """Daily control values with their kind and static upper bound.

    ``upper`` is ``None`` for vaccination, whose bound is the current
    susceptible population and is enforced during simulation.
    """

    values: np.ndarray
    kind: str
    upper: float | None = None

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 1:
            raise SynthesisError("control values must be one-dimensional")
        if not np.all(np.isfinite(arr)):
            raise SynthesisError("control values must be finite")
        if np.any(arr < 0):
            raise SynthesisError("control values must be nonnegative")
        if self.upper is not None and np.any(arr > self.upper):
            raise SynthesisError(f"control values exceed the bound {self.upper}")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MethodOptions:
    """Penalty-method schedule and budgets.

    ``beta_scale`` divides the smoothing temperatures; by default it is
    the smallest nonzero atom threshold magnitude of the specification,
    so the schedule adapts to the units of the constrained channels.
    After the base rounds, the penalty weight keeps growing by
    ``mu_growth`` for up to ``max_extra_rounds`` more rounds until the
    iterate satisfies the exact semantics.
    """

    seed: int = 0
    margin: float = 1e-4
    mu_initial: float = 1e2
    mu_growth: float = 10.0
    beta_multipliers: tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    beta_scale: float | None = None
    max_inner_iterations: int = 500
    gradient_tolerance: float = 1e-6
    random_starts: int = 5
    constant_scan_points: int = 21
    max_extra_rounds: int = 6


@dataclass(frozen=True)
class SynthesisProblem:
    model: ModelSpec
    spec: MtlFormula
    horizon_t: int
    effort_norm: str = "sum_squares"
    method: MethodOptions = field(default_factory=MethodOptions)

    def __post_init__(self):
        if self.effort_norm not in EFFORT_NORMS:
            raise SynthesisError(
                f"unknown effort norm {self.effort_norm!r}; choose from {EFFORT_NORMS}"
            )
        if self.horizon_t < 0:
            raise SynthesisError(f"horizon_t must be nonnegative, got {self.horizon_t}")
        needed = mtl.horizon(self.spec)
        if needed > self.horizon_t:
            raise SynthesisError(
                f"specification horizon {needed} exceeds the problem horizon {self.horizon_t}"
            )
        unknown = {a.channel for a in mtl.atoms(self.spec)} - set(self.model.channels)
        if unknown:
            raise SynthesisError(
                f"specification references channels {sorted(unknown)} "
                f"not produced by the {self.model.kind} model"
            )


@dataclass
class SynthesisResult:
    control: ControlSequence
    trajectory: Trajectory
    effort: float
    robustness: float
    satisfied: bool
    iterations: int
    wall_time: float
    method: str
    seed: int

    def report_json(self) -> str:
        """Deterministic JSON report; excludes wall time so that a fixed
        seed fully determines the bytes."""
        payload = {
            "method": self.method,
            "seed": self.seed,
            "satisfied": self.satisfied,
            "effort": self.effort,
            "robustness": self.robustness,
            "iterations": self.iterations,
            "control_kind": self.control.kind,
            "control": [float(v) for v in self.control.values],
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class VerificationReport:
    satisfied: bool
    robustness: float
    effort: float
    trajectory: Trajectory


def effort(control, norm: str = "sum_squares") -> float:
    """Control-effort norm: sum of squares (default), sum, or sup."""
    values = np.asarray(getattr(control, "values", control), dtype=float)
    if norm == "sum_squares":
        return float(np.dot(values, values))
    if norm == "sum":
        return float(values.sum())
    if norm == "sup":
        return float(values.max()) if values.size else 0.0
    raise SynthesisError(f"unknown effort norm {norm!r}")


def effort_gradient(values: np.ndarray, norm: str) -> np.ndarray:
    if norm == "sum_squares":
        return 2.0 * values
    if norm == "sum":
        return np.ones_like(values)
    if norm == "sup":
        # Subgradient: the first maximizer.
        g = np.zeros_like(values)
        if values.size:
            g[int(np.argmax(values))] = 1.0
        return g
    raise SynthesisError(f"unknown effort norm {norm!r}")


# ---------------------------------------------------------------------------
# Rollouts with fraction-parameterized controls
#
# The decision vector is a fraction per day in [0, 1]; the realized
# control is fraction * cap.  For shield and quarantine the cap is the
# static bound.  For vaccination the cap additionally keeps the next
# susceptible count nonnegative, so every fraction vector in the box
# yields an admissible rollout.  The forward arithmetic mirrors the
# model step functions expression for expression, which keeps the final
# re-verification through ``models.simulate`` bit-compatible.


def _abort_check(k, i, e, s, r):
    if not (math.isfinite(i) and math.isfinite(e) and math.isfinite(s) and math.isfinite(r)):
        raise SimulationError(k + 1, f"non-finite state ({i}, {e}, {s}, {r})")
    if i < _NEG_ABORT or e < _NEG_ABORT or s < _NEG_ABORT or r < _NEG_ABORT:
        raise SimulationError(k + 1, f"compartment went negative: ({i}, {e}, {s}, {r})")


class _VaccinationRollout:
    def __init__(self, model: ModelSpec):
        self.model = model
        self.p = model.params

    def forward(self, fractions: np.ndarray):
        p = self.p
        ts = p.ts
        lam, mu = p.birth_rate, p.death_rate
        beta, eps = p.transmission_rate, p.progression_rate
        gam, alf = p.recovery_rate, p.fatality_rate
        approx = self.model.use_n0_approx
        t = len(fractions)
        init = self.model.init
        i, e, s, r = init.i, init.e, init.s, init.r
        states = np.empty((t + 1, 4))
        states[0] = (i, e, s, r)
        caps = np.empty(t)
        branches = np.empty(t, dtype=np.int64)  # 0: zero, 1: expr, 2: s
        controls = np.empty(t)
        for k in range(t):
            n = i + e + s + r
            den = p.n0 if approx else n
            flux = beta * s * i / den
            drift = lam * n - mu * s
            cap_expr = s / ts + drift - flux
            if cap_expr <= 0.0:
                cap, branch = 0.0, 0
            elif cap_expr < s:
                cap, branch = cap_expr, 1
            else:
                cap, branch = s, 2
            v = fractions[k] * cap
            i, e, s, r = (
                i + ts * eps * e - ts * (gam + mu + alf) * i,
                e + ts * flux - ts * (mu + eps) * e,
                s + ts * lam * n - ts * mu * s - ts * flux - ts * v,
                r + ts * gam * i - ts * mu * r + ts * v,
            )
            _abort_check(k, i, e, s, r)
            caps[k], branches[k], controls[k] = cap, branch, v
            states[k + 1] = (i, e, s, r)
        return states, caps, branches, controls

    def backward(self, fractions, states, caps, branches, g_states, g_controls):
        p = self.p
        ts = p.ts
        lam, mu = p.birth_rate, p.death_rate
        beta, eps = p.transmission_rate, p.progression_rate
        gam, alf = p.recovery_rate, p.fatality_rate
        approx = self.model.use_n0_approx
        t = len(fractions)
        l0, l1, l2, l3 = g_states[t]
        grad_f = np.empty(t)
        decay_i = 1.0 - ts * (gam + mu + alf)
        decay_e = 1.0 - ts * (mu + eps)
        for k in range(t - 1, -1, -1):
            i, e, s, r = states[k]
            n = i + e + s + r
            den = p.n0 if approx else n
            common = 0.0 if approx else -beta * s * i / (den * den)
            df_i = beta * s / den + common
            df_e = common
            df_s = beta * i / den + common
            df_r = common
            a_v = g_controls[k] + ts * (l3 - l2)
            grad_f[k] = a_v * caps[k]
            cf = ts * (l1 - l2)
            cs = ts * l2
            m0 = l0 * decay_i + l3 * ts * gam + cf * df_i + cs * lam
            m1 = l0 * ts * eps + l1 * decay_e + cf * df_e + cs * lam
            m2 = l2 + cf * df_s + cs * (lam - mu)
            m3 = l3 * (1.0 - ts * mu) + cf * df_r + cs * lam
            branch = branches[k]
            if branch != 0:
                af = a_v * fractions[k]
                if branch == 1:
                    # cap = s/ts + (lam n - mu s) - flux
                    m0 += af * (lam - df_i)
                    m1 += af * (lam - df_e)
                    m2 += af * (1.0 / ts + lam - mu - df_s)
                    m3 += af * (lam - df_r)
                else:
                    m2 += af
            gk = g_states[k]
            l0, l1, l2, l3 = m0 + gk[0], m1 + gk[1], m2 + gk[2], m3 + gk[3]
        return grad_f


class _ShieldRollout:
    def __init__(self, model: ModelSpec):
        self.model = model
        self.p = model.params
        self.chi_max = model.control_upper

    def forward(self, fractions: np.ndarray):
        p = self.p
        ts = p.ts
        lam, mu = p.birth_rate, p.death_rate
        beta, eps = p.transmission_rate, p.progression_rate
        gam, alf = p.recovery_rate, p.fatality_rate
        t = len(fractions)
        init = self.model.init
        i, e, s, r = init.i, init.e, init.s, init.r
        states = np.empty((t + 1, 4))
        states[0] = (i, e, s, r)
        controls = fractions * self.chi_max
        for k in range(t):
            chi = controls[k]
            n = i + e + s + r
            den = n + chi * r
            if den <= 0:
                raise SimulationError(k, f"transmission denominator must be positive, got {den}")
            flux = beta * s * i / den
            i, e, s, r = (
                i + ts * eps * e - ts * (gam + mu + alf) * i,
                e + ts * flux - ts * (mu + eps) * e,
                s + ts * lam * n - ts * mu * s - ts * flux,
                r + ts * gam * i - ts * mu * r,
            )
            _abort_check(k, i, e, s, r)
            states[k + 1] = (i, e, s, r)
        caps = np.full(t, self.chi_max)
        return states, caps, None, controls

    def backward(self, fractions, states, caps, branches, g_states, g_controls):
        p = self.p
        ts = p.ts
        lam, mu = p.birth_rate, p.death_rate
        beta, eps = p.transmission_rate, p.progression_rate
        gam, alf = p.recovery_rate, p.fatality_rate
        chi_max = self.chi_max
        t = len(fractions)
        l0, l1, l2, l3 = g_states[t]
        grad_f = np.empty(t)
        decay_i = 1.0 - ts * (gam + mu + alf)
        decay_e = 1.0 - ts * (mu + eps)
        for k in range(t - 1, -1, -1):
            i, e, s, r = states[k]
            chi = fractions[k] * chi_max
            n = i + e + s + r
            den = n + chi * r
            common = -beta * s * i / (den * den)
            df_i = beta * s / den + common
            df_e = common
            df_s = beta * i / den + common
            df_r = common * (1.0 + chi)
            df_chi = common * r
            cf = ts * (l1 - l2)
            cs = ts * l2
            grad_f[k] = (g_controls[k] + cf * df_chi) * chi_max
            m0 = l0 * decay_i + l3 * ts * gam + cf * df_i + cs * lam
            m1 = l0 * ts * eps + l1 * decay_e + cf * df_e + cs * lam
            m2 = l2 + cf * df_s + cs * (lam - mu)
            m3 = l3 * (1.0 - ts * mu) + cf * df_r + cs * lam
            gk = g_states[k]
            l0, l1, l2, l3 = m0 + gk[0], m1 + gk[1], m2 + gk[2], m3 + gk[3]
        return grad_f


class _QuarantineRollout:
    def __init__(self, model: ModelSpec):
        self.model = model
        self.p = model.params
        self.q_max = model.control_upper

    def forward(self, fractions: np.ndarray):
        p = self.p
        ts = p.ts
        b0 = p.infection_rate
        conf = p.total_confirmation_rate
        approx = self.model.use_n0_approx
        t = len(fractions)
        init = self.model.init
        s, u, q, c = init.s, init.u, init.q, init.c
        states = np.empty((t + 1, 4))
        states[0] = (s, u, q, c)
        controls = fractions * self.q_max
        for k in range(t):
            rate = controls[k]
            den = p.n0 if approx else (s + u + q + c)
            flux = b0 * u * s / den
            quarantined = rate * u
            confirmed = conf * q
            s, u, q, c = (
                s - ts * flux,
                u + ts * flux - ts * quarantined,
                q + ts * quarantined - ts * confirmed,
                c + ts * confirmed,
            )
            _abort_check(k, s, u, q, c)
            states[k + 1] = (s, u, q, c)
        caps = np.full(t, self.q_max)
        return states, caps, None, controls

    def backward(self, fractions, states, caps, branches, g_states, g_controls):
        p = self.p
        ts = p.ts
        b0 = p.infection_rate
        conf = p.total_confirmation_rate
        q_max = self.q_max
        approx = self.model.use_n0_approx
        t = len(fractions)
        l0, l1, l2, l3 = g_states[t]  # adjoints of (s, u, q, c)
        grad_f = np.empty(t)
        for k in range(t - 1, -1, -1):
            s, u, q, c = states[k]
            rate = fractions[k] * q_max
            den = p.n0 if approx else (s + u + q + c)
            common = 0.0 if approx else -b0 * u * s / (den * den)
            df_s = b0 * u / den + common
            df_u = b0 * s / den + common
            df_q = common
            df_c = common
            grad_f[k] = (g_controls[k] + ts * u * (l2 - l1)) * q_max
            cf = ts * (l1 - l0)
            m0 = l0 + cf * df_s
            m1 = l1 * (1.0 - ts * rate) + l2 * ts * rate + cf * df_u
            m2 = l2 * (1.0 - ts * conf) + l3 * ts * conf + cf * df_q
            m3 = l3 + cf * df_c
            gk = g_states[k]
            l0, l1, l2, l3 = m0 + gk[0], m1 + gk[1], m2 + gk[2], m3 + gk[3]
        return grad_f


_ROLLOUTS = {
    SEIR_VACCINATION: _VaccinationRollout,
    SEIR_SHIELD: _ShieldRollout,
    SUQC_QUARANTINE: _QuarantineRollout,
}


def _states_to_channels(model: ModelSpec, states: np.ndarray) -> dict[str, np.ndarray]:
    if model.kind in (SEIR_VACCINATION, SEIR_SHIELD):
        i, e, s, r = states.T
        n = i + e + s + r
        d = model.params.n0 - n
        return {"I": i, "E": e, "S": s, "R": r, "D": d, "dD": models._increments(d), "N": n}
    s, u, q, c = states.T
    return {"S": s, "U": u, "Q": q, "C": c, "dC": models._increments(c), "N": s + u + q + c}


def _channel_grads_to_state_grads(
    model: ModelSpec, g_channels: dict[str, np.ndarray], length: int
) -> np.ndarray:
    """Fold gradients on derived channels back onto the state components."""
    zeros = np.zeros(length)

    def get(name):
        return g_channels.get(name, zeros)

    g = np.zeros((length, 4))
    g_n = get("N")
    if model.kind in (SEIR_VACCINATION, SEIR_SHIELD):
        # D = n0 - (i+e+s+r);  dD[j] = D[j] - D[j-1]
        h_d = get("D").copy()
        g_dd = get("dD")
        h_d[1:] += g_dd[1:]
        h_d[:-1] -= g_dd[1:]
        for col, name in enumerate(("I", "E", "S", "R")):
            g[:, col] = get(name) - h_d + g_n
    else:
        h_c = np.zeros(length)
        g_dc = get("dC")
        h_c[1:] += g_dc[1:]
        h_c[:-1] -= g_dc[1:]
        for col, name in enumerate(("S", "U", "Q")):
            g[:, col] = get(name) + g_n
        g[:, 3] = get("C") + h_c + g_n
    return g


@dataclass
class _Objective:
    """Penalty objective ``effort + mu * max(0, margin - rho_smooth)^2``.

    ``ascent_only`` drops the effort term and maximizes the smooth
    robustness instead; it is used as a last-resort feasibility pass.
    """

    problem: SynthesisProblem
    beta: float
    mu: float
    ascent_only: bool = False

    def __post_init__(self):
        self.rollout = _ROLLOUTS[self.problem.model.kind](self.problem.model)
        self.margin = self.problem.method.margin

    def value(self, fractions: np.ndarray) -> float:
        states, caps, branches, controls = self.rollout.forward(fractions)
        channels = _states_to_channels(self.problem.model, states)
        rho, _ = mtl._smooth_eval(self.problem.spec, channels, 0, self.beta, False, {})
        if self.ascent_only:
            return -rho
        shortfall = max(0.0, self.margin - rho)
        return effort(controls, self.problem.effort_norm) + self.mu * shortfall * shortfall

    def value_and_grad(self, fractions: np.ndarray) -> tuple[float, np.ndarray]:
        model = self.problem.model
        states, caps, branches, controls = self.rollout.forward(fractions)
        channels = _states_to_channels(model, states)
        rho, g_rho = mtl.smooth_robustness_grad(self.problem.spec, channels, 0, self.beta)
        length = states.shape[0]
        if self.ascent_only:
            value = -rho
            g_channels = {name: -arr for name, arr in g_rho.items()}
            g_controls = np.zeros(len(fractions))
        else:
            shortfall = max(0.0, self.margin - rho)
            value = effort(controls, self.problem.effort_norm) + self.mu * shortfall * shortfall
            scale = -2.0 * self.mu * shortfall
            g_channels = {name: scale * arr for name, arr in g_rho.items()}
            g_controls = effort_gradient(controls, self.problem.effort_norm)
        g_states = _channel_grads_to_state_grads(model, g_channels, length)
        grad = self.rollout.backward(fractions, states, caps, branches, g_states, g_controls)
        return value, grad

    def exact_check(self, fractions: np.ndarray):
        states, caps, branches, controls = self.rollout.forward(fractions)
        channels = _states_to_channels(self.problem.model, states)
        satisfied = mtl._eval_bool(self.problem.spec, channels, 0)
        rho = mtl._eval_rho(self.problem.spec, channels, 0)
        return satisfied, rho, controls


def _projected_gradient(
    objective: _Objective,
    x0: np.ndarray,
    max_iterations: int,
    tolerance: float,
) -> tuple[np.ndarray, int]:
    """Projected gradient descent on the unit box with Armijo backtracking."""
    x = np.clip(x0, 0.0, 1.0)
    value, grad = objective.value_and_grad(x)
    step = 1.0
    iterations = 0
    stall = 0
    for _ in range(max_iterations):
        iterations += 1
        if np.linalg.norm(x - np.clip(x - grad, 0.0, 1.0)) < tolerance:
            break
        alpha = step
        accepted = False
        for _ in range(50):
            candidate = np.clip(x - alpha * grad, 0.0, 1.0)
            move = x - candidate
            decrease = float(grad @ move)
            if decrease <= 0.0:
                break
            cand_value = objective.value(candidate)
            if cand_value <= value - 1e-4 * decrease:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        new_value, new_grad = objective.value_and_grad(candidate)
        if value - new_value < 1e-9 * max(1.0, abs(value)):
            stall += 1
        else:
            stall = 0
        x, value, grad = candidate, new_value, new_grad
        step = min(alpha * 2.0, 1e6)
        if stall >= 10:
            break
    return x, iterations


def _threshold_scale(spec: MtlFormula) -> float:
    magnitudes = [abs(a.threshold) for a in mtl.atoms(spec) if a.threshold != 0.0]
    return min(magnitudes) if magnitudes else 1.0


def _initial_fractions(problem: SynthesisProblem, rng: np.random.Generator):
    """Deterministic multi-start points in fraction space."""
    t = problem.horizon_t
    starts: list[tuple[str, np.ndarray]] = [
        ("zero", np.zeros(t)),
        ("half", np.full(t, 0.5)),
    ]
    front = np.zeros(t)
    front[: max(1, t // 4)] = 1.0
    starts.append(("front_loaded", front))

    # Constant-control scan: cheap rollouts locating a feasible constant
    # level (the feasible set need not be monotone in the level, e.g. too
    # much shielding starves the immune population).
    objective = _Objective(problem, beta=1.0, mu=0.0)
    best_feasible = None
    best_rho = None
    for c in np.linspace(0.0, 1.0, problem.method.constant_scan_points):
        fractions = np.full(t, c)
        try:
            satisfied, rho, controls = objective.exact_check(fractions)
        except SimulationError:
            continue
        eff = effort(controls, problem.effort_norm)
        if satisfied and (best_feasible is None or eff < best_feasible[0]):
            best_feasible = (eff, fractions)
        if best_rho is None or rho > best_rho[0]:
            best_rho = (rho, fractions)
    if best_feasible is not None:
        starts.append(("constant_feasible", best_feasible[1]))
    elif best_rho is not None:
        starts.append(("constant_max_rho", best_rho[1]))

    for j in range(problem.method.random_starts):
        starts.append((f"random_{j}", rng.uniform(0.0, 1.0, size=t)))

    unique = []
    seen = set()
    for name, fractions in starts:
        key = fractions.tobytes()
        if key not in seen:
            seen.add(key)
            unique.append((name, fractions))
    return unique


class _CandidatePool:
    """Best feasible iterate by (effort, robustness); best robustness otherwise."""

    def __init__(self, problem: SynthesisProblem):
        self.problem = problem
        self.checker = _Objective(problem, beta=1.0, mu=0.0)
        self.best_feasible: tuple[float, float, np.ndarray] | None = None
        self.best_rho: tuple[float, np.ndarray] | None = None

    def offer(self, fractions: np.ndarray) -> bool:
        satisfied, rho, controls = self.checker.exact_check(fractions)
        if satisfied:
            eff = effort(controls, self.problem.effort_norm)
            key = (eff, rho)
            if self.best_feasible is None or key < self.best_feasible[:2]:
                self.best_feasible = (eff, rho, fractions.copy())
        if self.best_rho is None or rho > self.best_rho[0]:
            self.best_rho = (rho, fractions.copy())
        return satisfied

    def chosen(self) -> np.ndarray:
        if self.best_feasible is not None:
            return self.best_feasible[2]
        return self.best_rho[1]


def synthesize(problem: SynthesisProblem) -> SynthesisResult:
    """Search for a minimum-effort control satisfying the specification.

    Returns the best feasible iterate found across all starts and rounds
    (satisfaction confirmed by the exact Boolean semantics); if no start
    reaches feasibility within the budget, the result carries
    ``satisfied=False`` and the maximum-robustness point reached.
    """
    opts = problem.method
    t_start = time.perf_counter()
    rng = np.random.default_rng(opts.seed)
    scale = opts.beta_scale if opts.beta_scale is not None else _threshold_scale(problem.spec)
    betas = [m / scale for m in opts.beta_multipliers]
    mus = [opts.mu_initial * opts.mu_growth**j for j in range(len(betas))]

    pool = _CandidatePool(problem)
    total_iterations = 0

    for _, fractions in _initial_fractions(problem, rng):
        x = fractions
        pool.offer(x)
        satisfied = False
        feasible_seen = False
        for beta, mu in zip(betas, mus):
            x, used = _projected_gradient(
                _Objective(problem, beta=beta, mu=mu),
                x,
                opts.max_inner_iterations,
                opts.gradient_tolerance,
            )
            total_iterations += used
            satisfied = pool.offer(x)
            feasible_seen = feasible_seen or satisfied
        # Exterior-penalty continuation: keep raising the penalty weight
        # at the final temperature until the equilibrium is feasible.
        mu = mus[-1]
        for _ in range(opts.max_extra_rounds):
            if satisfied:
                break
            mu *= opts.mu_growth
            x, used = _projected_gradient(
                _Objective(problem, beta=betas[-1], mu=mu),
                x,
                opts.max_inner_iterations,
                opts.gradient_tolerance,
            )
            total_iterations += used
            satisfied = pool.offer(x)
            feasible_seen = feasible_seen or satisfied
        if not feasible_seen:
            # Last resort: climb the smooth robustness, then pull the
            # effort back down at the final penalty weight.
            x, used = _projected_gradient(
                _Objective(problem, beta=betas[-1], mu=mu, ascent_only=True),
                x,
                opts.max_inner_iterations // 2,
                opts.gradient_tolerance,
            )
            total_iterations += used
            if pool.offer(x):
                x, used = _projected_gradient(
                    _Objective(problem, beta=betas[-1], mu=mu),
                    x,
                    opts.max_inner_iterations,
                    opts.gradient_tolerance,
                )
                total_iterations += used
                pool.offer(x)

    chosen = pool.chosen()
    _, _, _, controls = _ROLLOUTS[problem.model.kind](problem.model).forward(chosen)
    control = ControlSequence(
        values=controls,
        kind=problem.model.control_kind,
        upper=problem.model.control_upper,
    )
    # Independent re-verification through the public simulate/eval path.
    report = verify(control, problem)
    return SynthesisResult(
        control=control,
        trajectory=report.trajectory,
        effort=report.effort,
        robustness=report.robustness,
        satisfied=report.satisfied,
        iterations=total_iterations,
        wall_time=time.perf_counter() - t_start,
        method="penalty",
        seed=opts.seed,
    )


def verify(control, problem: SynthesisProblem) -> VerificationReport:
    """Simulate a control and evaluate the specification exactly."""
    values = np.asarray(getattr(control, "values", control), dtype=float)
    if values.shape[0] != problem.horizon_t:
        raise SynthesisError(
            f"control has length {values.shape[0]}, expected horizon_t = {problem.horizon_t}"
        )
    trajectory = models.simulate(problem.model, values, problem.horizon_t)
    satisfied = mtl.eval_bool(problem.spec, trajectory, 0)
    robustness = mtl.eval_robustness(problem.spec, trajectory, 0)
    return VerificationReport(
        satisfied=satisfied,
        robustness=robustness,
        effort=effort(values, problem.effort_norm),
        trajectory=trajectory,
    )
