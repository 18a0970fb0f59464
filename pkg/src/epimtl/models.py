"""Discrete-time epidemic models with daily control inputs.

Three model families are implemented, all stepped with a fixed sampling
period ``ts`` (days) and measured in millions of individuals:

* SEIR with vaccination: control ``v`` moves susceptibles directly into
  the recovered (immune) compartment, bounded by the current
  susceptible population.
* SEIR with shield immunity: control ``chi`` dilutes the transmission
  denominator by ``chi * R``, deploying recovered individuals to absorb
  contacts.
* SUQC with quarantine: control ``q`` is the daily rate at which
  un-quarantined infected become quarantined.

Deaths are carried as the complement ``d = n0 - (i + e + s + r)``, so
the SEIR compartments sum to ``n0`` exactly at every step (the single
subtraction of the left-to-right sum is exact in that order).  SUQC conserves
``s + u + q + c`` because the quarantine flux enters the U and Q updates
with the same ``ts`` factor.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .mtl import Trajectory

__all__ = [
    "SeirParams",
    "SeirState",
    "SuqcParams",
    "SuqcState",
    "ModelSpec",
    "ModelError",
    "SimulationError",
    "SEIR_VACCINATION",
    "SEIR_SHIELD",
    "SUQC_QUARANTINE",
    "MODEL_KINDS",
    "PRESETS",
    "DEFAULT_CHI_MAX",
    "DEFAULT_Q_MAX",
    "seir_vaccination_model",
    "seir_shield_model",
    "suqc_quarantine_model",
    "step_seir_vaccination",
    "step_seir_shield",
    "step_suqc",
    "simulate",
    "trajectory_to_csv",
    "control_to_csv",
]

SEIR_VACCINATION = "seir_vaccination"
SEIR_SHIELD = "seir_shield"
SUQC_QUARANTINE = "suqc_quarantine"
MODEL_KINDS = (SEIR_VACCINATION, SEIR_SHIELD, SUQC_QUARANTINE)

DEFAULT_CHI_MAX = 100.0
DEFAULT_Q_MAX = 1.0

# Any compartment dipping below this aborts the run as a modeling error
# instead of being clamped silently.
_NEGATIVITY_ABORT = -1e-6


class ModelError(ValueError):
    """Invalid parameters, states or control values."""


class SimulationError(RuntimeError):
    """Simulation aborted; carries the offending step index."""

    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SeirParams:
    """SEIR rate parameters; all rates are per day.

    The ``lombardy`` preset carries the estimates for the early,
    unmitigated outbreak phase in Lombardy, Italy: birth and natural
    death rates 1/30295, fatality rate 0.006, transmission rate 0.75,
    progression (exposed to infectious) rate 0.2, recovery rate 0.2,
    initial population 10 million, sampling period 1 day.
    """

    birth_rate: float
    death_rate: float
    fatality_rate: float
    transmission_rate: float
    progression_rate: float
    recovery_rate: float
    n0: float
    ts: float = 1.0

    def __post_init__(self):
        for name in (
            "birth_rate",
            "death_rate",
            "fatality_rate",
            "transmission_rate",
            "progression_rate",
            "recovery_rate",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ModelError(f"{name} must be finite and nonnegative, got {value}")
        if not (math.isfinite(self.n0) and self.n0 > 0):
            raise ModelError(f"n0 must be positive, got {self.n0}")
        if not (math.isfinite(self.ts) and self.ts > 0):
            raise ModelError(f"ts must be positive, got {self.ts}")


@dataclass(frozen=True)
class SeirState:
    """Compartment sizes in millions: infectious, exposed, susceptible,
    recovered (immune) and dead."""

    i: float
    e: float
    s: float
    r: float
    d: float

    def __post_init__(self):
        for name in ("i", "e", "s", "r", "d"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"state component {name} must be finite")

    @property
    def n(self) -> float:
        """Living population ``i + e + s + r``."""
        return self.i + self.e + self.s + self.r

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.i, self.e, self.s, self.r, self.d)


@dataclass(frozen=True)
class SuqcParams:
    """SUQC rate parameters.

    The ``wuhan`` preset carries the stage-one estimates for Wuhan,
    China: infection rate 0.2967, confirmation rate 0.05, subsequent
    confirmation rate 0.001, initial population 8.9 million, sampling
    period 1 day.
    """

    infection_rate: float
    confirmation_rate: float
    subsequent_confirmation_rate: float
    n0: float
    ts: float = 1.0

    def __post_init__(self):
        for name in ("infection_rate", "confirmation_rate", "subsequent_confirmation_rate"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ModelError(f"{name} must be finite and nonnegative, got {value}")
        if not (math.isfinite(self.n0) and self.n0 > 0):
            raise ModelError(f"n0 must be positive, got {self.n0}")
        if not (math.isfinite(self.ts) and self.ts > 0):
            raise ModelError(f"ts must be positive, got {self.ts}")

    @property
    def total_confirmation_rate(self) -> float:
        """Combined confirmation outflow rate of the quarantined compartment."""
        g = self.confirmation_rate
        return g + (1.0 - g) * self.subsequent_confirmation_rate


@dataclass(frozen=True)
class SuqcState:
    """Compartment sizes in millions: susceptible, un-quarantined
    infected, quarantined infected and confirmed infected."""

    s: float
    u: float
    q: float
    c: float

    def __post_init__(self):
        for name in ("s", "u", "q", "c"):
            if not math.isfinite(getattr(self, name)):
                raise ModelError(f"state component {name} must be finite")

    @property
    def total(self) -> float:
        return self.s + self.u + self.q + self.c

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.s, self.u, self.q, self.c)


LOMBARDY = SeirParams(
    birth_rate=1.0 / 30295.0,
    death_rate=1.0 / 30295.0,
    fatality_rate=0.006,
    transmission_rate=0.75,
    progression_rate=0.2,
    recovery_rate=0.2,
    n0=10.0,
    ts=1.0,
)

WUHAN = SuqcParams(
    infection_rate=0.2967,
    confirmation_rate=0.05,
    subsequent_confirmation_rate=0.001,
    n0=8.9,
    ts=1.0,
)

PRESETS = {"lombardy": LOMBARDY, "wuhan": WUHAN}

# Initial states: 0.001 million infectious seeded into an otherwise
# susceptible population.  The SUQC susceptible count is n0 - u0 so the
# compartments sum to n0 exactly.
LOMBARDY_INIT = SeirState(i=0.001, e=0.02, s=9.979, r=0.0, d=0.0)
WUHAN_INIT = SuqcState(s=8.899, u=0.001, q=0.0, c=0.0)


@dataclass(frozen=True)
class ModelSpec:
    """A model family with its parameters, initial state and control bound.

    ``control_upper`` is the static control bound (shield strength cap or
    maximal quarantine rate); it is ``None`` for vaccination, whose bound
    is the current susceptible population.  ``use_n0_approx`` fixes the
    transmission denominator at the initial population instead of the
    live one (shield immunity always uses the live denominator).
    """

    kind: str
    params: SeirParams | SuqcParams
    init: SeirState | SuqcState
    use_n0_approx: bool = False
    control_upper: float | None = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        if self.kind in (SEIR_VACCINATION, SEIR_SHIELD):
            if not isinstance(self.params, SeirParams) or not isinstance(self.init, SeirState):
                raise ModelError(f"{self.kind} needs SeirParams and SeirState")
        else:
            if not isinstance(self.params, SuqcParams) or not isinstance(self.init, SuqcState):
                raise ModelError(f"{self.kind} needs SuqcParams and SuqcState")
        if self.kind != SEIR_VACCINATION:
            if self.control_upper is None or not (
                math.isfinite(self.control_upper) and self.control_upper >= 0
            ):
                raise ModelError(f"{self.kind} needs a finite nonnegative control_upper")
        total = self.init.n + self.init.d if isinstance(self.init, SeirState) else self.init.total
        if abs(total - self.params.n0) > 1e-9:
            raise ModelError(
                f"initial compartments sum to {total!r}, expected n0 = {self.params.n0!r}"
            )

    @property
    def channels(self) -> tuple[str, ...]:
        if self.kind in (SEIR_VACCINATION, SEIR_SHIELD):
            return ("I", "E", "S", "R", "D", "dD", "N")
        return ("S", "U", "Q", "C", "dC", "N")

    @property
    def control_kind(self) -> str:
        return {
            SEIR_VACCINATION: "vaccination",
            SEIR_SHIELD: "shield",
            SUQC_QUARANTINE: "quarantine",
        }[self.kind]


def seir_vaccination_model(
    params: SeirParams = LOMBARDY,
    init: SeirState = LOMBARDY_INIT,
    use_n0_approx: bool = False,
) -> ModelSpec:
    return ModelSpec(SEIR_VACCINATION, params, init, use_n0_approx, None)


def seir_shield_model(
    params: SeirParams = LOMBARDY,
    init: SeirState = LOMBARDY_INIT,
    chi_max: float = DEFAULT_CHI_MAX,
) -> ModelSpec:
    return ModelSpec(SEIR_SHIELD, params, init, False, chi_max)


def suqc_quarantine_model(
    params: SuqcParams = WUHAN,
    init: SuqcState = WUHAN_INIT,
    q_max: float = DEFAULT_Q_MAX,
    use_n0_approx: bool = False,
) -> ModelSpec:
    return ModelSpec(SUQC_QUARANTINE, params, init, use_n0_approx, q_max)


# ---------------------------------------------------------------------------
# Step functions


def step_seir_vaccination(
    x: SeirState, v: float, p: SeirParams, use_n0_approx: bool = False
) -> SeirState:
    """One sampling period of the SEIR model with ``v`` million
    vaccinations per day; requires ``0 <= v <= x.s``."""
    if not math.isfinite(v):
        raise ModelError(f"control must be finite, got {v!r}")
    if v < 0 or v > x.s:
        raise ModelError(f"vaccination control {v} outside [0, s] with s = {x.s}")
    ts = p.ts
    n = x.n
    den = p.n0 if use_n0_approx else n
    if den <= 0:
        raise ModelError(f"transmission denominator must be positive, got {den}")
    flux = p.transmission_rate * x.s * x.i / den
    i = x.i + ts * p.progression_rate * x.e - ts * (
        p.recovery_rate + p.death_rate + p.fatality_rate
    ) * x.i
    e = x.e + ts * flux - ts * (p.death_rate + p.progression_rate) * x.e
    s = x.s + ts * p.birth_rate * n - ts * p.death_rate * x.s - ts * flux - ts * v
    r = x.r + ts * p.recovery_rate * x.i - ts * p.death_rate * x.r + ts * v
    return SeirState(i=i, e=e, s=s, r=r, d=p.n0 - (i + e + s + r))


def step_seir_shield(
    x: SeirState, chi: float, p: SeirParams, chi_max: float = DEFAULT_CHI_MAX
) -> SeirState:
    """One sampling period of the SEIR model with shield strength ``chi``.

    The transmission denominator is the live population plus
    ``chi * r``; there is no initial-population approximation here, the
    dilution of that fraction is the mechanism of the model.
    """
    if not math.isfinite(chi):
        raise ModelError(f"control must be finite, got {chi!r}")
    if chi < 0 or chi > chi_max:
        raise ModelError(f"shield strength {chi} outside [0, {chi_max}]")
    ts = p.ts
    n = x.n
    den = n + chi * x.r
    if den <= 0:
        raise ModelError(f"transmission denominator must be positive, got {den}")
    flux = p.transmission_rate * x.s * x.i / den
    i = x.i + ts * p.progression_rate * x.e - ts * (
        p.recovery_rate + p.death_rate + p.fatality_rate
    ) * x.i
    e = x.e + ts * flux - ts * (p.death_rate + p.progression_rate) * x.e
    s = x.s + ts * p.birth_rate * n - ts * p.death_rate * x.s - ts * flux
    r = x.r + ts * p.recovery_rate * x.i - ts * p.death_rate * x.r
    return SeirState(i=i, e=e, s=s, r=r, d=p.n0 - (i + e + s + r))


def step_suqc(
    x: SuqcState,
    q: float,
    p: SuqcParams,
    q_max: float = DEFAULT_Q_MAX,
    use_n0_approx: bool = False,
) -> SuqcState:
    """One sampling period of the SUQC model with quarantine rate ``q``.

    The quarantine flux ``ts * q * u`` leaves U and enters Q with the
    same factor, which keeps the compartment total conserved.
    """
    if not math.isfinite(q):
        raise ModelError(f"control must be finite, got {q!r}")
    if q < 0 or q > q_max:
        raise ModelError(f"quarantine rate {q} outside [0, {q_max}]")
    ts = p.ts
    den = p.n0 if use_n0_approx else x.total
    if den <= 0:
        raise ModelError(f"transmission denominator must be positive, got {den}")
    flux = p.infection_rate * x.u * x.s / den
    quarantined = q * x.u
    confirmed = p.total_confirmation_rate * x.q
    s = x.s - ts * flux
    u = x.u + ts * flux - ts * quarantined
    qq = x.q + ts * quarantined - ts * confirmed
    c = x.c + ts * confirmed
    return SuqcState(s=s, u=u, q=qq, c=c)


# ---------------------------------------------------------------------------
# Simulation


def _control_values(controls) -> np.ndarray:
    values = getattr(controls, "values", controls)
    return np.asarray(values, dtype=float)


def simulate(model: ModelSpec, controls, t_max: int | None = None) -> Trajectory:
    """Roll the model forward and return the sampled trajectory.

    ``controls`` is one control value per step (day); the trajectory has
    ``t_max + 1`` samples per channel.  Derived channels: ``dD``/``dC``
    are the per-step increments (zero at index 0) and ``N`` is the live
    population total.  Control bound violations and states that leave
    the model domain abort with the offending step index.
    """
    values = _control_values(controls)
    if values.ndim != 1:
        raise ModelError("controls must be a one-dimensional sequence")
    if t_max is None:
        t_max = values.shape[0]
    if t_max < 0:
        raise ModelError(f"t_max must be nonnegative, got {t_max}")
    if values.shape[0] != t_max:
        raise ModelError(f"controls have length {values.shape[0]}, expected t_max = {t_max}")

    if model.kind in (SEIR_VACCINATION, SEIR_SHIELD):
        states = [model.init.as_tuple()]
        x = model.init
        for k in range(t_max):
            try:
                if model.kind == SEIR_VACCINATION:
                    x = step_seir_vaccination(x, float(values[k]), model.params, model.use_n0_approx)
                else:
                    x = step_seir_shield(x, float(values[k]), model.params, model.control_upper)
            except ModelError as exc:
                raise SimulationError(k, str(exc)) from exc
            _check_state(x.as_tuple(), k + 1)
            states.append(x.as_tuple())
        arr = np.array(states)
        i, e, s, r, d = arr.T
        channels = {
            "I": i,
            "E": e,
            "S": s,
            "R": r,
            "D": d,
            "dD": _increments(d),
            "N": i + e + s + r,
        }
    else:
        states = [model.init.as_tuple()]
        x = model.init
        for k in range(t_max):
            try:
                x = step_suqc(
                    x, float(values[k]), model.params, model.control_upper, model.use_n0_approx
                )
            except ModelError as exc:
                raise SimulationError(k, str(exc)) from exc
            _check_state(x.as_tuple(), k + 1)
            states.append(x.as_tuple())
        arr = np.array(states)
        s, u, q, c = arr.T
        channels = {
            "S": s,
            "U": u,
            "Q": q,
            "C": c,
            "dC": _increments(c),
            "N": s + u + q + c,
        }
    return Trajectory(ts=model.params.ts, channels=channels)


def _increments(series: np.ndarray) -> np.ndarray:
    out = np.zeros_like(series)
    out[1:] = series[1:] - series[:-1]
    return out


def _check_state(components: tuple[float, ...], step: int) -> None:
    for value in components:
        if not math.isfinite(value):
            raise SimulationError(step, f"non-finite state {components}")
        if value < _NEGATIVITY_ABORT:
            raise SimulationError(step, f"compartment went negative: {components}")


# ---------------------------------------------------------------------------
# CSV export


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV text with header ``k,t_days,<channels...>`` at full precision."""
    names = list(traj.channels)
    buf = io.StringIO()
    buf.write("k,t_days," + ",".join(names) + "\n")
    times = traj.times
    for k in range(traj.length):
        row = [str(k), _fmt(times[k])]
        row.extend(_fmt(traj.channels[name][k]) for name in names)
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def control_to_csv(values, ts: float = 1.0, name: str = "control") -> str:
    """CSV text for a per-day control sequence."""
    arr = _control_values(values)
    buf = io.StringIO()
    buf.write(f"k,t_days,{name}\n")
    for k, v in enumerate(arr):
        buf.write(f"{k},{_fmt(k * ts)},{_fmt(v)}\n")
    return buf.getvalue()
