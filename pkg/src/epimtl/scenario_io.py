"""Scenario configuration files, result persistence and plot emission.

Scenarios are strict JSON: unknown keys are hard errors, because config
files encode experiments and a silently ignored typo corrupts results.
The schema (version 1) is::

    {
      "version": 1,
      "model": "seir_vaccination" | "seir_shield" | "suqc_quarantine",
      "preset": "lombardy" | "wuhan",      # and/or "params": {...overrides}
      "init": {"I": ..., "E": ..., ...},   # optional, defaults per family
      "t_max": 100,                        # optional, defaults to the spec horizon
      "ts": 1.0,                           # optional sampling period override
      "spec": "G[0,100](dD <= 0.001) & ...",
      "effort_norm": "sum_squares" | "sum" | "sup",
      "method": {"margin": ..., ...},      # optional MethodOptions overrides
      "seed": 0,
      "out_dir": "out"
    }

Plots are written as SVG rendered by a small built-in writer, so that
identical inputs produce byte-identical files; every plotted series is
read back from the CSV files persisted next to the plots.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import models, mtl, synth
from .models import (
    SEIR_SHIELD,
    SEIR_VACCINATION,
    SUQC_QUARANTINE,
    ModelSpec,
    SeirParams,
    SeirState,
    SuqcParams,
    SuqcState,
)
from .synth import ControlSequence, MethodOptions, SynthesisProblem, SynthesisResult

__all__ = [
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "bundled_scenarios",
    "emit_plots",
]

SCENARIO_VERSION = 1

_TOP_KEYS = {
    "version",
    "model",
    "preset",
    "params",
    "init",
    "t_max",
    "ts",
    "spec",
    "effort_norm",
    "method",
    "seed",
    "out_dir",
}

_SEIR_PARAM_KEYS = {
    "birth_rate",
    "death_rate",
    "fatality_rate",
    "transmission_rate",
    "progression_rate",
    "recovery_rate",
    "n0",
    "ts",
    "chi_max",
    "use_n0_approx",
}

_SUQC_PARAM_KEYS = {
    "infection_rate",
    "confirmation_rate",
    "subsequent_confirmation_rate",
    "n0",
    "ts",
    "q_max",
    "use_n0_approx",
}

_METHOD_KEYS = {f.name for f in dataclasses.fields(MethodOptions)} - {"seed"}


class ScenarioError(ValueError):
    """Schema violation; the message carries the offending field path."""


def _fail(path: str, message: str) -> None:
    raise ScenarioError(f"{path}: {message}")


def _expect(value, types, path, what):
    if not isinstance(value, types) or isinstance(value, bool) and bool not in (
        types if isinstance(types, tuple) else (types,)
    ):
        _fail(path, f"expected {what}, got {value!r}")
    return value


def _number(value, path) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class Scenario:
    """A fully validated synthesis/simulation setup."""

    name: str
    model_kind: str
    params: SeirParams | SuqcParams
    init: SeirState | SuqcState
    control_upper: float | None
    use_n0_approx: bool
    t_max: int
    spec_text: str
    spec: mtl.MtlFormula
    effort_norm: str
    method: MethodOptions
    seed: int
    out_dir: str

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            kind=self.model_kind,
            params=self.params,
            init=self.init,
            use_n0_approx=self.use_n0_approx,
            control_upper=self.control_upper,
        )

    def problem(self) -> SynthesisProblem:
        return SynthesisProblem(
            model=self.model_spec(),
            spec=self.spec,
            horizon_t=self.t_max,
            effort_norm=self.effort_norm,
            method=dataclasses.replace(self.method, seed=self.seed),
        )


def bundled_scenarios() -> list[str]:
    """Names of the scenarios shipped with the package."""
    root = resources.files("epimtl") / "scenarios"
    return sorted(p.name[: -len(".json")] for p in root.iterdir() if p.name.endswith(".json"))


def load_scenario(path_or_name: str | os.PathLike) -> Scenario:
    """Load a scenario from a JSON file or from the bundled set by name."""
    path = Path(path_or_name)
    if path.exists():
        name = path.stem
        text = path.read_text()
    else:
        candidate = resources.files("epimtl") / "scenarios" / f"{path_or_name}.json"
        if str(path_or_name) in bundled_scenarios():
            name = str(path_or_name)
            text = candidate.read_text()
        else:
            raise ScenarioError(
                f"scenario: no file {path_or_name!r} and no bundled scenario of that "
                f"name (bundled: {', '.join(bundled_scenarios())})"
            )
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario: not valid JSON ({exc})") from None
    return scenario_from_dict(raw, name=name)


def scenario_from_dict(raw: dict, name: str = "scenario") -> Scenario:
    """Validate a raw scenario dictionary; unknown keys are hard errors."""
    if not isinstance(raw, dict):
        _fail("scenario", f"expected an object, got {type(raw).__name__}")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        _fail(sorted(unknown)[0], "unknown key")

    version = raw.get("version", SCENARIO_VERSION)
    if version != SCENARIO_VERSION:
        _fail("version", f"unsupported version {version!r}, expected {SCENARIO_VERSION}")

    kind = raw.get("model")
    if kind not in models.MODEL_KINDS:
        _fail("model", f"expected one of {models.MODEL_KINDS}, got {kind!r}")
    seir = kind in (SEIR_VACCINATION, SEIR_SHIELD)

    # Parameters: preset defaults overridden field by field.
    preset = raw.get("preset")
    params_over = raw.get("params", {})
    if preset is None and not params_over:
        _fail("preset", "either a preset or explicit params are required")
    if preset is not None:
        if preset not in models.PRESETS:
            _fail("preset", f"unknown preset {preset!r} (known: {sorted(models.PRESETS)})")
        base = models.PRESETS[preset]
        if seir != isinstance(base, SeirParams):
            _fail("preset", f"preset {preset!r} does not fit model {kind!r}")
        param_values = dataclasses.asdict(base)
    else:
        param_values = {}
    if not isinstance(params_over, dict):
        _fail("params", "expected an object")
    allowed = _SEIR_PARAM_KEYS if seir else _SUQC_PARAM_KEYS
    for key, value in params_over.items():
        if key not in allowed:
            _fail(f"params.{key}", "unknown key")
        if key == "use_n0_approx":
            if not isinstance(value, bool):
                _fail(f"params.{key}", f"expected a boolean, got {value!r}")
            param_values[key] = value
        else:
            param_values[key] = _number(value, f"params.{key}")

    use_n0_approx = bool(param_values.pop("use_n0_approx", False))
    if kind == SEIR_SHIELD:
        control_upper = float(param_values.pop("chi_max", models.DEFAULT_CHI_MAX))
        param_values.pop("q_max", None)
    elif kind == SUQC_QUARANTINE:
        control_upper = float(param_values.pop("q_max", models.DEFAULT_Q_MAX))
        param_values.pop("chi_max", None)
    else:
        control_upper = None
        if param_values.pop("chi_max", None) is not None:
            _fail("params.chi_max", "not a vaccination-model parameter")
        if param_values.pop("q_max", None) is not None:
            _fail("params.q_max", "not a vaccination-model parameter")
    if use_n0_approx and kind == SEIR_SHIELD:
        _fail("params.use_n0_approx", "the shield model always uses the live denominator")

    if "ts" in raw:
        param_values["ts"] = _number(raw["ts"], "ts")

    params_cls = SeirParams if seir else SuqcParams
    required = {f.name for f in dataclasses.fields(params_cls)} - {"ts"}
    missing = required - set(param_values)
    if missing:
        _fail(f"params.{sorted(missing)[0]}", "required when no preset is given")
    try:
        params = params_cls(**param_values)
    except models.ModelError as exc:
        raise ScenarioError(f"params: {exc}") from None

    # Initial state.
    init_over = raw.get("init", {})
    if not isinstance(init_over, dict):
        _fail("init", "expected an object")
    if seir:
        defaults = {"I": models.LOMBARDY_INIT.i, "E": models.LOMBARDY_INIT.e,
                    "S": models.LOMBARDY_INIT.s, "R": models.LOMBARDY_INIT.r,
                    "D": models.LOMBARDY_INIT.d}
    else:
        defaults = {"S": models.WUHAN_INIT.s, "U": models.WUHAN_INIT.u,
                    "Q": models.WUHAN_INIT.q, "C": models.WUHAN_INIT.c}
    for key, value in init_over.items():
        if key not in defaults:
            _fail(f"init.{key}", f"unknown key (expected {sorted(defaults)})")
        defaults[key] = _number(value, f"init.{key}")
    try:
        if seir:
            init = SeirState(i=defaults["I"], e=defaults["E"], s=defaults["S"],
                             r=defaults["R"], d=defaults["D"])
        else:
            init = SuqcState(s=defaults["S"], u=defaults["U"], q=defaults["Q"], c=defaults["C"])
    except models.ModelError as exc:
        raise ScenarioError(f"init: {exc}") from None

    # Specification.
    spec_text = raw.get("spec")
    if not isinstance(spec_text, str) or not spec_text.strip():
        _fail("spec", "a specification string is required")
    channel_set = (
        ("I", "E", "S", "R", "D", "dD", "N") if seir else ("S", "U", "Q", "C", "dC", "N")
    )
    try:
        spec = mtl.parse_formula(spec_text, set(channel_set))
    except mtl.MtlError as exc:
        raise ScenarioError(f"spec: {exc}") from None

    t_max = raw.get("t_max", mtl.horizon(spec))
    if isinstance(t_max, bool) or not isinstance(t_max, int) or t_max < 0:
        _fail("t_max", f"expected a nonnegative integer, got {t_max!r}")
    if mtl.horizon(spec) > t_max:
        _fail("t_max", f"must cover the spec horizon {mtl.horizon(spec)}")

    effort_norm = raw.get("effort_norm", "sum_squares")
    if effort_norm not in synth.EFFORT_NORMS:
        _fail("effort_norm", f"expected one of {synth.EFFORT_NORMS}, got {effort_norm!r}")

    method_over = raw.get("method", {})
    if not isinstance(method_over, dict):
        _fail("method", "expected an object")
    method_values = {}
    for key, value in method_over.items():
        if key not in _METHOD_KEYS:
            _fail(f"method.{key}", f"unknown key (expected {sorted(_METHOD_KEYS)})")
        method_values[key] = tuple(value) if isinstance(value, list) else value
    try:
        method = MethodOptions(**method_values)
    except TypeError as exc:
        raise ScenarioError(f"method: {exc}") from None

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        _fail("seed", f"expected an integer, got {seed!r}")

    out_dir = raw.get("out_dir", "out")
    if not isinstance(out_dir, str):
        _fail("out_dir", f"expected a string, got {out_dir!r}")

    try:
        scenario = Scenario(
            name=name,
            model_kind=kind,
            params=params,
            init=init,
            control_upper=control_upper,
            use_n0_approx=use_n0_approx,
            t_max=t_max,
            spec_text=spec_text,
            spec=spec,
            effort_norm=effort_norm,
            method=method,
            seed=seed,
            out_dir=out_dir,
        )
        scenario.model_spec()
        scenario.problem()
    except (models.ModelError, synth.SynthesisError) as exc:
        raise ScenarioError(f"scenario: {exc}") from None
    return scenario


# ---------------------------------------------------------------------------
# SVG rendering
#
# A deliberately small line-chart writer: fixed canvas, fixed palette,
# fixed number formatting.  Identical inputs give byte-identical files.

_SVG_W, _SVG_H = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 62, 16, 34, 46
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _svg_num(x: float) -> str:
    return format(float(x), ".6g")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    raw = span / max(1, n)
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * span:
        ticks.append(0.0 if abs(t) < step * 1e-9 else t)
        t += step
    return ticks or [lo]


def _line_chart(
    series: list[tuple[str, np.ndarray, np.ndarray]],
    title: str,
    x_label: str,
    y_label: str,
) -> str:
    xs_all = np.concatenate([s[1] for s in series])
    ys_all = np.concatenate([s[2] for s in series])
    x_lo, x_hi = float(xs_all.min()), float(xs_all.max())
    y_lo, y_hi = float(ys_all.min()), float(ys_all.max())
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo = min(y_lo, 0.0) if y_lo >= 0 else y_lo - pad
    y_hi = y_hi + pad
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0

    plot_w = _SVG_W - _MARGIN_L - _MARGIN_R
    plot_h = _SVG_H - _MARGIN_T - _MARGIN_B

    def px(x: float) -> float:
        return _MARGIN_L + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y: float) -> float:
        return _MARGIN_T + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SVG_W}" height="{_SVG_H}" '
        f'viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<text x="{_SVG_W // 2}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    axis = f'{_MARGIN_L},{_MARGIN_T} {_MARGIN_L},{_MARGIN_T + plot_h} {_MARGIN_L + plot_w},{_MARGIN_T + plot_h}'
    out.append(f'<polyline points="{axis}" fill="none" stroke="black" stroke-width="1"/>')
    for t in _nice_ticks(x_lo, x_hi):
        x = px(t)
        out.append(
            f'<line x1="{_svg_num(x)}" y1="{_MARGIN_T + plot_h}" x2="{_svg_num(x)}" '
            f'y2="{_MARGIN_T + plot_h + 4}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_svg_num(x)}" y="{_MARGIN_T + plot_h + 18}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{_svg_num(t)}</text>'
        )
    for t in _nice_ticks(y_lo, y_hi):
        y = py(t)
        out.append(
            f'<line x1="{_MARGIN_L - 4}" y1="{_svg_num(y)}" x2="{_MARGIN_L}" '
            f'y2="{_svg_num(y)}" stroke="black"/>'
        )
        out.append(
            f'<text x="{_MARGIN_L - 8}" y="{_svg_num(y + 4)}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{_svg_num(t)}</text>'
        )
    out.append(
        f'<text x="{_MARGIN_L + plot_w // 2}" y="{_SVG_H - 8}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{x_label}</text>'
    )
    out.append(
        f'<text x="16" y="{_MARGIN_T + plot_h // 2}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {_MARGIN_T + plot_h // 2})">{y_label}</text>'
    )
    for idx, (label, xs, ys) in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        points = " ".join(f"{_svg_num(px(x))},{_svg_num(py(y))}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _MARGIN_T + 14 + 16 * idx
        lx = _MARGIN_L + plot_w - 110
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{lx + 28}" y="{ly}" font-family="sans-serif" font-size="11">{label}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _read_csv_columns(path: Path) -> dict[str, np.ndarray]:
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:]]
    data = np.array(rows, dtype=float)
    return {name: data[:, j] for j, name in enumerate(header)}


_PANELS = {
    "vaccination": {
        "individuals": (["I", "E", "S", "R", "D"], "Number of individuals"),
        "control": ("control", "Vaccinated individuals per day"),
        "cumulative": ("D", "Number of deaths"),
        "per_day": ("dD", "Number of deaths per day"),
    },
    "shield": {
        "individuals": (["I", "E", "S", "R", "D"], "Number of individuals"),
        "control": ("control", "Shield strength"),
        "cumulative": ("D", "Number of deaths"),
        "per_day": ("dD", "Number of deaths per day"),
    },
    "quarantine": {
        "individuals": (["U", "Q"], "Un-quarantined and quarantined infected"),
        "control": ("control", "Quarantine rate"),
        "cumulative": ("C", "Number of confirmed infected"),
        "per_day": ("dC", "Confirmed infected per day"),
    },
}


def emit_plots(result: SynthesisResult, out_dir: str | os.PathLike) -> list[Path]:
    """Persist the trajectory and control CSVs and render one SVG per
    panel (compartments, control input, cumulative count, per-day count).

    The plotted series are parsed back from the CSV files just written,
    so plots and persisted data cannot diverge.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    traj_csv = out / "trajectory.csv"
    traj_csv.write_text(models.trajectory_to_csv(result.trajectory))
    written.append(traj_csv)
    control_csv = out / "control.csv"
    control_csv.write_text(
        models.control_to_csv(result.control.values, ts=result.trajectory.ts)
    )
    written.append(control_csv)

    traj_cols = _read_csv_columns(traj_csv)
    control_cols = _read_csv_columns(control_csv)
    panels = _PANELS[result.control.kind]

    for panel, (channels, label) in panels.items():
        if channels == "control":
            xs = control_cols["t_days"]
            series = [("control", xs, control_cols["control"])]
            if xs.size == 0:
                series = [("control", np.zeros(1), np.zeros(1))]
        elif isinstance(channels, list):
            xs = traj_cols["t_days"]
            series = [(name, xs, traj_cols[name]) for name in channels]
        else:
            xs = traj_cols["t_days"]
            series = [(channels, xs, traj_cols[channels])]
        svg = _line_chart(series, label, "Time (days)", "Millions of individuals")
        path = out / f"{panel}.svg"
        path.write_text(svg)
        written.append(path)
    return written
