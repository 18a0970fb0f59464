"""Command-line interface.

Subcommands: ``simulate``, ``synthesize``, ``verify``, ``export-mip``
and ``list-presets``.  The exit code is the machine-readable channel
(0 success/satisfied, 1 infeasible or failed verification, 2 usage
errors, 3 scenario or schema errors); human-readable text goes to
standard error and data artifacts to files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import mip_export, models, mtl, scenario_io, synth
from .models import ModelError, SimulationError
from .scenario_io import Scenario, ScenarioError

_GRAMMAR_HELP = """\
MTL grammar (concrete syntax):
  formula := until ;  until := disj [ "U[" int "," int "]" until ]
  disj := conj { "|" conj } ;  conj := unary { "&" unary }
  unary := "!" unary | "G[" int "," int "]" unary | "F[" int "," int "]" unary
         | "(" formula ")" | "TRUE" | atom
  atom := channel ("<=" | ">=") number

Channels: I, E, S, R, D, dD, N (SEIR models); S, U, Q, C, dC, N (SUQC).
Units: millions of individuals; interval bounds are day indices.
Example: "G[0,100](dD <= 0.001) & G[0,100](D <= 0.05) & F[40,60](R >= 6)"
"""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epimtl",
        description="Synthesize daily epidemic control inputs satisfying MTL specifications.",
        epilog=_GRAMMAR_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, control_source: bool = False):
        p.add_argument("scenario", help="scenario file path or bundled scenario name")
        p.add_argument("--t-max", type=int, default=None, help="override the horizon")
        p.add_argument("--seed", type=int, default=None, help="override the RNG seed")
        p.add_argument("--spec", default=None, help="override the MTL specification text")
        p.add_argument(
            "--norm",
            choices=synth.EFFORT_NORMS,
            default=None,
            help="override the effort norm",
        )
        p.add_argument("--out", default=None, help="override the output directory")
        if control_source:
            group = p.add_mutually_exclusive_group()
            group.add_argument(
                "--control",
                default=None,
                help="CSV file with a control column (as written by synthesize)",
            )
            group.add_argument(
                "--constant",
                type=float,
                default=None,
                help="constant control value for every day (default: 0)",
            )

    p_sim = sub.add_parser("simulate", help="simulate a control and write CSV + plots")
    add_common(p_sim, control_source=True)

    p_synth = sub.add_parser(
        "synthesize", help="synthesize a minimum-effort satisfying control"
    )
    add_common(p_synth)

    p_verify = sub.add_parser("verify", help="verify a control against the specification")
    add_common(p_verify, control_source=True)

    p_mip = sub.add_parser("export-mip", help="export the mixed-integer encoding as an LP file")
    add_common(p_mip)
    p_mip.add_argument(
        "--allow-shield-approx",
        action="store_true",
        help="consent to the approximate linearization required by the shield model",
    )

    sub.add_parser("list-presets", help="print the bundled model parameter presets")
    return parser


def _load(args) -> Scenario:
    scenario = scenario_io.load_scenario(args.scenario)
    overrides = {}
    if args.t_max is not None:
        overrides["t_max"] = args.t_max
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.spec is not None:
        overrides["spec_text"] = args.spec
    if args.norm is not None:
        overrides["effort_norm"] = args.norm
    if args.out is not None:
        overrides["out_dir"] = args.out
    if not overrides:
        return scenario
    # Re-validate after overrides rather than patching fields in place.
    if "spec_text" in overrides:
        channels = scenario.model_spec().channels
        overrides["spec"] = mtl.parse_formula(overrides["spec_text"], set(channels))
    scenario = dataclasses.replace(scenario, **overrides)
    if mtl.horizon(scenario.spec) > scenario.t_max:
        raise ScenarioError(
            f"t_max: must cover the spec horizon {mtl.horizon(scenario.spec)}"
        )
    scenario.problem()
    return scenario


def _control_values(args, scenario: Scenario) -> np.ndarray:
    if getattr(args, "control", None):
        cols = scenario_io._read_csv_columns(Path(args.control))
        if "control" not in cols:
            raise ScenarioError(f"control: {args.control} has no 'control' column")
        return cols["control"]
    constant = getattr(args, "constant", None)
    return np.full(scenario.t_max, 0.0 if constant is None else constant)


def _pseudo_result(scenario: Scenario, values: np.ndarray, report) -> synth.SynthesisResult:
    control = synth.ControlSequence(
        values=values,
        kind=scenario.model_spec().control_kind,
        upper=scenario.control_upper,
    )
    return synth.SynthesisResult(
        control=control,
        trajectory=report.trajectory,
        effort=report.effort,
        robustness=report.robustness,
        satisfied=report.satisfied,
        iterations=0,
        wall_time=0.0,
        method="simulate",
        seed=scenario.seed,
    )


def _cmd_simulate(args) -> int:
    scenario = _load(args)
    values = _control_values(args, scenario)
    report = synth.verify(values, scenario.problem())
    result = _pseudo_result(scenario, values, report)
    written = scenario_io.emit_plots(result, scenario.out_dir)
    print(
        f"simulated {scenario.name}: satisfied={report.satisfied} "
        f"robustness={report.robustness:.6g}; wrote {len(written)} files to {scenario.out_dir}",
        file=sys.stderr,
    )
    return 0


def _cmd_verify(args) -> int:
    scenario = _load(args)
    values = _control_values(args, scenario)
    report = synth.verify(values, scenario.problem())
    out = Path(scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "satisfied": report.satisfied,
        "robustness": report.robustness,
        "effort": report.effort,
        "spec": scenario.spec_text,
    }
    (out / "verify.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(
        f"verify {scenario.name}: satisfied={report.satisfied} "
        f"robustness={report.robustness:.6g} effort={report.effort:.6g}",
        file=sys.stderr,
    )
    return 0 if report.satisfied else 1


def _cmd_synthesize(args) -> int:
    scenario = _load(args)
    result = synth.synthesize(scenario.problem())
    out = Path(scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(result.report_json())
    scenario_io.emit_plots(result, scenario.out_dir)
    print(
        f"synthesize {scenario.name}: satisfied={result.satisfied} "
        f"effort={result.effort:.6g} robustness={result.robustness:.6g} "
        f"iterations={result.iterations} ({result.wall_time:.1f}s); "
        f"artifacts in {scenario.out_dir}",
        file=sys.stderr,
    )
    return 0 if result.satisfied else 1


def _cmd_export_mip(args) -> int:
    scenario = _load(args)
    model = mip_export.encode_mip(
        scenario.problem(),
        allow_shield_approx=args.allow_shield_approx,
        preset_name=scenario.name,
    )
    out = Path(scenario.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{scenario.name}.lp"
    path.write_text(mip_export.export_lp(model))
    print(
        f"exported {scenario.name}: {len(model.bounds)} continuous vars, "
        f"{len(model.binaries)} binaries, {len(model.constraints)} constraints -> {path}",
        file=sys.stderr,
    )
    return 0


def _cmd_list_presets(_args) -> int:
    print("bundled model parameter presets (rates per day, populations in millions):",
          file=sys.stderr)
    for name, params in models.PRESETS.items():
        if isinstance(params, models.SeirParams):
            row = (
                f"  {name}: SEIR  lambda = {params.birth_rate:.6g}  mu = {params.death_rate:.6g}"
                f"  alpha = {params.fatality_rate:.6g}  beta = {params.transmission_rate:.6g}"
                f"  epsilon = {params.progression_rate:.6g}  gamma = {params.recovery_rate:.6g}"
                f"  N0 = {params.n0:.6g}  Ts = {params.ts:.6g}"
            )
        else:
            row = (
                f"  {name}: SUQC  beta0 = {params.infection_rate:.6g}"
                f"  gamma2 = {params.confirmation_rate:.6g}"
                f"  sigma = {params.subsequent_confirmation_rate:.6g}"
                f"  N0 = {params.n0:.6g}  Ts = {params.ts:.6g}"
            )
        print(row, file=sys.stderr)
    print(f"bundled scenarios: {', '.join(scenario_io.bundled_scenarios())}", file=sys.stderr)
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "synthesize": _cmd_synthesize,
    "verify": _cmd_verify,
    "export-mip": _cmd_export_mip,
    "list-presets": _cmd_list_presets,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ScenarioError, mtl.MtlError, ModelError, synth.SynthesisError,
            mip_export.UnsupportedSpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except SimulationError as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
