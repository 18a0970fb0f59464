import json

import numpy as np
import pytest

from epimtl.models import SEIR_SHIELD, SEIR_VACCINATION, SUQC_QUARANTINE, simulate
from epimtl.mtl import horizon
from epimtl.scenario_io import (
    Scenario,
    ScenarioError,
    bundled_scenarios,
    emit_plots,
    load_scenario,
    scenario_from_dict,
)
from epimtl.synth import ControlSequence, SynthesisResult, verify


def write_scenario(tmp_path, payload, name="case"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(payload))
    return path


# ---------------------------------------------------------------------------
# Bundled scenarios


def test_bundled_scenario_listing():
    names = bundled_scenarios()
    assert len(names) == 9
    assert "lombardy_phi_v1" in names and "wuhan_phi_q3" in names


def test_bundled_vaccination_scenario_contents():
    sc = load_scenario("lombardy_phi_v1")
    assert sc.model_kind == SEIR_VACCINATION
    assert sc.params.transmission_rate == 0.75
    assert sc.params.n0 == 10.0
    assert sc.t_max == 100
    assert horizon(sc.spec) == 100
    assert sc.effort_norm == "sum_squares"
    assert sc.seed == 0
    problem = sc.problem()
    assert problem.horizon_t == 100


def test_bundled_quarantine_scenario_contents():
    sc = load_scenario("wuhan_phi_q3")
    assert sc.model_kind == SUQC_QUARANTINE
    assert sc.params.infection_rate == 0.2967
    assert sc.t_max == 200
    assert sc.control_upper == 1.0
    assert sc.init.total == pytest.approx(8.9, abs=1e-12)


def test_bundled_shield_scenario_contents():
    sc = load_scenario("lombardy_phi_s2")
    assert sc.model_kind == SEIR_SHIELD
    assert sc.control_upper == 100.0


# ---------------------------------------------------------------------------
# Validation


def test_minimal_scenario_gets_defaults(tmp_path):
    path = write_scenario(
        tmp_path,
        {"model": "seir_vaccination", "preset": "lombardy", "spec": "G[0,10] D <= 0.05"},
    )
    sc = load_scenario(path)
    assert sc.t_max == 10  # defaults to the spec horizon
    assert sc.effort_norm == "sum_squares"
    assert sc.seed == 0
    assert sc.out_dir == "out"
    assert sc.use_n0_approx is False


def test_unknown_top_level_key_rejected(tmp_path):
    path = write_scenario(
        tmp_path,
        {
            "model": "seir_vaccination",
            "preset": "lombardy",
            "spec": "G[0,10] D <= 0.05",
            "t_mxa": 10,
        },
    )
    with pytest.raises(ScenarioError, match="t_mxa"):
        load_scenario(path)


def test_unknown_nested_keys_rejected():
    with pytest.raises(ScenarioError, match="params.bogus"):
        scenario_from_dict(
            {
                "model": "seir_vaccination",
                "preset": "lombardy",
                "params": {"bogus": 1},
                "spec": "G[0,10] D <= 0.05",
            }
        )
    with pytest.raises(ScenarioError, match="init.X"):
        scenario_from_dict(
            {
                "model": "seir_vaccination",
                "preset": "lombardy",
                "init": {"X": 1},
                "spec": "G[0,10] D <= 0.05",
            }
        )
    with pytest.raises(ScenarioError, match="method.bogus"):
        scenario_from_dict(
            {
                "model": "seir_vaccination",
                "preset": "lombardy",
                "method": {"bogus": 2},
                "spec": "G[0,10] D <= 0.05",
            }
        )


def test_unknown_preset_and_model():
    with pytest.raises(ScenarioError, match="preset"):
        scenario_from_dict({"model": "seir_vaccination", "preset": "mars", "spec": "TRUE"})
    with pytest.raises(ScenarioError, match="model"):
        scenario_from_dict({"model": "sir", "preset": "lombardy", "spec": "TRUE"})
    with pytest.raises(ScenarioError, match="fit model"):
        scenario_from_dict({"model": "suqc_quarantine", "preset": "lombardy", "spec": "TRUE"})


def test_spec_channel_mismatch():
    with pytest.raises(ScenarioError, match="spec"):
        scenario_from_dict(
            {"model": "seir_vaccination", "preset": "lombardy", "spec": "G[0,5] C <= 0.1"}
        )


def test_t_max_must_cover_horizon():
    with pytest.raises(ScenarioError, match="t_max"):
        scenario_from_dict(
            {
                "model": "seir_vaccination",
                "preset": "lombardy",
                "spec": "G[0,50] D <= 0.05",
                "t_max": 20,
            }
        )


def test_param_overrides_and_explicit_params():
    sc = scenario_from_dict(
        {
            "model": "seir_shield",
            "preset": "lombardy",
            "params": {"chi_max": 55.5},
            "spec": "G[0,5] D <= 0.05",
        }
    )
    assert sc.control_upper == 55.5
    with pytest.raises(ScenarioError, match="required"):
        scenario_from_dict(
            {
                "model": "seir_vaccination",
                "params": {"transmission_rate": 0.5},
                "spec": "TRUE",
            }
        )


def test_init_override_must_conserve_population():
    with pytest.raises(ScenarioError, match="sum"):
        scenario_from_dict(
            {
                "model": "seir_vaccination",
                "preset": "lombardy",
                "init": {"S": 5.0},
                "spec": "TRUE",
            }
        )


def test_missing_scenario_name():
    with pytest.raises(ScenarioError, match="no bundled scenario"):
        load_scenario("definitely_not_a_scenario")


# ---------------------------------------------------------------------------
# Plot emission


def make_result(kind="vaccination"):
    if kind == "quarantine":
        sc = load_scenario("wuhan_phi_q1")
        values = np.full(sc.t_max, 0.2)
    else:
        sc = load_scenario("lombardy_phi_v1")
        values = np.zeros(sc.t_max)
        values[:30] = 0.05
    problem = sc.problem()
    report = verify(values, problem)
    control = ControlSequence(values, sc.model_spec().control_kind, sc.control_upper)
    return SynthesisResult(
        control=control,
        trajectory=report.trajectory,
        effort=report.effort,
        robustness=report.robustness,
        satisfied=report.satisfied,
        iterations=0,
        wall_time=0.0,
        method="simulate",
        seed=0,
    )


def test_emit_plots_writes_four_panels_and_csvs(tmp_path):
    result = make_result()
    written = emit_plots(result, tmp_path)
    names = sorted(p.name for p in written)
    assert names == [
        "control.csv",
        "control.svg",
        "cumulative.svg",
        "individuals.svg",
        "per_day.svg",
        "trajectory.csv",
    ]
    control_svg = (tmp_path / "control.svg").read_text()
    assert "Vaccinated individuals per day" in control_svg
    assert "<polyline" in control_svg


def test_emit_plots_quarantine_panel_labels(tmp_path):
    result = make_result("quarantine")
    emit_plots(result, tmp_path)
    assert "Quarantine rate" in (tmp_path / "control.svg").read_text()
    assert "quarantined" in (tmp_path / "individuals.svg").read_text()


def test_emit_plots_deterministic_bytes(tmp_path):
    result = make_result()
    first = {}
    for path in emit_plots(result, tmp_path / "a"):
        first[path.name] = path.read_bytes()
    for path in emit_plots(result, tmp_path / "b"):
        assert path.read_bytes() == first[path.name]


def test_emit_plots_zero_control_draws_zero_line(tmp_path):
    sc = load_scenario("lombardy_phi_v1")
    values = np.zeros(sc.t_max)
    report = verify(values, sc.problem())
    result = SynthesisResult(
        control=ControlSequence(values, "vaccination", None),
        trajectory=report.trajectory,
        effort=0.0,
        robustness=report.robustness,
        satisfied=report.satisfied,
        iterations=0,
        wall_time=0.0,
        method="simulate",
        seed=0,
    )
    emit_plots(result, tmp_path)
    csv_lines = (tmp_path / "control.csv").read_text().strip().splitlines()
    assert all(line.split(",")[2] == "0" for line in csv_lines[1:])


def test_plotted_series_come_from_persisted_csv(tmp_path):
    result = make_result()
    emit_plots(result, tmp_path)
    # the trajectory CSV holds exactly the plotted channel values
    from epimtl.scenario_io import _read_csv_columns

    cols = _read_csv_columns(tmp_path / "trajectory.csv")
    for name in ("I", "E", "S", "R", "D"):
        assert np.array_equal(cols[name], result.trajectory.channel(name))
    control_cols = _read_csv_columns(tmp_path / "control.csv")
    assert np.array_equal(control_cols["control"], result.control.values)
