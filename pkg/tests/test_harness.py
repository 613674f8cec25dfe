import csv
import json
import shutil

import numpy as np
import pytest

from femrac.acceptance import check_acceptance, trace_monotonicity
from femrac.cli import main, parse_values
from femrac.harness import (EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, PRESETS, ScenarioError,
                            load_preset, load_scenario, read_trace_csv, run_experiment, run_sweep,
                            save_scenario, scenario_from_dict, serialize)
from femrac.of_pipeline import Polynomial


def short(name, t_end=1.0):
    return load_preset(name).with_changes(t_end=t_end)


def diverging(tmp_path):
    """A scenario whose plant escapes before any adaptation happens."""
    data = json.loads(serialize(load_preset("sf_fig1")))
    data.update(name="diverge", t_end=10.0, dt=1e-3)
    data["plant"]["A"] = [[0, 1], [400, 200]]
    data["filters"]["mix_tol"] = 1.0
    path = tmp_path / "diverge.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def test_sf_preset_matches_plant():
    sc = load_preset("sf_fig1")
    np.testing.assert_array_equal(sc.plant.A, [[0, 1], [4, 2]])
    np.testing.assert_array_equal(sc.plant.B, [0, 2])
    np.testing.assert_array_equal(sc.reference.A_ref, [[0, 1], [-8, -4]])
    np.testing.assert_array_equal(sc.reference.B_ref, [0, 8])
    assert sc.config.l == 1.0 and sc.law.gamma0 == 1.0 and sc.law.gamma1 == 0.0
    assert sc.law.sigma == 0.5
    np.testing.assert_array_equal(sc.theta0, [0, 0, 1])
    assert sc.signal()(np.array([3.0]))[0] == 1.0


def test_of_preset_matches_plant():
    sc = load_preset("of_fig6")
    assert sc.plant.bm == 2.0 and sc.plant.R == Polynomial([-4.0, -2.0, 1.0])
    assert sc.reference.b_ref == 8.0 and sc.reference.R_ref == Polynomial([8.0, 4.0, 1.0])
    np.testing.assert_array_equal(sc.config.psi, [20, 100])
    np.testing.assert_allclose(sc.config.lam.roots(), [-1.0])
    np.testing.assert_array_equal(sc.theta0, [1, 0, 0, 0])


@pytest.mark.parametrize("name", PRESETS)
def test_preset_round_trip(name, tmp_path):
    sc = load_preset(name)
    path = tmp_path / f"{name}.json"
    save_scenario(sc, path)
    again = load_scenario(path)
    assert again.data == sc.data
    assert serialize(again) == serialize(sc)


def test_preset_by_name():
    assert load_scenario("of_fig8").name == "of_fig8"


def test_unstable_reference_reported(tmp_path):
    data = json.loads(serialize(load_preset("sf_fig1")))
    data["reference"]["A_ref"] = [[0, 1], [8, 4]]
    data["dt"] = -1.0
    data["theta0"] = [0, 0]
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(data)
    errors = info.value.errors
    assert any("A_ref not Hurwitz" in e and e.startswith("reference.A_ref") for e in errors)
    assert any(e.startswith("scenario.dt") for e in errors)
    assert any(e.startswith("theta0") for e in errors)


def test_validation_errors():
    data = json.loads(serialize(load_preset("of_fig6")))
    data["schema_version"] = 99
    data["bogus"] = 1
    data["signal"] = {"name": "nope"}
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(data)
    text = "\n".join(info.value.errors)
    assert "schema_version" in text and "bogus: unknown field" in text and "signal" in text


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ScenarioError, match="not found"):
        load_scenario(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ScenarioError, match="parse error"):
        load_scenario(bad)


def test_run_outputs(tmp_path):
    assert run_experiment(short("sf_fig1"), tmp_path, decimate=10) == EXIT_OK
    with open(tmp_path / "trace.csv", encoding="utf-8", newline="") as fh:
        header = next(csv.reader(fh))
    assert header[:2] == ["t", "r"] and "Omega" in header and "Delta" in header
    cols = read_trace_csv(tmp_path / "trace.csv")
    assert np.all(np.diff(cols["t"]) > 0)
    np.testing.assert_allclose(np.diff(cols["t"]), 1e-3)
    summary = json.loads((tmp_path / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "ok" and summary["theta_star"] == [-6.0, -3.0, 4.0]
    assert load_scenario(tmp_path / "scenario.json").data == short("sf_fig1").data


def test_bit_identical_reruns(tmp_path):
    sc = short("of_fig8", 2.0)
    run_experiment(sc, tmp_path / "a")
    run_experiment(sc, tmp_path / "b")
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()


def test_overflow_writes_partial_outputs(tmp_path):
    status = run_experiment(load_scenario(diverging(tmp_path)), tmp_path / "out")
    assert status == EXIT_FAILURE
    summary = json.loads((tmp_path / "out" / "summary.json").read_text(encoding="utf-8"))
    assert summary["status"] == "overflow" and 0 < summary["failed_at"] < 10
    cols = read_trace_csv(tmp_path / "out" / "trace.csv")
    assert 0 < cols["t"][-1] <= summary["failed_at"]


def test_sweep_rejects_empty_values(tmp_path):
    with pytest.raises(ScenarioError, match="empty"):
        run_sweep(short("sf_fig1"), "gamma0", [], tmp_path)
    with pytest.raises(ScenarioError):
        run_sweep(short("sf_fig1"), "sigma", [1.0], tmp_path)


def test_sweep_records_failures_and_continues(tmp_path):
    status = run_sweep(short("sf_fig1", 5.0), "gamma0", [1.0, 0.5, 10.0], tmp_path)
    assert status == EXIT_FAILURE
    report = json.loads((tmp_path / "sweep.json").read_text(encoding="utf-8"))
    assert [r["status"] for r in report["runs"]] == ["ok", "error", "ok"]
    assert report["runs"][0]["rate"] > 0 and report["runs"][2]["rate"] > 0
    assert (tmp_path / "gamma0=10" / "trace.csv").exists()


def test_sweep_with_cross(tmp_path):
    refs = [{"name": "constant", "value": 1.0}, {"name": "sine"}]
    status = run_sweep(short("sf_fig1", 10.0), "gamma1", [0.0, 10.0], tmp_path,
                       cross=("reference", refs))
    report = json.loads((tmp_path / "sweep.json").read_text(encoding="utf-8"))
    assert len(report["runs"]) == 4
    (assertion,) = report["assertions"]
    assert assertion["passed"] and status == EXIT_OK


def test_trace_monotonicity():
    cols = {"theta_hat_1": np.array([0.0, 0.5, 1.0]), "theta_hat_2": np.array([2.0, 1.5, 1.0])}
    assert trace_monotonicity(cols, [1.0, 1.0]) == pytest.approx(-0.5)
    cols["theta_hat_1"] = np.array([0.0, 0.5, 0.2])
    assert trace_monotonicity(cols, [1.0, 1.0]) == pytest.approx(0.3)


def test_check_reports_missing_runs(reproduced, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(reproduced, copy)
    shutil.rmtree(copy / "presets" / "of_fig6")
    report = check_acceptance(copy, write=False)
    assert "of_fig6" in report["missing"] and not report["passed"]
    status = {r["criterion"]: r["status"] for r in report["criteria"]}
    assert status[2] == "not run" and status[1] == "pass"


def test_check_detects_tampered_trace(reproduced, tmp_path):
    copy = tmp_path / "copy"
    shutil.copytree(reproduced, copy)
    path = copy / "presets" / "sf_fig2" / "trace.csv"
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    j = rows[0].index("theta_hat_1")
    mid = len(rows) // 2
    rows[mid][j] = repr(float(rows[mid][j]) + 0.5)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        csv.writer(fh).writerows(rows)
    status = {r["criterion"]: r["status"] for r in check_acceptance(copy, write=False)["criteria"]}
    assert status[3] == "fail"


def test_preset_outcomes(reproduced):
    def summary(name):
        return json.loads((reproduced / "presets" / name / "summary.json").read_text("utf-8"))

    for name in ("sf_fig1", "sf_fig2"):
        np.testing.assert_allclose(summary(name)["theta_hat_final"], [-6.0, -3.0, 4.0], atol=1e-2)
    assert abs(summary("of_fig8")["final_output_norm"]) <= 1e-3
    assert summary("sf_baseline")["meta"]["law"] == "baseline"


# ----------------------------------------------------------------------------
# command line


def test_parse_values():
    assert parse_values("1,10,100", "gamma0") == [1.0, 10.0, 100.0]
    assert parse_values("constant,sine", "reference") == [{"name": "constant"}, {"name": "sine"}]
    assert parse_values('[{"name": "sine", "frequency": 2}]', "reference")[0]["frequency"] == 2
    assert parse_values("", "gamma0") == []
    with pytest.raises(ScenarioError):
        parse_values("a,b", "gamma0")


def test_cli_run(tmp_path, capsys):
    path = tmp_path / "s.json"
    save_scenario(short("sf_fig1"), path)
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o"), "--plots"]) == 0
    assert (tmp_path / "o" / "plots.png").stat().st_size > 0


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--scenario", str(tmp_path / "none.json"), "--out", str(tmp_path)]) \
        == EXIT_CONFIG
    path = tmp_path / "s.json"
    save_scenario(short("sf_fig1"), path)
    assert main(["sweep", "--scenario", str(path), "--param", "gamma0", "--values", "",
                 "--out", str(tmp_path / "sw")]) == EXIT_CONFIG
    assert main(["run", "--scenario", str(diverging(tmp_path)), "--out",
                 str(tmp_path / "d")]) == EXIT_FAILURE
    assert "diverged" in capsys.readouterr().err


def test_cli_sweep(tmp_path, capsys):
    path = tmp_path / "s.json"
    save_scenario(short("sf_fig1", 5.0), path)
    status = main(["sweep", "--scenario", str(path), "--param", "gamma0", "--values", "1,10",
                   "--out", str(tmp_path / "sw")])
    out = capsys.readouterr().out
    assert status == EXIT_OK and "gamma0=10" in out and "PASS" in out


def test_cli_check(reproduced, capsys):
    assert main(["check", "--out", str(reproduced)]) == EXIT_OK
    lines = [ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("criterion")]
    assert len(lines) == 12
