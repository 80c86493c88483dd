"""Configuration handling, result persistence and the command line."""
from __future__ import annotations

import csv
import json

import pytest

from marginal_selftest import ConfigError, ExperimentConfig, run
from marginal_selftest.cli import build_parser, main, make_config
from marginal_selftest.sdp import read_sdpa


# configuration

@pytest.mark.parametrize("data", [
    {"experiment": "nope"},
    {"experiment": "w3", "eps": [1.5]},
    {"experiment": "w3", "eps": []},
    {"experiment": "wlambda", "lambdas": [0.0]},
    {"experiment": "w4", "bodies": [4]},
    {"experiment": "w3", "tol_gap": 0.0},
    {"experiment": "w3", "workers": 0},
    {"experiment": "slice", "directions": 0},
    {"experiment": "w3", "basis": {"depth": 2}},
    {"experiment": "w3", "schema_version": 99},
    {"experiment": "w3", "colour": "blue"},
    {"eps": [0.0]},
])
def test_invalid_configurations_are_rejected(data):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(data)


def test_config_json_round_trip(tmp_path):
    cfg = ExperimentConfig("w4", eps=[0, 0.01], bodies=[2, 3], tol_gap=1e-7, workers=2,
                           basis={"max_parties": 2})
    path = tmp_path / "cfg.json"
    cfg.save(path)
    again = ExperimentConfig.load(path)
    assert again == cfg
    assert json.loads(path.read_text())["schema_version"] == 1


def test_tolerance_defaults_and_overrides():
    assert ExperimentConfig("w3").tolerances == (1e-6, 1e-8)
    assert ExperimentConfig("w3", tol_gap=1e-7, tol_feas=1e-9).tolerances == (1e-7, 1e-9)


def test_cli_flags_override_configuration_file(tmp_path):
    path = tmp_path / "cfg.json"
    ExperimentConfig("w3", eps=[0.5], tol_gap=1e-5).save(path)
    args = build_parser().parse_args(["--config", str(path), "--eps", "0", "0.01", "--no-symmetrize"])
    cfg = make_config(args)
    assert cfg.experiment == "w3" and cfg.eps == [0.0, 0.01] and cfg.tol_gap == 1e-5
    assert cfg.symmetrize is False


def test_cli_subcommand_conflicting_with_experiment_flag():
    args = build_parser().parse_args(["w3", "--experiment", "w4"])
    with pytest.raises(ConfigError):
        make_config(args)


# runs and outputs

@pytest.fixture(scope="module")
def w3_table(tmp_path_factory):
    out = tmp_path_factory.mktemp("w3")
    return run(ExperimentConfig("w3", eps=[0.01, 0.0], workers=2, out=str(out))), out


def test_rows_sorted_and_certified(w3_table):
    table, _ = w3_table
    assert [r.params["eps"] for r in table.rows] == [0.0, 0.01]
    assert table.all_optimal
    assert all(r.certificate_passed for r in table.rows)
    assert table.rows[0].value >= table.rows[1].value


def test_workers_do_not_change_results(w3_table):
    table, _ = w3_table
    serial = run(ExperimentConfig("w3", eps=[0.0, 0.01], workers=1))
    assert serial.values() == pytest.approx(table.values(), abs=1e-12)


def test_outputs_written(w3_table):
    _, out = w3_table
    with open(out / "w3.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    for row in rows:
        assert row["status"] == "optimal"
        assert float(row["gap"]) >= 0.0 and row["relative_gap"] != ""
        assert row["certificate_passed"] == "True"
    report = json.loads((out / "w3_report.json").read_text())
    assert report["all_optimal"] and report["config"]["experiment"] == "w3"
    manifest = json.loads((out / "w3_basis_manifest.json").read_text())
    assert manifest
    dumps = sorted((out / "w3_solutions").glob("*.json"))
    assert len(dumps) == 2
    dump = json.loads(dumps[0].read_text())
    assert dump["status"] == "optimal" and dump["sense"] in ("min", "max")
    assert "Z_A Z_B" in dump["x"]
    assert all("label" in m and "value" in m for m in dump["multipliers"])
    assert dump["relative_gap"] <= 1e-6


def test_basis_manifest_reuse(w3_table):
    table, out = w3_table
    again = run(ExperimentConfig("w3", eps=[0.0], basis={"manifest": str(out / "w3_basis_manifest.json")}))
    assert again.rows[0].value == pytest.approx(table.rows[0].value, abs=1e-7)


def test_cli_run_exit_zero(tmp_path, capsys):
    code = main(["w3", "--eps", "0", "--out", str(tmp_path)])
    assert code == 0
    assert "optimal" in capsys.readouterr().out
    assert (tmp_path / "w3.csv").exists()


def test_cli_invalid_input_exit_two(capsys):
    assert main(["w3", "--eps", "2"]) == 2
    assert "error" in capsys.readouterr().err


def test_cli_non_optimal_row_exit_one(capsys):
    # a Bell value above the quantum maximum has no feasible point
    assert main(["tibell", "--violation", "10.5"]) == 1
    assert "infeasible" in capsys.readouterr().out


def test_cli_export_sdpa(tmp_path):
    target = tmp_path / "w3.dat-s"
    assert main(["export-sdpa", "--experiment", "w3", "--eps", "0", "0.01", "--export-sdpa", str(target)]) == 0
    files = sorted(tmp_path.glob("*.dat-s"))
    assert len(files) == 2
    prob = read_sdpa(files[0])
    assert not prob.maximize   # the fidelity bound is a minimum
    assert len(prob.eq_rhs) > 0 and prob.dictionary


def test_export_alongside_run(tmp_path):
    target = tmp_path / "forced.dat-s"
    table = run(ExperimentConfig("forced-zzz", export_sdpa=str(target)))
    assert len(list(tmp_path.glob("*.dat-s"))) == len(table.rows) == 2


# limiting cases of the experiments

def test_w3_fully_mixed_marginals():
    table = run(ExperimentConfig("w3", eps=[1.0]))
    assert len(table.rows) == 1 and table.rows[0].optimal
    # reference overlap of the maximally mixed input is 1/8; the band allows 3/8 + 0.05
    assert table.rows[0].value <= 3 / 8 + 0.05


def test_w3_dual_value_close_to_primal():
    row = run(ExperimentConfig("w3", eps=[0.0])).rows[0]
    assert row.gap <= 1e-5


def test_forced_zzz_unconstrained_at_full_noise():
    table = run(ExperimentConfig("forced-zzz", eps=[1.0]))
    ext = {r.params["sense"]: r.value for r in table.rows}
    assert ext["min"] == pytest.approx(-1.0, abs=1e-4) and ext["max"] == pytest.approx(1.0, abs=1e-4)


def test_slice_anchor_points():
    from marginal_selftest.experiments import SliceScanner

    scanner = SliceScanner(ExperimentConfig("slice", directions=1))
    assert scanner.npa_feasible(0.0, 0.0) and scanner.local_feasible(0.0, 0.0)
    assert scanner.local_feasible(1.0, 0.0)
    assert scanner.npa_feasible(0.0, 1.0) and not scanner.local_feasible(0.0, 1.0)
