import json
import math
from pathlib import Path

import numpy as np
import pytest

from secure_swipt.cli import db_to_linear, dbm_to_watts, linear_to_db, mean_dbm, watts_to_dbm
from secure_swipt.cli.main import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, OUT_ENV, main
from secure_swipt.cli.scenario import SWEEP_DEFAULTS, ScenarioError, ScenarioFile
from secure_swipt.experiments import CSV_COLUMNS, draw_instance, passes_screen
from secure_swipt.formulation import assemble
from secure_swipt.solver import solve

DEFAULT = str(Path(__file__).resolve().parent.parent / "scenarios" / "default.json")


def write_scenario(tmp_path, name="s.json", **sections):
    path = tmp_path / name
    path.write_text(json.dumps(sections))
    return path


def small_sweep(tmp_path):
    sweep = dict(SWEEP_DEFAULTS, values=[10.0], trials=1, outage_draws=200)
    return write_scenario(tmp_path, system={"n_t": 4}, sweep=sweep)


def infeasible_seed(scenario):
    cfg = scenario.config
    return next(s for s in range(100) if not passes_screen(draw_instance(cfg, scenario.fading, s), cfg))


class TestUnits:
    def test_reference_points(self):
        assert dbm_to_watts(0.0) == pytest.approx(1e-3, rel=1e-15)
        assert dbm_to_watts(30.0) == pytest.approx(1.0, rel=1e-15)
        assert watts_to_dbm(0.0) == -math.inf
        assert db_to_linear(10.0) == pytest.approx(10.0) and linear_to_db(100.0) == pytest.approx(20.0)

    def test_round_trip(self):
        rng = np.random.default_rng(5)
        for w in 10 ** rng.uniform(-15, 3, 100):
            assert dbm_to_watts(watts_to_dbm(w)) == pytest.approx(w, rel=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            dbm_to_watts(-math.inf)
        assert math.isnan(watts_to_dbm(-1.0))

    def test_mean_is_taken_in_watts(self):
        assert mean_dbm([1e-3, 3e-3]) == pytest.approx(watts_to_dbm(2e-3))
        assert math.isnan(mean_dbm([]))


class TestScenario:
    def test_round_trip(self, tmp_path):
        s = ScenarioFile.from_dict({"system": {"gamma_req_db": 12.5, "p_min_idle_dbm": [-1.0, 0.0, 1.0]},
                                    "sweep": SWEEP_DEFAULTS})
        path = tmp_path / "a.json"
        s.save(path)
        again = ScenarioFile.load(path)
        assert again.to_dict() == s.to_dict()
        assert again.dumps() == s.dumps()
        assert again.config == s.config

    def test_linear_values_converted_once(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            dbm = rng.uniform(-20, 30, 3)
            s = ScenarioFile.from_dict({"system": {"p_max_antenna_dbm": float(dbm[0]),
                                                   "p_min_desired_dbm": float(dbm[1]),
                                                   "gamma_req_db": float(dbm[2])}})
            cfg = s.config
            assert cfg.p_max_antenna_w[0] == dbm_to_watts(dbm[0])
            assert cfg.p_min_desired_w == dbm_to_watts(dbm[1])
            assert cfg.gamma_req == db_to_linear(dbm[2])
            assert s.system["p_max_antenna_dbm"] == float(dbm[0])

    @pytest.mark.parametrize("text", ['{"system": {"p_max_antenna_dbm": -Infinity}}',
                                      '{"system": {"p_max_antenna_dbm": "-inf"}}',
                                      '{"system": {"gamma_req_db": NaN}}'])
    def test_non_finite_rejected(self, text):
        with pytest.raises(ScenarioError):
            ScenarioFile.loads(text)

    def test_field_diagnostics(self):
        with pytest.raises(ScenarioError, match="system.n_t"):
            ScenarioFile.from_dict({"system": {"n_t": "six"}})
        with pytest.raises(ScenarioError, match="unknown"):
            ScenarioFile.from_dict({"system": {"antennas": 4}})

    def test_line_diagnostics(self):
        with pytest.raises(ScenarioError, match="line 2"):
            ScenarioFile.loads('{"system":\n {"n_t": ,}}')

    def test_default_file_loads(self):
        s = ScenarioFile.load(DEFAULT)
        assert s.config.n_t == 6 and s.sweep["trials"] == 200


class TestCommands:
    def test_missing_file(self, capsys, tmp_path):
        assert main(["solve", str(tmp_path / "nope.json")]) == EXIT_ERROR
        assert "nope.json" in capsys.readouterr().err

    def test_usage_error_is_an_error(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["solve"])
        assert exc.value.code == EXIT_ERROR

    def test_quantile(self, capsys):
        assert main(["quantile", "--n-t", "1", "--kappa", "0.99", "--j", "5"]) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["quantile_coeff"] == pytest.approx(0.1610, abs=5e-5)
        main(["quantile", "--n-t", "4", "--kappa", "0", "--j", "5"])
        out = json.loads(capsys.readouterr().out)
        assert out["dropped"] and out["quantile_coeff"] is None

    def test_infeasible_draw(self, tmp_path, capsys):
        path = write_scenario(tmp_path, system={"n_t": 4})
        seed = infeasible_seed(ScenarioFile.load(path))
        assert main(["solve", str(path), "--seed", str(seed), "--out", str(tmp_path / "o")]) == EXIT_INFEASIBLE
        report = json.loads((tmp_path / "o" / "solve_report.json").read_text())
        assert report["report"]["status"] == "infeasible"

    def test_output_directory_from_environment(self, tmp_path, monkeypatch, capsys):
        path = write_scenario(tmp_path, system={"n_t": 4})
        seed = infeasible_seed(ScenarioFile.load(path))
        monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
        main(["solve", str(path), "--seed", str(seed)])
        assert (tmp_path / "env" / "solve_report.json").exists()
        main(["solve", str(path), "--seed", str(seed), "--out", str(tmp_path / "flag")])
        assert (tmp_path / "flag" / "solve_report.json").exists()

    def test_solve_default_scenario(self, tmp_path, capsys):
        code = main(["solve", DEFAULT, "--search", "200", "--out", str(tmp_path)])
        assert code == EXIT_OK
        report = json.loads((tmp_path / "solve_report.json").read_text())
        assert report["audit"]["rank1"] is True
        cons = json.loads((tmp_path / "constraint_report.json").read_text())
        assert min(v for v in cons["margins"].values() if v is not None) >= -1e-6
        scenario = ScenarioFile.load(DEFAULT)
        cfg = scenario.config
        direct = solve(assemble("optimal", draw_instance(cfg, scenario.fading, report["seed"]), cfg))
        assert report["report"]["objective_w"] == direct.objective_w

    def test_sweep_smoke(self, tmp_path, capsys):
        path = small_sweep(tmp_path)
        code = main(["sweep", str(path), "--trials", "1", "--schemes", "optimal", "--out", str(tmp_path)])
        assert code == EXIT_OK
        lines = (tmp_path / "sweep.csv").read_text().splitlines()
        assert tuple(lines[0].split(",")) == CSV_COLUMNS and len(lines) == 2
        assert capsys.readouterr().out.splitlines()[0] == lines[0]

    def test_sweep_byte_identical(self, tmp_path, capsys):
        path = small_sweep(tmp_path)
        outs = []
        for i, jobs in enumerate(("1", "1", "2")):
            out = tmp_path / f"run{i}"
            main(["sweep", str(path), "--seed", "3", "--max-draws", "128", "--jobs", jobs, "--out", str(out)])
            outs.append((out / "sweep.csv").read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_unknown_scheme(self, tmp_path, capsys):
        assert main(["sweep", str(small_sweep(tmp_path)), "--schemes", "mrt"]) == EXIT_ERROR
