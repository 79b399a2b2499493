import json
import math

import numpy as np
import pytest

from secure_swipt.cli.units import watts_to_dbm
from secure_swipt.experiments import (CSV_COLUMNS, SweepSpec, TrialRecord, aggregate, draw_instance,
                                      eavesdropper_pool, empirical_outage, passes_screen, rho_grid_oracle,
                                      rows_to_csv, run_sweep_trials, run_trial, trial_seed)
from secure_swipt.formulation import assemble
from secure_swipt.solver import solve
from secure_swipt.system import TransmitPolicy
from conftest import FADING, default_config, random_psd

ORACLE_DB = 0.05


def dumps(records):
    return json.dumps([r.to_dict() for r in records], sort_keys=True)


def db_gap(a, b):
    return abs(10 * math.log10(a / b))


class TestScreen:
    def test_screened_draws_are_infeasible(self):
        cfg = default_config(n_t=4)
        rejected = [s for s in range(200) if not passes_screen(draw_instance(cfg, FADING, s), cfg)][:8]
        assert rejected
        for seed in rejected:
            rep = solve(assemble("optimal", draw_instance(cfg, FADING, seed), cfg))
            assert rep.status == "infeasible"

    def test_trial_records_screened_draws(self):
        cfg = default_config(n_t=4)
        seed = next(s for s in range(200) if not passes_screen(draw_instance(cfg, FADING, s), cfg))
        recs = run_trial(cfg, FADING, seed, ("optimal", "baseline1"))
        assert [r.status for r in recs] == ["infeasible", "infeasible"]
        assert all(r.message.startswith("screened") for r in recs)


class TestRunTrial:
    def test_reproducible(self, pool):
        seed = pool(4, 0.0, 1)[0].seed
        cfg = default_config(n_t=4)
        a = run_trial(cfg, FADING, seed, ("optimal", "suboptimal"), outage_draws=500)
        b = run_trial(cfg, FADING, seed, ("optimal", "suboptimal"), outage_draws=500)
        assert dumps(a) == dumps(b)
        assert a[0].optimal and a[0].scheme == "optimal" and a[0].instance_id == seed

    def test_kappa_zero_schemes_coincide(self, pool):
        seed = pool(4, 0.0, 1)[0].seed
        cfg = default_config(n_t=4, kappa=0.0)
        opt, bench = run_trial(cfg, FADING, seed, ("optimal", "benchmark_kappa0"), outage_draws=100)
        assert opt.objective_w == bench.objective_w

    def test_harvest_targets_met(self, pool):
        seed = pool(6, 0.05, 1)[0].seed
        cfg = default_config(n_t=6, sigma_est_sq=0.05)
        for rec in run_trial(cfg, FADING, seed, ("optimal", "suboptimal", "baseline1", "baseline2"),
                             outage_draws=100):
            if not rec.optimal:
                continue
            assert rec.harvest_desired_w >= cfg.p_min_desired_w - 1e-6
            assert min(rec.harvest_idle_w) >= cfg.p_min_idle_w[0] - 1e-6

    @pytest.mark.parametrize("schemes", [(), ("optimal", "mrt")])
    def test_scheme_validation(self, schemes):
        with pytest.raises(ValueError):
            run_trial(default_config(n_t=4), FADING, 0, schemes)


class TestOutage:
    def test_zero_beam(self, rng):
        cfg = default_config(n_t=4)
        p = TransmitPolicy(np.zeros((4, 4)), random_psd(rng, 4), np.zeros((4, 4)), 0.5)
        assert empirical_outage(p, cfg, 1e-9, 1000, 0) == 1.0

    def test_unbounded_tolerance(self, rng):
        cfg = default_config(n_t=4, gamma_tol=1e300)
        p = TransmitPolicy(random_psd(rng, 4), np.zeros((4, 4)), np.zeros((4, 4)), 0.5)
        assert empirical_outage(p, cfg, 1e-9, 1000, 0) == 1.0

    def test_isotropic_beam(self):
        # W = c I: the best of J eavesdroppers stays below 0 dB iff max_j ||l_j||^2 <= sigma~^2 / c
        cfg = default_config(n_t=4)
        p = TransmitPolicy(3e-10 * np.eye(4), np.zeros((4, 4)), np.zeros((4, 4)), 0.5)
        pool = eavesdropper_pool(cfg, 7, 20_000)
        expect = np.mean(np.max(np.sum(np.abs(pool) ** 2, axis=2), axis=1) <= 1e-9 / 3e-10)
        assert empirical_outage(p, cfg, 1e-9, 20_000, pool) == expect
        assert 0.5 < empirical_outage(p, cfg, 1e-9, 20_000, 7) < 1.0

    def test_draws_validated(self, rng):
        p = TransmitPolicy(random_psd(rng, 4), np.zeros((4, 4)), np.zeros((4, 4)), 0.5)
        with pytest.raises(ValueError):
            empirical_outage(p, default_config(n_t=4), 1.0, 0, 0)

    def test_pool_prefix_stable(self):
        cfg = default_config(n_t=4)
        assert np.array_equal(eavesdropper_pool(cfg, 3, 50), eavesdropper_pool(cfg, 3, 200)[:50])


class TestSeeds:
    def test_trial_seeds(self):
        seeds = [trial_seed(0, i) for i in range(100)]
        assert len(set(seeds)) == 100
        assert seeds == [trial_seed(0, i) for i in range(100)]
        assert trial_seed(1, 0) != seeds[0]


class TestRhoOracle:
    def test_no_harvest_floor_hits_upper_boundary(self, pool):
        inst = pool(4, 0.0, 1)[0]
        cfg = inst.problem.config.with_(p_min_desired_w=0.0)
        joint = solve(assemble("optimal", inst.channels, cfg))
        res = rho_grid_oracle(inst.channels, cfg, grid_points=5, golden_iters=10)
        assert res.rho == pytest.approx(1 - 1e-6)
        assert db_gap(res.objective_w, joint.objective_w) <= ORACLE_DB

    def test_matches_joint_solve(self, pool):
        for inst in pool(4, 0.0, 3):
            res = rho_grid_oracle(inst.channels, inst.problem.config, grid_points=11, golden_iters=20)
            assert res.status == "optimal"
            assert res.objective_w >= inst.report.objective_w * (1 - 1e-6)
            assert db_gap(res.objective_w, inst.report.objective_w) <= ORACLE_DB

    def test_grid_is_unimodal(self, pool):
        for inst in pool(4, 0.0, 3):
            res = rho_grid_oracle(inst.channels, inst.problem.config, grid_points=11, golden_iters=0)
            vals = res.values[np.isfinite(res.values)]
            i = int(np.argmin(vals))
            slack = 1e-7 * vals[i]
            assert np.all(np.diff(vals[:i + 1]) <= slack) and np.all(np.diff(vals[i:]) >= -slack)

    def test_grid_size_validated(self, pool):
        inst = pool(4, 0.0, 1)[0]
        with pytest.raises(ValueError):
            rho_grid_oracle(inst.channels, inst.problem.config, grid_points=2)


def spec(**kw):
    base = dict(swept_parameter="gamma_req_db", values=(5.0, 10.0), trials=2, schemes=("optimal",),
                base_config=default_config(n_t=4), outage_draws=100)
    base.update(kw)
    return SweepSpec(**base)


def record(scheme, power, status="optimal", **kw):
    return TrialRecord(0, scheme, status, objective_w=power, tr_w=power, tr_v=0.0, tr_we=0.0, rho=0.5,
                       final_rank=1, prop1=True, secrecy_capacity=1.0, harvest_desired_w=1e-3,
                       harvest_idle_w=(1e-3,), empirical_outage=1.0, **kw)


class TestSweepSpec:
    @pytest.mark.parametrize("change", [{"values": (10.0, 5.0)}, {"values": ()}, {"trials": 0},
                                        {"swept_parameter": "eta"}, {"schemes": ("optimal", "x")},
                                        {"max_draws": 1}])
    def test_invalid(self, change):
        with pytest.raises(ValueError):
            spec(**change)

    def test_config_at(self):
        s = spec()
        assert s.config_at(10.0).gamma_req == pytest.approx(10.0)
        assert spec(swept_parameter="n_t", values=(4, 6)).config_at(6).n_t == 6
        assert spec(swept_parameter="k_total", values=(2, 3)).config_at(2).n_idle == 1
        assert spec(swept_parameter="sigma_est_sq", values=(0.0, 0.05)).config_at(0.05).sigma_est_sq == 0.05


class TestAggregate:
    def test_watts_averaged_before_dbm(self):
        s = spec(values=(10.0,), schemes=("optimal", "baseline1"))
        trials = [[[record("optimal", 1e-3), record("baseline1", 0.0, status="infeasible")]],
                  [[record("optimal", 3e-3), record("baseline1", 4e-3)]]]
        opt, base = aggregate(s, trials)
        assert opt["trials_ok"] == 2 and base["trials_ok"] == 1
        assert opt["mean_power_dbm"] == pytest.approx(watts_to_dbm(2e-3))
        assert base["mean_power_dbm"] == pytest.approx(watts_to_dbm(4e-3))
        assert opt["mean_trV_dbm"] == -math.inf

    def test_no_solved_trials(self):
        s = spec(values=(10.0,))
        (row,) = aggregate(s, [[[record("optimal", 1.0, status="infeasible")]]])
        assert row["trials_ok"] == 0 and math.isnan(row["mean_rho"])

    def test_csv_header(self):
        rows = aggregate(spec(values=(10.0,)), [[[record("optimal", 1e-3)]]])
        text = rows_to_csv(rows)
        assert text.splitlines()[0] == (
            "sweep_param,sweep_value,scheme,trials_ok,mean_power_dbm,mean_trW_dbm,mean_trV_dbm,"
            "mean_trWE_dbm,mean_rho,rank1_frac,prop1_frac,mean_secrecy_bps_hz,mean_harvest_desired_dbm,"
            "mean_harvest_idle_dbm,empirical_outage")
        assert tuple(text.splitlines()[0].split(",")) == CSV_COLUMNS


class TestSweepTrials:
    def test_independent_of_worker_count(self):
        s = spec(values=(10.0,), trials=1, max_draws=256)
        one = run_sweep_trials(s, jobs=1)
        two = run_sweep_trials(s, jobs=2)
        assert rows_to_csv(aggregate(s, one)) == rows_to_csv(aggregate(s, two))
        assert len(one) == 1 and one[0][0][0].optimal

    def test_draw_mode_keeps_every_trial(self):
        s = spec(values=(10.0,), trials=3)
        trials = run_sweep_trials(s)
        assert len(trials) == 3
        assert [t[0][0].instance_id for t in trials] == [trial_seed(0, i) for i in range(3)]
