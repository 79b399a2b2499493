import math

import numpy as np
import pytest

from secure_swipt import hermitian as hm
from secure_swipt.channels import FadingSpec, draw_legitimate_channels
from secure_swipt.system import (CONSTRAINT_TAGS, TransmitPolicy, ball_samples,
                                 evaluate_constraints, harvested_power_desired, harvested_power_idle,
                                 per_antenna_power, secrecy_capacity, secrecy_capacity_from_sinrs,
                                 sinr_desired, sinr_idle_split, sinr_idle_worstsplit, sinr_passive,
                                 trust_region_extremum, worst_idle_harvest)
from conftest import default_config, random_psd


def cvec(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def policy(rng, n=4, rho=0.6):
    return TransmitPolicy(random_psd(rng, n, 1), random_psd(rng, n), random_psd(rng, n), rho)


def quad(m, v):
    # elementwise double sum, deliberately not the vdot form used by the package
    return sum((np.conj(v[i]) * m[i, j] * v[j]).real for i in range(len(v)) for j in range(len(v)))


class TestSystemConfig:
    def test_defaults_are_linear(self):
        cfg = default_config()
        assert cfg.sigma_ant_sq_w == pytest.approx(1e-3 * 10 ** (-111 / 10))
        assert cfg.sigma_s_sq_w == pytest.approx(1e-3 * 10 ** (-35 / 10))
        assert cfg.p_max_antenna_w == (1.0,) * 6

    @pytest.mark.parametrize("change", [{"gamma_req": 0.0}, {"kappa": 1.5}, {"eta": 0.0},
                                        {"p_min_desired_w": -1.0}, {"sigma_est_sq": 1.0}])
    def test_invalid(self, change):
        with pytest.raises(ValueError):
            default_config().with_(**change)

    def test_resized(self):
        cfg = default_config().resized(n_t=4, k_total=2)
        assert len(cfg.p_max_antenna_w) == 4 and len(cfg.p_min_idle_w) == 1


class TestTransmitPolicy:
    def test_beam_vector_must_match(self, rng):
        w = cvec(rng, 3)
        TransmitPolicy(hm.outer(w), np.zeros((3, 3)), np.zeros((3, 3)), 0.5, beam_vector=w)
        with pytest.raises(ValueError):
            TransmitPolicy(hm.outer(w), np.zeros((3, 3)), np.zeros((3, 3)), 0.5, beam_vector=2 * w)

    def test_dict_round_trip(self, rng):
        p = policy(rng)
        q = TransmitPolicy.from_dict(p.to_dict())
        assert np.array_equal(p.w_cov, q.w_cov) and p.rho == q.rho


class TestSinr:
    def test_mrt_without_noise_injection(self, rng):
        cfg = default_config(n_t=4)
        h = cvec(rng, 4)
        p = TransmitPolicy(2.0 * hm.outer(h) / np.vdot(h, h).real, np.zeros((4, 4)), np.zeros((4, 4)), 1.0)
        expect = 2.0 * np.vdot(h, h).real / (cfg.sigma_ant_sq_w + cfg.sigma_s_sq_w)
        assert sinr_desired(p, h, cfg) == pytest.approx(expect, rel=1e-12)

    def test_zero_beam(self, rng):
        cfg = default_config(n_t=4)
        p = TransmitPolicy(np.zeros((4, 4)), random_psd(rng, 4), np.zeros((4, 4)), 0.5)
        assert sinr_desired(p, cvec(rng, 4), cfg) == 0.0
        assert sinr_idle_worstsplit(p, cvec(rng, 4), cfg) == 0.0

    def test_zero_split_rejected(self, rng):
        with pytest.raises(ValueError):
            sinr_desired(policy(rng, rho=0.0), cvec(rng, 4), default_config(n_t=4))

    def test_against_scalar_evaluator(self, rng):
        cfg = default_config(n_t=4)
        for _ in range(10):
            p, h, g, l = policy(rng), cvec(rng, 4), cvec(rng, 4), cvec(rng, 4)
            rho = p.rho
            ic = rho * quad(p.w_cov, h) / (rho * (cfg.sigma_ant_sq_w + quad(p.an_cov, h)) + cfg.sigma_s_sq_w)
            idle = quad(p.w_cov, g) / (cfg.sigma_ant_sq_w + quad(p.an_cov, g) + cfg.sigma_s_sq_w)
            pe = quad(p.w_cov, l) / (quad(p.es_cov, l) + quad(p.an_cov, l) + 0.3)
            assert sinr_desired(p, h, cfg) == pytest.approx(ic, rel=1e-10)
            assert sinr_idle_worstsplit(p, g, cfg) == pytest.approx(idle, rel=1e-10)
            assert sinr_passive(p, l, 0.3) == pytest.approx(pe, rel=1e-10)

    def test_worst_split_bounds_every_split(self, rng):
        cfg = default_config(n_t=4)
        p, g = policy(rng), cvec(rng, 4)
        bound = sinr_idle_worstsplit(p, g, cfg)
        for rho_k in np.linspace(1e-3, 1.0, 50):
            assert sinr_idle_split(p, g, rho_k, cfg) <= bound * (1 + 1e-12)

    def test_noise_injection_suppresses_interception(self, rng):
        cfg = default_config(n_t=4)
        g = cvec(rng, 4)
        p = TransmitPolicy(random_psd(rng, 4, 1), 1e12 * hm.outer(g), np.zeros((4, 4)), 0.5)
        assert sinr_idle_worstsplit(p, g, cfg) < 1e-9
        l = cvec(rng, 4)
        q = TransmitPolicy(random_psd(rng, 4, 1), np.zeros((4, 4)), 1e12 * hm.outer(l), 0.5)
        assert sinr_passive(q, l, 1.0) < 1e-9

    def test_aligned_passive_beam(self, rng):
        l = cvec(rng, 4)
        w = 0.7 * l / np.linalg.norm(l)
        p = TransmitPolicy(hm.outer(w), np.zeros((4, 4)), np.zeros((4, 4)), 0.5)
        expect = np.trace(p.w_cov).real * np.vdot(l, l).real / 0.2
        assert sinr_passive(p, l, 0.2) == pytest.approx(expect, rel=1e-12)


class TestSecrecy:
    def test_equal_sinrs_give_zero(self):
        assert secrecy_capacity_from_sinrs(3.0, [3.0]) == 0.0

    def test_spot_value(self):
        assert secrecy_capacity_from_sinrs(31.623, [], [1.0]) == pytest.approx(4.028, abs=5e-4)

    def test_no_eavesdroppers(self):
        assert secrecy_capacity_from_sinrs(7.0) == pytest.approx(3.0)

    def test_monotone_and_non_negative(self):
        vals = [secrecy_capacity_from_sinrs(s, [2.0], [0.5]) for s in np.linspace(0, 20, 50)]
        assert min(vals) >= 0 and np.all(np.diff(vals) >= 0)

    def test_policy_level(self, rng):
        cfg = default_config(n_t=4)
        ch = draw_legitimate_channels(cfg, FadingSpec(), 0)
        p = policy(rng)
        c = secrecy_capacity(p, ch, [], cfg)
        ic = sinr_desired(p, ch.h, cfg)
        idle = [sinr_idle_worstsplit(p, g, cfg) for g in ch.g_true]
        assert c == pytest.approx(max(0.0, math.log2(1 + ic) - max(math.log2(1 + s) for s in idle)))


class TestHarvest:
    def test_full_information_split(self, rng):
        assert harvested_power_desired(policy(rng, rho=1.0), cvec(rng, 4), default_config(n_t=4)) == 0.0

    def test_energy_signal_only(self, rng):
        cfg = default_config(n_t=4, eta=1.0)
        h = cvec(rng, 4)
        we = 0.3 * hm.outer(h) / np.vdot(h, h).real ** 2
        p = TransmitPolicy(np.zeros((4, 4)), np.zeros((4, 4)), we, 0.0)
        assert harvested_power_desired(p, h, cfg) == pytest.approx(0.3 + cfg.sigma_ant_sq_w, rel=1e-12)

    def test_split_conserves_power(self, rng):
        cfg = default_config(n_t=4)
        h = cvec(rng, 4)
        for rho in (0.1, 0.5, 0.9):
            p = policy(rng, rho=rho)
            total = quad(p.w_cov + p.an_cov + p.es_cov, h) + cfg.sigma_ant_sq_w
            info = rho * total * cfg.eta
            assert harvested_power_desired(p, h, cfg) + info == pytest.approx(cfg.eta * total, rel=1e-12)

    def test_idle_ignores_split(self, rng):
        cfg = default_config(n_t=4)
        g = cvec(rng, 4)
        p = policy(rng, rho=0.2)
        q = TransmitPolicy(p.w_cov, p.an_cov, p.es_cov, 0.9)
        assert harvested_power_idle(p, g, cfg) == harvested_power_idle(q, g, cfg)
        zero = TransmitPolicy(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((4, 4)), 0.5)
        assert harvested_power_idle(zero, g, cfg) == pytest.approx(cfg.eta * cfg.sigma_ant_sq_w)

    def test_idle_against_scalar_evaluator(self, rng):
        cfg = default_config(n_t=4)
        g, p = cvec(rng, 4), policy(rng)
        expect = cfg.eta * (quad(p.w_cov, g) + quad(p.an_cov, g) + quad(p.es_cov, g) + cfg.sigma_ant_sq_w)
        assert harvested_power_idle(p, g, cfg) == pytest.approx(expect, rel=1e-10)


class TestPerAntennaPower:
    def test_diagonal(self):
        d = np.diag([1.0, 2.0, 3.0])
        p = TransmitPolicy(d, 2 * d, 3 * d, 0.5)
        assert per_antenna_power(p, 2) == pytest.approx(12.0)

    def test_sum_is_total_power(self, rng):
        p = policy(rng)
        assert sum(per_antenna_power(p, n) for n in range(1, 5)) == pytest.approx(p.total_power, rel=1e-12)

    def test_index_range(self, rng):
        with pytest.raises(IndexError):
            per_antenna_power(policy(rng), 5)


class TestWorstCase:
    @pytest.mark.parametrize("maximize", [True, False])
    def test_trust_region_against_sampling(self, rng, maximize):
        for _ in range(5):
            a = random_psd(rng, 2) - random_psd(rng, 2)
            b = cvec(rng, 2)
            c, r = 0.3, 0.8
            val = trust_region_extremum(a, b, c, r, maximize)
            x = ball_samples(rng, 2, r, 200_000, boundary=False)
            x = np.vstack([x, ball_samples(rng, 2, r, 200_000, boundary=True)])
            f = np.einsum("ki,ij,kj->k", x.conj(), a, x).real + 2 * (x @ b.conj()).real + c
            best = f.max() if maximize else f.min()
            sign = 1 if maximize else -1
            assert sign * (val - best) >= -1e-9
            assert abs(val - best) <= 2e-2 * (1 + abs(best))

    def test_zero_radius(self, rng):
        assert trust_region_extremum(random_psd(rng, 3), cvec(rng, 3), 1.5, 0.0) == 1.5

    def test_worst_harvest_not_above_nominal(self, rng):
        cfg = default_config(n_t=4)
        g, p = cvec(rng, 4), policy(rng)
        assert worst_idle_harvest(p, g, 0.2, cfg) <= harvested_power_idle(p, g, cfg)


class TestEvaluateConstraints:
    def test_zero_policy_violates_sinr(self):
        cfg = default_config(n_t=4, kappa=0.0)
        ch = draw_legitimate_channels(cfg, FadingSpec(), 0)
        z = np.zeros((4, 4))
        rep = evaluate_constraints(TransmitPolicy(z, z, z, 0.5), ch, cfg)
        assert rep.margins["C1"] < 0
        assert set(rep.margins) == set(CONSTRAINT_TAGS)

    def test_pure(self, rng):
        cfg = default_config(n_t=4)
        ch = draw_legitimate_channels(cfg, FadingSpec(), 0)
        p = policy(rng)
        a = evaluate_constraints(p, ch, cfg, robustness_samples=20, c3bar_coeff=0.4, seed=3)
        b = evaluate_constraints(p, ch, cfg, robustness_samples=20, c3bar_coeff=0.4, seed=3)
        assert a == b

    def test_needs_chance_information(self, rng):
        cfg = default_config(n_t=4)
        ch = draw_legitimate_channels(cfg, FadingSpec(), 0)
        with pytest.raises(ValueError):
            evaluate_constraints(policy(rng), ch, cfg)

    def test_rejects_negative_sample_count(self, rng):
        cfg = default_config(n_t=4, kappa=0.0)
        ch = draw_legitimate_channels(cfg, FadingSpec(), 0)
        with pytest.raises(ValueError):
            evaluate_constraints(policy(rng), ch, cfg, robustness_samples=-1)
