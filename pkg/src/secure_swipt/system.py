"""Scenario parameters, decision variables and the metrics/constraints evaluated on them.

All quantities are linear: powers in Watts, SINRs as ratios.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

from . import hermitian as hm

if TYPE_CHECKING:
    from .channels import ChannelSet

CONSTRAINT_TAGS = ("C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8", "C9", "C10")


def _tuple_of(value, length: int, name: str) -> tuple[float, ...]:
    if np.isscalar(value):
        return (float(value),) * length
    out = tuple(float(v) for v in value)
    if len(out) != length:
        raise ValueError(f"{name} needs {length} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class SystemConfig:
    n_t: int
    k_total: int
    j_eaves: int
    gamma_req: float
    gamma_tol_k: tuple[float, ...]
    gamma_tol: float
    kappa: float
    p_min_desired_w: float
    p_min_idle_w: tuple[float, ...]
    p_max_antenna_w: tuple[float, ...]
    eta: float
    sigma_ant_sq_w: float
    sigma_s_sq_w: float
    sigma_est_sq: float = 0.0

    def __post_init__(self):
        if self.n_t < 1 or self.k_total < 1 or self.j_eaves < 0:
            raise ValueError("need n_t >= 1, k_total >= 1, j_eaves >= 0")
        if not self.gamma_req > 0:
            raise ValueError("gamma_req must be positive")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError("kappa must lie in [0, 1]")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if not 0.0 <= self.sigma_est_sq < 1.0:
            raise ValueError("sigma_est_sq must lie in [0, 1)")
        if len(self.gamma_tol_k) != self.k_total - 1 or len(self.p_min_idle_w) != self.k_total - 1:
            raise ValueError("per-idle-receiver tuples must have k_total - 1 entries")
        if len(self.p_max_antenna_w) != self.n_t:
            raise ValueError("p_max_antenna_w must have n_t entries")
        powers = (self.p_min_desired_w, *self.p_min_idle_w, *self.p_max_antenna_w,
                  self.sigma_ant_sq_w, self.sigma_s_sq_w)
        if any(p < 0 or not math.isfinite(p) for p in powers):
            raise ValueError("powers must be finite and non-negative")
        if any(g <= 0 for g in self.gamma_tol_k) or self.gamma_tol <= 0:
            raise ValueError("SINR tolerances must be positive")

    @classmethod
    def uniform(cls, n_t: int, k_total: int, *, j_eaves: int = 5, gamma_req: float,
                gamma_tol_k: float = 1.0, gamma_tol: float = 1.0, kappa: float = 0.99,
                p_min_desired_w: float = 1e-3, p_min_idle_w: float | Sequence[float] = 1e-3,
                p_max_antenna_w: float | Sequence[float] = 1.0, eta: float = 0.5,
                sigma_ant_sq_w: float = 10 ** (-141 / 10), sigma_s_sq_w: float = 10 ** (-65 / 10),
                sigma_est_sq: float = 0.0) -> "SystemConfig":
        """Build a config broadcasting scalar per-receiver / per-antenna values."""
        return cls(
            n_t=n_t, k_total=k_total, j_eaves=j_eaves, gamma_req=gamma_req,
            gamma_tol_k=_tuple_of(gamma_tol_k, k_total - 1, "gamma_tol_k"),
            gamma_tol=gamma_tol, kappa=kappa, p_min_desired_w=p_min_desired_w,
            p_min_idle_w=_tuple_of(p_min_idle_w, k_total - 1, "p_min_idle_w"),
            p_max_antenna_w=_tuple_of(p_max_antenna_w, n_t, "p_max_antenna_w"),
            eta=eta, sigma_ant_sq_w=sigma_ant_sq_w, sigma_s_sq_w=sigma_s_sq_w,
            sigma_est_sq=sigma_est_sq,
        )

    @property
    def n_idle(self) -> int:
        return self.k_total - 1

    def resized(self, n_t: int | None = None, k_total: int | None = None) -> "SystemConfig":
        """Change N_T or K, repeating the first per-antenna / per-receiver value."""
        n_t = self.n_t if n_t is None else n_t
        k_total = self.k_total if k_total is None else k_total
        tol = self.gamma_tol_k[0] if self.gamma_tol_k else 1.0
        pmin = self.p_min_idle_w[0] if self.p_min_idle_w else self.p_min_desired_w
        return replace(
            self, n_t=n_t, k_total=k_total,
            gamma_tol_k=(tol,) * (k_total - 1), p_min_idle_w=(pmin,) * (k_total - 1),
            p_max_antenna_w=(self.p_max_antenna_w[0],) * n_t,
        )

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class TransmitPolicy:
    w_cov: np.ndarray
    an_cov: np.ndarray
    es_cov: np.ndarray
    rho: float
    delta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    beam_vector: np.ndarray | None = None

    def __post_init__(self):
        for name in ("w_cov", "an_cov", "es_cov"):
            object.__setattr__(self, name, hm.symmetrize(getattr(self, name)))
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float).reshape(-1))
        object.__setattr__(self, "nu", np.asarray(self.nu, dtype=float).reshape(-1))
        if self.beam_vector is not None:
            w = np.asarray(self.beam_vector, dtype=complex).reshape(-1)
            object.__setattr__(self, "beam_vector", w)
            tr = float(np.trace(self.w_cov).real)
            if np.linalg.norm(self.w_cov - hm.outer(w), 2) > 1e-6 * max(tr, 1e-300):
                raise ValueError("beam_vector does not reproduce w_cov")

    @property
    def n_t(self) -> int:
        return self.w_cov.shape[0]

    @property
    def total_power(self) -> float:
        return float((np.trace(self.w_cov) + np.trace(self.an_cov) + np.trace(self.es_cov)).real)

    def power_split(self) -> tuple[float, float, float]:
        return tuple(float(np.trace(m).real) for m in (self.w_cov, self.an_cov, self.es_cov))

    def to_dict(self) -> dict:
        def cm(m):
            return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}
        out = {
            "w_cov": cm(self.w_cov), "an_cov": cm(self.an_cov), "es_cov": cm(self.es_cov),
            "rho": self.rho, "delta": self.delta.tolist(), "nu": self.nu.tolist(),
        }
        if self.beam_vector is not None:
            out["beam_vector"] = cm(self.beam_vector)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "TransmitPolicy":
        def mc(x):
            return np.asarray(x["re"]) + 1j * np.asarray(x["im"])
        bv = mc(d["beam_vector"]) if "beam_vector" in d else None
        return cls(mc(d["w_cov"]), mc(d["an_cov"]), mc(d["es_cov"]), float(d["rho"]),
                   np.asarray(d.get("delta", [])), np.asarray(d.get("nu", [])), bv)


def _quad(m: np.ndarray, v: np.ndarray) -> float:
    return float(np.real(np.vdot(v, m @ v)))


def sinr_desired(policy: TransmitPolicy, h, config: SystemConfig) -> float:
    """Desired-receiver SINR after cancelling the (known) energy signal."""
    if policy.rho <= 0:
        raise ValueError("rho must be positive to decode information")
    h = np.asarray(h, dtype=complex)
    rho = policy.rho
    num = rho * _quad(policy.w_cov, h)
    den = rho * (config.sigma_ant_sq_w + _quad(policy.an_cov, h)) + config.sigma_s_sq_w
    return num / den


def sinr_idle_split(policy: TransmitPolicy, g, rho_k: float, config: SystemConfig) -> float:
    """Idle-receiver SINR for a given split ratio rho_k (before the worst-split bound)."""
    g = np.asarray(g, dtype=complex)
    num = rho_k * _quad(policy.w_cov, g)
    den = rho_k * (config.sigma_ant_sq_w + _quad(policy.an_cov, g)) + config.sigma_s_sq_w
    return num / den


def sinr_idle_worstsplit(policy: TransmitPolicy, g, config: SystemConfig) -> float:
    g = np.asarray(g, dtype=complex)
    den = config.sigma_ant_sq_w + _quad(policy.an_cov, g) + config.sigma_s_sq_w
    return _quad(policy.w_cov, g) / den


def sinr_passive(policy: TransmitPolicy, l_tilde, sigma_tilde_sq: float) -> float:
    """Normalized passive-eavesdropper SINR; the energy signal is interference here."""
    l_tilde = np.asarray(l_tilde, dtype=complex)
    den = _quad(policy.es_cov, l_tilde) + _quad(policy.an_cov, l_tilde) + sigma_tilde_sq
    return _quad(policy.w_cov, l_tilde) / den


def sinr_passive_batch(policy: TransmitPolicy, l_tilde: np.ndarray, sigma_tilde_sq: float) -> np.ndarray:
    """Vectorised sinr_passive over the leading axes of l_tilde (..., n_t)."""
    l = np.asarray(l_tilde, dtype=complex)

    def q(m):
        return np.einsum("...i,ij,...j->...", l.conj(), m, l).real

    return q(policy.w_cov) / (q(policy.es_cov) + q(policy.an_cov) + sigma_tilde_sq)


def secrecy_capacity_from_sinrs(sinr_ic: float, sinr_idle: Sequence[float] = (),
                                sinr_eaves: Sequence[float] = ()) -> float:
    leak = [math.log2(1.0 + s) for s in (*sinr_idle, *sinr_eaves)]
    worst = max(leak) if leak else 0.0
    return max(0.0, math.log2(1.0 + sinr_ic) - worst)


def secrecy_capacity(policy: TransmitPolicy, channels: "ChannelSet", eaves_draws,
                     config: SystemConfig) -> float:
    """Secrecy capacity in bit/s/Hz using the worst-split idle and normalized eavesdropper SINRs.

    ``eaves_draws`` holds the J normalized eavesdropper channels of one realization
    (shape (J, n_t)); the idle terms use the true idle channels.
    """
    ic = sinr_desired(policy, channels.h, config)
    idle = [sinr_idle_worstsplit(policy, g, config) for g in channels.g_true]
    draws = np.asarray(eaves_draws, dtype=complex).reshape(-1, channels.n_t) if len(eaves_draws) else []
    eav = [sinr_passive(policy, l, channels.sigma_tilde_sq) for l in draws]
    return secrecy_capacity_from_sinrs(ic, idle, eav)


def harvested_power_desired(policy: TransmitPolicy, h, config: SystemConfig) -> float:
    h = np.asarray(h, dtype=complex)
    total = _quad(policy.w_cov + policy.an_cov + policy.es_cov, h) + config.sigma_ant_sq_w
    return (1.0 - policy.rho) * config.eta * total


def harvested_power_idle(policy: TransmitPolicy, g, config: SystemConfig) -> float:
    g = np.asarray(g, dtype=complex)
    total = _quad(policy.w_cov + policy.an_cov + policy.es_cov, g) + config.sigma_ant_sq_w
    return config.eta * total


def per_antenna_power(policy: TransmitPolicy, n: int) -> float:
    """Radiated power of antenna n (1-based)."""
    if not 1 <= n <= policy.n_t:
        raise IndexError(f"antenna index {n} outside 1..{policy.n_t}")
    total = policy.w_cov + policy.an_cov + policy.es_cov
    return float(total[n - 1, n - 1].real)


# ---------------------------------------------------------------------------
# exact worst case over the uncertainty ball


def trust_region_extremum(a, b, c: float, radius: float, maximize: bool = True) -> float:
    """Extremum of x^H A x + 2 Re(b^H x) + c over the complex ball ||x|| <= radius.

    Exact trust-region solution in the eigenbasis of A with a bisection on the
    secular equation; the hard case is handled explicitly.
    """
    a = hm.check_hermitian(a)
    b = np.asarray(b, dtype=complex).reshape(-1)
    if not maximize:
        return -trust_region_extremum(-a, -b, -c, radius, True)

    def value(x):
        return float(np.real(np.vdot(x, a @ x)) + 2 * np.real(np.vdot(b, x)) + c)

    if radius <= 0:
        return float(c)
    # max f  <=>  min x^H M x - 2 Re(b^H x) with M = -A; stationarity (M + mu I) x = b
    lam, u = np.linalg.eigh(-a)
    beta = u.conj().T @ b
    scale = max(1.0, float(np.max(np.abs(lam))))
    if lam[0] > 0:
        y = beta / lam
        if np.linalg.norm(y) <= radius:
            return value(u @ y)
    mu_lo = max(0.0, -lam[0])
    deg = lam <= lam[0] + 1e-12 * scale
    if lam[0] <= 0 and np.all(np.abs(beta[deg]) <= 1e-13 * max(np.linalg.norm(beta), 1e-300)):
        y = np.zeros_like(beta)
        y[~deg] = beta[~deg] / (lam[~deg] + mu_lo)
        ny = np.linalg.norm(y)
        if ny <= radius:
            y[np.flatnonzero(deg)[0]] = np.sqrt(radius**2 - ny**2)
            return value(u @ y)

    def ynorm(mu):
        return float(np.linalg.norm(beta / (lam + mu)))

    step = max(np.linalg.norm(beta) / radius, 1e-300)
    hi = mu_lo + step
    while ynorm(hi) > radius:
        step *= 2.0
        hi = mu_lo + step
    lo = mu_lo
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if ynorm(mid) > radius:
            lo = mid
        else:
            hi = mid
    return value(u @ (beta / (lam + hi)))


def worst_idle_sinr(policy: TransmitPolicy, g_hat, epsilon: float, config: SystemConfig,
                    gamma_tol: float) -> float:
    """max over ||dg|| <= eps of [g^H W g / gamma_tol - g^H V g - noise], g = g_hat + dg."""
    a = policy.w_cov / gamma_tol - policy.an_cov
    g_hat = np.asarray(g_hat, dtype=complex)
    c = _quad(a, g_hat) - config.sigma_ant_sq_w - config.sigma_s_sq_w
    return trust_region_extremum(a, a @ g_hat, c, epsilon, maximize=True)


def worst_idle_harvest(policy: TransmitPolicy, g_hat, epsilon: float, config: SystemConfig) -> float:
    """min over ||dg|| <= eps of the idle receiver's harvested power (Watts)."""
    a = policy.w_cov + policy.an_cov + policy.es_cov
    g_hat = np.asarray(g_hat, dtype=complex)
    c = _quad(a, g_hat) + config.sigma_ant_sq_w
    return config.eta * trust_region_extremum(a, a @ g_hat, c, epsilon, maximize=False)


def ball_samples(rng: np.random.Generator, n_t: int, radius: float, count: int,
                 boundary: bool) -> np.ndarray:
    """Uniform samples in (or on the surface of) the complex ball of the given radius."""
    z = rng.standard_normal((count, 2 * n_t))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    if not boundary:
        z *= rng.random((count, 1)) ** (1.0 / (2 * n_t))
    z *= radius
    return z[:, :n_t] + 1j * z[:, n_t:]


@dataclass(frozen=True)
class ConstraintReport:
    margins: dict[str, float]
    sampled: dict[str, float]
    empirical_outage: float | None
    c3bar_margin: float | None

    def to_dict(self) -> dict:
        return {"margins": dict(self.margins), "sampled": dict(self.sampled),
                "empirical_outage": self.empirical_outage, "c3bar_margin": self.c3bar_margin}

    def min_margin(self, tags: Sequence[str] = CONSTRAINT_TAGS) -> float:
        return min(self.margins[t] for t in tags)

    def satisfied(self, tol: float = 1e-6, tags: Sequence[str] = CONSTRAINT_TAGS) -> bool:
        return self.min_margin(tags) >= -tol


def evaluate_constraints(policy: TransmitPolicy, channels: "ChannelSet", config: SystemConfig,
                         robustness_samples: int = 0, eaves_draws: np.ndarray | None = None,
                         c3bar_coeff: float | None = None, seed: int = 0) -> ConstraintReport:
    """Margins (>= 0 means satisfied) for C1..C10 of the relaxed problem.

    C2/C5 margins are exact worst cases over the uncertainty ball; the sampled
    counterparts use ``robustness_samples`` boundary and interior points.
    C3 is the empirical success fraction minus kappa when ``eaves_draws``
    (shape (groups, J, n_t)) is supplied, else the deterministic C3bar margin.
    """
    if robustness_samples < 0:
        raise ValueError("robustness_samples must be >= 0")
    rng = np.random.default_rng(seed)
    noise = config.sigma_ant_sq_w + config.sigma_s_sq_w
    margins: dict[str, float] = {}
    sampled: dict[str, float] = {}

    sinr = sinr_desired(policy, channels.h, config) if policy.rho > 0 else 0.0
    margins["C1"] = sinr / config.gamma_req - 1.0

    c2, c5, s2, s5 = [], [], [], []
    for k in range(config.n_idle):
        gh, eps, tol_k = channels.g_hat[k], float(channels.epsilon[k]), config.gamma_tol_k[k]
        v_scale = noise + (np.linalg.norm(gh) + eps) ** 2 * max(hm.lambda_max(policy.an_cov), 0.0)
        c2.append(-worst_idle_sinr(policy, gh, eps, config, tol_k) / v_scale)
        p_ref = max(config.p_min_idle_w[k], config.eta * config.sigma_ant_sq_w)
        c5.append((worst_idle_harvest(policy, gh, eps, config) - config.p_min_idle_w[k]) / p_ref)
        if robustness_samples:
            half = robustness_samples // 2
            dgs = np.vstack([ball_samples(rng, config.n_t, eps, robustness_samples - half, True),
                             ball_samples(rng, config.n_t, eps, half, False)])
            gs = gh[None, :] + dgs
            pol_q = lambda m: np.einsum("ki,ij,kj->k", gs.conj(), m, gs).real  # noqa: E731
            sinrs = pol_q(policy.w_cov) / (noise + pol_q(policy.an_cov))
            harv = config.eta * (pol_q(policy.w_cov + policy.an_cov + policy.es_cov) + config.sigma_ant_sq_w)
            s2.append(float(np.min(1.0 - sinrs / tol_k)))
            s5.append(float(np.min(harv - config.p_min_idle_w[k]) / p_ref))
    margins["C2"] = min(c2) if c2 else 1.0
    if robustness_samples:
        sampled["C2"] = min(s2) if s2 else 1.0
        sampled["C5"] = min(s5) if s5 else 1.0

    c3bar_margin = None
    if c3bar_coeff is not None and config.kappa > 0 and config.j_eaves > 0:
        rhs = c3bar_coeff * config.gamma_tol * channels.sigma_tilde_sq
        q = policy.w_cov - config.gamma_tol * (policy.es_cov + policy.an_cov)
        # rhs sits at noise level while W is at transmit level; scale by both
        c3bar_margin = (rhs - hm.lambda_max(q)) / (rhs + max(hm.lambda_max(policy.w_cov), 0.0))
    outage = None
    if eaves_draws is not None and config.j_eaves > 0:
        outage = empirical_success(policy, eaves_draws, channels.sigma_tilde_sq, config.gamma_tol)
        margins["C3"] = outage - config.kappa
    elif c3bar_margin is not None:
        margins["C3"] = c3bar_margin
    else:
        margins["C3"] = 1.0 if (config.kappa == 0 or config.j_eaves == 0) else float("nan")

    harv = harvested_power_desired(policy, channels.h, config)
    p_ref = max(config.p_min_desired_w, config.eta * config.sigma_ant_sq_w)
    margins["C4"] = (harv - config.p_min_desired_w) / p_ref
    margins["C5"] = min(c5) if c5 else 1.0

    c6 = []
    for n in range(config.n_t):
        pmax = config.p_max_antenna_w[n]
        c6.append((pmax - per_antenna_power(policy, n + 1)) / (pmax if pmax > 0 else 1.0))
    margins["C6"] = min(c6)
    margins["C7"] = min(policy.rho, 1.0 - policy.rho)

    scale = max(policy.total_power, 1e-300)
    margins["C8"] = min(hm.lambda_min(m) for m in (policy.w_cov, policy.an_cov, policy.es_cov)) / scale
    ev = hm.eigvals_desc(policy.w_cov)
    margins["C9"] = -float(ev[1] / ev[0]) if (len(ev) > 1 and ev[0] > 0) else (0.0 if ev[0] > 0 else -1.0)
    aux = np.concatenate([policy.delta, policy.nu])
    margins["C10"] = float(np.min(aux)) / scale if aux.size else 1.0
    if any(not math.isfinite(v) for v in margins.values()):
        raise ValueError("non-finite constraint margin; supply eavesdropper draws or the C3bar coefficient")
    return ConstraintReport({t: float(margins[t]) for t in CONSTRAINT_TAGS}, sampled, outage, c3bar_margin)


def empirical_success(policy: TransmitPolicy, eaves_draws: np.ndarray, sigma_tilde_sq: float,
                      gamma_tol: float) -> float:
    """Fraction of draw groups (groups, J, n_t) whose best eavesdropper SINR stays <= gamma_tol."""
    d = np.asarray(eaves_draws, dtype=complex)
    if d.ndim == 2:
        d = d[:, None, :]
    s = sinr_passive_batch(policy, d, sigma_tilde_sq)
    return float(np.mean(np.max(s, axis=1) <= gamma_tol))
