"""Channel realizations: TGn-style path loss, Rician/Rayleigh fading, CSI uncertainty."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .system import SystemConfig, ball_samples

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class FadingSpec:
    rician_k_factor_db: float = 6.0
    shadowing_db: float = 0.0
    carrier_freq_hz: float = 470e6
    antenna_gain_db: float = 10.0
    ref_distance_m: float = 2.0
    max_distance_m: float = 20.0
    breakpoint_m: float = 5.0
    pathloss_exp_near: float = 2.0
    pathloss_exp_far: float = 3.5

    def __post_init__(self):
        if not self.ref_distance_m < self.breakpoint_m < self.max_distance_m:
            raise ValueError("need ref_distance_m < breakpoint_m < max_distance_m")
        if self.pathloss_exp_near <= 0 or self.pathloss_exp_far <= 0:
            raise ValueError("path-loss exponents must be positive")

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq_hz

    @property
    def los_power_ratio(self) -> float:
        return 10 ** (self.rician_k_factor_db / 10)


def free_space_gain(distance_m: float, wavelength_m: float) -> float:
    return (wavelength_m / (4 * np.pi * distance_m)) ** 2


def path_gain(distance_m: float, spec: FadingSpec) -> float:
    """Linear power gain: free-space up to the breakpoint, steeper log-distance beyond.

    Includes the joint antenna gain and a fixed shadowing loss.
    """
    if distance_m < spec.ref_distance_m:
        raise ValueError(f"distance {distance_m} m is inside the {spec.ref_distance_m} m guard zone")
    ref = free_space_gain(spec.ref_distance_m, spec.wavelength_m)
    d_near = min(distance_m, spec.breakpoint_m)
    g = ref * (spec.ref_distance_m / d_near) ** spec.pathloss_exp_near
    if distance_m > spec.breakpoint_m:
        g *= (spec.breakpoint_m / distance_m) ** spec.pathloss_exp_far
    return g * 10 ** ((spec.antenna_gain_db - spec.shadowing_db) / 10)


@dataclass(frozen=True)
class ChannelSet:
    h: np.ndarray
    g_true: np.ndarray  # (K-1, n_t)
    g_hat: np.ndarray  # (K-1, n_t)
    epsilon: np.ndarray  # (K-1,)
    l_up_scale: float
    sigma_tilde_sq: float
    distances: np.ndarray  # (K,), desired receiver first
    rng_seed: int
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def n_t(self) -> int:
        return self.h.shape[0]

    @property
    def n_idle(self) -> int:
        return self.g_true.shape[0]

    def to_dict(self) -> dict:
        def c(a):
            return {"re": np.real(a).tolist(), "im": np.imag(a).tolist()}
        return {"h": c(self.h), "g_true": c(self.g_true), "g_hat": c(self.g_hat),
                "epsilon": self.epsilon.tolist(), "l_up_scale": self.l_up_scale,
                "sigma_tilde_sq": self.sigma_tilde_sq, "distances": self.distances.tolist(),
                "rng_seed": self.rng_seed}


def rician_vector(rng: np.random.Generator, n_t: int, k_factor: float) -> np.ndarray:
    """Unit-power-per-antenna Rician vector: ULA steering LOS plus CN(0, I) scatter.

    Antenna n only consumes draws after antennas 0..n-1, so a larger array extends
    a smaller one drawn from the same stream.
    """
    theta = rng.uniform(-np.pi / 2, np.pi / 2)
    phase0 = rng.uniform(0, 2 * np.pi)
    los = np.exp(1j * (phase0 + np.pi * np.arange(n_t) * np.sin(theta)))
    z = rng.standard_normal((n_t, 2))
    nlos = (z[:, 0] + 1j * z[:, 1]) / np.sqrt(2)
    return np.sqrt(k_factor / (k_factor + 1)) * los + np.sqrt(1 / (k_factor + 1)) * nlos


def _receiver_streams(seed: int, count: int, purpose: int) -> list[np.random.Generator]:
    """One generator per receiver, so adding receivers or antennas never reshuffles earlier ones."""
    return [np.random.default_rng([int(seed), purpose, k]) for k in range(count)]


def draw_legitimate_channels(config: SystemConfig, spec: FadingSpec, seed: int) -> ChannelSet:
    """Place K receivers uniformly in [ref, max] distance and draw their Rician channels.

    Receiver 0 is the desired one. Idle-receiver estimates start out perfect;
    see apply_csi_uncertainty.
    """
    n_t, k = config.n_t, config.k_total
    kf = spec.los_power_ratio
    distances, vecs = [], []
    for rng in _receiver_streams(seed, k, 0):
        d = rng.uniform(spec.ref_distance_m, spec.max_distance_m)
        distances.append(d)
        vecs.append(np.sqrt(path_gain(d, spec)) * rician_vector(rng, n_t, kf))
    vecs = np.array(vecs)
    h, g = vecs[0], vecs[1:].reshape(k - 1, n_t)
    l_up_scale = n_t * path_gain(spec.ref_distance_m, spec)
    sigma_tilde_sq = (config.sigma_ant_sq_w + config.sigma_s_sq_w) / l_up_scale
    return ChannelSet(h=h, g_true=g, g_hat=g.copy(), epsilon=np.zeros(k - 1),
                      l_up_scale=l_up_scale, sigma_tilde_sq=sigma_tilde_sq,
                      distances=np.array(distances), rng_seed=int(seed))


def apply_csi_uncertainty(channels: ChannelSet, normalized_error: float, seed: int | None = None,
                          boundary: bool = False) -> ChannelSet:
    """Outdated idle-receiver CSI: eps_k = sqrt(err) * ||g_k||, g_hat = g - dg with dg in the ball.

    ``boundary=True`` puts every dg on the sphere ||dg|| = eps_k (worst-case stress tests).
    """
    if not 0.0 <= normalized_error < 1.0:
        raise ValueError("normalized_error must lie in [0, 1)")
    streams = _receiver_streams(channels.rng_seed if seed is None else seed, channels.n_idle, 1)
    eps = np.sqrt(normalized_error) * np.linalg.norm(channels.g_true, axis=1)
    g_hat = channels.g_true.copy()
    for k, rng in enumerate(streams):
        if eps[k] > 0:
            g_hat[k] = channels.g_true[k] - ball_samples(rng, channels.n_t, eps[k], 1, boundary)[0]
    return replace(channels, g_hat=g_hat, epsilon=eps)


def draw_eavesdropper_channels(n_t: int, count: int, seed: int | np.random.Generator,
                               j: int | None = None) -> np.ndarray:
    """Normalized passive-eavesdropper channels, CN(0, I/n_t) so E||l||^2 = 1.

    Returns shape (count, n_t), or (count, j, n_t) grouped per realization when j is given.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = (count, n_t) if j is None else (count, j, n_t)
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2 * n_t)
