"""Shared fixtures: scenario defaults and a lazily grown pool of solved instances."""
from __future__ import annotations

import numpy as np
import pytest

from secure_swipt.channels import FadingSpec
from secure_swipt.experiments import SolvedInstance, solved_instances
from secure_swipt.system import SystemConfig

FADING = FadingSpec()
_POOLS: dict = {}
ACCEPTANCE_LINES: list[str] = []


def default_config(n_t: int = 6, sigma_est_sq: float = 0.0, k_total: int = 4, **kw) -> SystemConfig:
    """Desk-scale scenario: 30 dBm per antenna, 0 dBm harvest targets, 10 dB SINR target."""
    kw.setdefault("gamma_req", 10.0)
    return SystemConfig.uniform(n_t, k_total, sigma_est_sq=sigma_est_sq, **kw)


def solved_pool(n_t: int, sigma_est_sq: float, count: int, gamma_req: float = 10.0) -> list[SolvedInstance]:
    """First ``count`` solvable draws of the scenario; later calls reuse and extend earlier searches."""
    key = (n_t, sigma_est_sq, gamma_req)
    have = _POOLS.get(key, [])
    if len(have) < count:
        cfg = default_config(n_t, sigma_est_sq, gamma_req=gamma_req)
        start = have[-1].seed + 1 if have else 0
        have = have + solved_instances(cfg, FADING, count - len(have), start=start)
        _POOLS[key] = have
    return have[:count]


@pytest.fixture(scope="session")
def pool():
    return solved_pool


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n: int) -> np.ndarray:
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2


def random_psd(rng, n: int, rank: int | None = None) -> np.ndarray:
    a = rng.standard_normal((n, rank or n)) + 1j * rng.standard_normal((n, rank or n))
    return a @ a.conj().T


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
