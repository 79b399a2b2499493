"""dB/dBm <-> linear conversions; the only place the package leaves linear units."""
from __future__ import annotations

import math

import numpy as np


def _finite(x: float, name: str) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"{name} must be finite, got {x}")
    return x


def dbm_to_watts(x_dbm: float) -> float:
    return 10 ** ((_finite(x_dbm, "dBm value") - 30.0) / 10.0)


def watts_to_dbm(x_w: float) -> float:
    """Watts to dBm; non-positive power maps to -inf (reporting only)."""
    x_w = float(x_w)
    if not x_w > 0:
        return -math.inf if x_w == 0 else math.nan
    return 10.0 * math.log10(x_w) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10 ** (_finite(x_db, "dB value") / 10.0)


def linear_to_db(x: float) -> float:
    x = float(x)
    if not x > 0:
        raise ValueError("ratio must be positive")
    return 10.0 * math.log10(x)


def mean_dbm(values_w) -> float:
    """Arithmetic mean in Watts, then expressed in dBm; nan for an empty sample."""
    v = np.asarray(list(values_w), dtype=float)
    return watts_to_dbm(float(v.mean())) if v.size else math.nan
