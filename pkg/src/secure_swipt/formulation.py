"""Convex reformulation as block-structured SDP data.

Every constraint is an affine map from a flat real parameter vector to either a
Hermitian block that must be PSD or a scalar that must be non-negative. The
solver adapter lowers these blocks to a conic program; evaluators reuse the
same maps, so what gets solved is exactly what gets audited.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import hermitian as hm
from .channels import ChannelSet
from .system import SystemConfig, TransmitPolicy

VARIANTS = ("optimal", "suboptimal", "baseline1", "baseline2", "benchmark_kappa0")
BLOCK_TAGS = frozenset({"C1", "C2_k", "C3bar", "C4", "C5_k", "C5bar_k", "C6_n", "C7", "C8", "C10", "AUX"})
RHO_MARGIN = 1e-6


# ---------------------------------------------------------------------------
# affine expressions


def _broadcast(a: np.ndarray, m: int) -> np.ndarray:
    if a.shape[0] == m:
        return a
    if a.shape[0] == 0:
        return np.zeros((m,) + a.shape[1:], dtype=a.dtype)
    raise ValueError("affine expressions live on different variable layouts")


class AffineScalar:
    """Real scalar c + <coef, x>."""

    __slots__ = ("const", "coef")
    __array_ufunc__ = None  # make numpy defer to our reflected operators

    def __init__(self, const: float, coef: np.ndarray | None = None):
        self.const = float(const)
        self.coef = np.zeros(0) if coef is None else np.asarray(coef, dtype=float)

    @property
    def m(self) -> int:
        return self.coef.shape[0]

    def _lift(self, other) -> "AffineScalar":
        return other if isinstance(other, AffineScalar) else AffineScalar(float(other))

    def __add__(self, other):
        o = self._lift(other)
        m = max(self.m, o.m)
        return AffineScalar(self.const + o.const, _broadcast(self.coef, m) + _broadcast(o.coef, m))

    __radd__ = __add__

    def __neg__(self):
        return AffineScalar(-self.const, -self.coef)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, k: float):
        return AffineScalar(self.const * k, self.coef * k)

    __rmul__ = __mul__

    def times(self, mat) -> "AffineHermitian":
        mat = np.asarray(mat, dtype=complex)
        return AffineHermitian(self.const * mat, self.coef[:, None, None] * mat[None])

    def value(self, x) -> float:
        if self.m == 0:
            return self.const
        return float(self.const + self.coef @ np.asarray(x, dtype=float))

    @property
    def is_constant(self) -> bool:
        return not np.any(self.coef)


class AffineHermitian:
    """Hermitian matrix C + sum_i x_i A_i."""

    __slots__ = ("const", "coef")
    __array_ufunc__ = None

    def __init__(self, const, coef: np.ndarray | None = None):
        self.const = np.asarray(const, dtype=complex)
        d = self.const.shape[0]
        self.coef = np.zeros((0, d, d), dtype=complex) if coef is None else np.asarray(coef, dtype=complex)

    @classmethod
    def constant(cls, mat) -> "AffineHermitian":
        return cls(hm.symmetrize(mat))

    @property
    def m(self) -> int:
        return self.coef.shape[0]

    @property
    def dim(self) -> int:
        return self.const.shape[0]

    def _lift(self, other) -> "AffineHermitian":
        return other if isinstance(other, AffineHermitian) else AffineHermitian(np.asarray(other, dtype=complex))

    def __add__(self, other):
        o = self._lift(other)
        m = max(self.m, o.m)
        return AffineHermitian(self.const + o.const, _broadcast(self.coef, m) + _broadcast(o.coef, m))

    __radd__ = __add__

    def __neg__(self):
        return AffineHermitian(-self.const, -self.coef)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, k: float):
        return AffineHermitian(self.const * k, self.coef * k)

    __rmul__ = __mul__

    def congruence(self, u) -> "AffineHermitian":
        """U^H X U."""
        u = np.asarray(u, dtype=complex)
        uh = u.conj().T
        return AffineHermitian(uh @ self.const @ u, np.einsum("ai,mab,bj->mij", u.conj(), self.coef, u))

    def trace_with(self, mat) -> AffineScalar:
        """Re Tr(M X)."""
        mat = np.asarray(mat, dtype=complex)
        return AffineScalar(np.real(np.trace(mat @ self.const)),
                            np.real(np.einsum("ab,mba->m", mat, self.coef)))

    def trace(self) -> AffineScalar:
        return self.trace_with(np.eye(self.dim))

    def diag_entry(self, n: int) -> AffineScalar:
        return AffineScalar(self.const[n, n].real, self.coef[:, n, n].real)

    def value(self, x) -> np.ndarray:
        if self.m == 0:
            return self.const.copy()
        return self.const + np.tensordot(np.asarray(x, dtype=float), self.coef, axes=1)

    @property
    def is_constant(self) -> bool:
        return not np.any(self.coef)


def hermitian_basis(n: int) -> np.ndarray:
    """n^2 real-parameter basis: diagonal, then Re/Im pairs of the strict upper triangle."""
    basis = []
    for i in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[i, i] = 1.0
        basis.append(e)
    for i in range(n):
        for j in range(i + 1, n):
            re = np.zeros((n, n), dtype=complex)
            re[i, j] = re[j, i] = 1.0
            im = np.zeros((n, n), dtype=complex)
            im[i, j], im[j, i] = 1j, -1j
            basis.extend([re, im])
    return np.array(basis)


@dataclass
class Layout:
    """Named slices of the flat real variable vector."""

    slices: dict[str, slice] = field(default_factory=dict)
    kinds: dict[str, tuple] = field(default_factory=dict)
    size: int = 0

    def hermitian(self, name: str, n: int) -> None:
        self._add(name, n * n, ("hermitian", n))

    def scalar(self, name: str) -> None:
        self._add(name, 1, ("scalar",))

    def _add(self, name, count, kind):
        if name in self.slices:
            raise ValueError(f"duplicate variable {name}")
        self.slices[name] = slice(self.size, self.size + count)
        self.kinds[name] = kind
        self.size += count

    def herm(self, name: str) -> AffineHermitian:
        kind, n = self.kinds[name]
        sl = self.slices[name]
        coef = np.zeros((self.size, n, n), dtype=complex)
        coef[sl] = hermitian_basis(n)
        return AffineHermitian(np.zeros((n, n), dtype=complex), coef)

    def var(self, name: str) -> AffineScalar:
        coef = np.zeros(self.size)
        coef[self.slices[name].start] = 1.0
        return AffineScalar(0.0, coef)

    def names(self) -> list[str]:
        return list(self.slices)


def hermitian_params(mat) -> np.ndarray:
    """Inverse of hermitian_basis: parameter vector reproducing a Hermitian matrix."""
    a = hm.symmetrize(mat)
    n = a.shape[0]
    out = [a[i, i].real for i in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            out.extend([a[i, j].real, a[i, j].imag])
    return np.array(out)


# ---------------------------------------------------------------------------
# constraint blocks


@dataclass
class Constraint:
    tag: str
    index: object
    kind: str  # "psd" | "nonneg"
    expr: AffineHermitian | AffineScalar
    real: bool = False  # PSD block known to be real symmetric

    def __post_init__(self):
        if self.tag not in BLOCK_TAGS:
            raise ValueError(f"unknown constraint tag {self.tag}")
        if self.kind not in ("psd", "nonneg"):
            raise ValueError(f"unknown constraint kind {self.kind}")

    @property
    def label(self) -> str:
        return self.tag if self.index is None else f"{self.tag}[{self.index}]"

    def value(self, x):
        return self.expr.value(x)

    def margin(self, x) -> float:
        v = self.value(x)
        return float(v) if self.kind == "nonneg" else hm.lambda_min(v)


def _herm(x, m_hint: int = 0) -> AffineHermitian:
    return x if isinstance(x, AffineHermitian) else AffineHermitian.constant(x)


def _scal(x) -> AffineScalar:
    return x if isinstance(x, AffineScalar) else AffineScalar(float(x))


def u_matrix(g_hat) -> np.ndarray:
    """[I  g_hat]: n_t x (n_t + 1)."""
    g_hat = np.asarray(g_hat, dtype=complex).reshape(-1)
    return np.hstack([np.eye(g_hat.size), g_hat[:, None]])


def _corner(n: int, diag_top: float, corner: float) -> np.ndarray:
    d = np.full(n + 1, diag_top, dtype=complex)
    d[-1] = corner
    return np.diag(d)


def build_c2_lmi(g_hat, epsilon: float, gamma_tol_k: float, config: SystemConfig,
                 w, v, delta, index=None) -> Constraint:
    """Robust idle-receiver SINR cap as an (n_t+1)-dim LMI in (W, V, delta_k)."""
    if gamma_tol_k <= 0:
        raise ValueError("gamma_tol_k must be positive")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    n = len(g_hat)
    u = u_matrix(g_hat)
    noise = config.sigma_ant_sq_w + config.sigma_s_sq_w
    block = (_herm(v) - _herm(w) * (1.0 / gamma_tol_k)).congruence(u)
    block = block + _scal(delta).times(_corner(n, 1.0, -epsilon**2)) + _corner(n, 0.0, noise)
    return Constraint("C2_k", index, "psd", block)


def build_c5_lmi(g_hat, epsilon: float, p_min_idle: float, config: SystemConfig,
                 w, v, w_e, nu, index=None, include_w: bool = True) -> Constraint:
    """Robust idle-receiver harvesting floor as an LMI in (W, V, W_E, nu_k).

    ``include_w=False`` gives the W-free surrogate used by the suboptimal scheme.
    """
    if epsilon < 0 or p_min_idle < 0:
        raise ValueError("epsilon and p_min_idle must be non-negative")
    n = len(g_hat)
    u = u_matrix(g_hat)
    total = _herm(v) + _herm(w_e)
    if include_w:
        total = total + _herm(w)
    corner = config.sigma_ant_sq_w - p_min_idle / config.eta
    block = total.congruence(u) + _scal(nu).times(_corner(n, 1.0, -epsilon**2)) + _corner(n, 0.0, corner)
    return Constraint("C5_k" if include_w else "C5bar_k", index, "psd", block)


def build_c5bar_lmi(g_hat, epsilon: float, p_min_idle: float, config: SystemConfig,
                    v, w_e, nu, index=None) -> Constraint:
    return build_c5_lmi(g_hat, epsilon, p_min_idle, config, None, v, w_e, nu, index, include_w=False)


def nominal_idle_constraints(g_hat, gamma_tol_k: float, p_min_idle: float, config: SystemConfig,
                             w, v, w_e, index=None, include_w: bool = True) -> tuple[Constraint, Constraint]:
    """Scalar C2/C5 for perfectly known idle channels (epsilon = 0).

    The LMIs only reach these in the limit delta, nu -> infinity, which leaves
    the multipliers unbounded and wrecks solver conditioning.
    """
    gmat = hm.outer(g_hat)
    noise = config.sigma_ant_sq_w + config.sigma_s_sq_w
    c2 = (_herm(v) - _herm(w) * (1.0 / gamma_tol_k)).trace_with(gmat) + noise
    total = _herm(v) + _herm(w_e)
    if include_w:
        total = total + _herm(w)
    c5 = total.trace_with(gmat) + (config.sigma_ant_sq_w - p_min_idle / config.eta)
    return (Constraint("C2_k", index, "nonneg", c2),
            Constraint("C5_k" if include_w else "C5bar_k", index, "nonneg", c5))


@dataclass(frozen=True)
class ChanceBound:
    quantile_coeff: float
    rhs_scale: float
    n_t: int
    kappa: float
    j: int

    @property
    def dropped(self) -> bool:
        return self.kappa == 0.0


def chance_quantile(n_t: int, kappa: float, j: int, gamma_tol: float = 1.0,
                    sigma_tilde_sq: float = 1.0) -> ChanceBound:
    """Coefficient c with Pr(1/Tr(L) >= c) = 1 - kappa^(1/J), Tr(L) ~ Gamma(n_t, 1/n_t).

    Equivalently c = 1 / F^{-1}(kappa^(1/J)). kappa = 0 drops the constraint.
    """
    if not 0.0 <= kappa < 1.0:
        raise ValueError("kappa must lie in [0, 1)")
    if j < 1 or n_t < 1:
        raise ValueError("need j >= 1 and n_t >= 1")
    if kappa == 0.0:
        return ChanceBound(math.inf, math.inf, n_t, kappa, j)
    tail = -math.expm1(math.log(kappa) / j)  # 1 - kappa^(1/J) without cancellation
    q = stats.gamma.isf(tail, a=n_t, scale=1.0 / n_t)
    coeff = 1.0 / q
    return ChanceBound(coeff, coeff * gamma_tol * sigma_tilde_sq, n_t, kappa, j)


def build_c3bar(bound: ChanceBound, gamma_tol: float, w, v, w_e) -> Constraint:
    """rhs * I - W + gamma_tol * (W_E + V) >= 0, i.e. lambda_max(W - gamma_tol(W_E + V)) <= rhs."""
    if bound.dropped:
        raise ValueError("kappa = 0: the chance constraint is dropped, not built")
    w = _herm(w)
    n = w.dim
    block = bound.rhs_scale * np.eye(n) - w + (_herm(w_e) + _herm(v)) * gamma_tol
    return Constraint("C3bar", None, "psd", block)


def build_rho_blocks(gamma_req: float, sigma_s_sq: float, p_min: float, eta: float,
                     rho, s, t) -> tuple[Constraint, Constraint]:
    """Schur forms of s * rho >= gamma_req * sigma_s^2 and t * (1 - rho) >= p_min / eta."""
    if gamma_req <= 0:
        raise ValueError("gamma_req must be positive")
    rho, s, t = _scal(rho), _scal(s), _scal(t)
    e11 = np.diag([1.0, 0.0]).astype(complex)
    e22 = np.diag([0.0, 1.0]).astype(complex)
    off = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    a = math.sqrt(gamma_req * sigma_s_sq)
    b = math.sqrt(p_min / eta)
    sinr_block = s.times(e11) + rho.times(e22) + a * off
    harvest_block = t.times(e11) + (1.0 - rho).times(e22) + b * off
    return (Constraint("AUX", "rho_sinr", "psd", sinr_block, real=True),
            Constraint("AUX", "rho_harvest", "psd", harvest_block, real=True))


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class SdpProblem:
    variant: str
    layout: Layout
    objective: AffineScalar
    constraints: list[Constraint]
    exprs: dict
    channels: ChannelSet
    config: SystemConfig
    chance: ChanceBound | None

    def by_tag(self, tag: str) -> list[Constraint]:
        return [c for c in self.constraints if c.tag == tag]

    def find(self, tag: str, index=None) -> Constraint | None:
        for c in self.constraints:
            if c.tag == tag and c.index == index:
                return c
        return None

    def policy_at(self, x) -> TransmitPolicy:
        e = self.exprs
        return TransmitPolicy(
            w_cov=e["W"].value(x), an_cov=e["V"].value(x), es_cov=e["WE"].value(x),
            rho=e["rho"].value(x),
            delta=np.array([d.value(x) for d in e["delta"]]),
            nu=np.array([d.value(x) for d in e["nu"]]),
        )

    def aux_at(self, x) -> dict[str, float]:
        return {"s": self.exprs["s"].value(x), "t": self.exprs["t"].value(x)}

    def has_matrix_w(self) -> bool:
        return "W" in self.layout.kinds

    def debug_dump(self) -> str:
        lines = [f"variant {self.variant}", f"variables ({self.layout.size} real parameters):"]
        for name, kind in self.layout.kinds.items():
            sl = self.layout.slices[name]
            desc = f"hermitian {kind[1]}x{kind[1]}" if kind[0] == "hermitian" else "scalar"
            lines.append(f"  {name}: {desc} [{sl.start}:{sl.stop}]")
        lines.append(f"constraints ({len(self.constraints)}):")
        for c in self.constraints:
            dim = c.expr.dim if c.kind == "psd" else 1
            lines.append(f"  {c.label}: {c.kind} dim={dim}{' real' if c.real else ''}")
        return "\n".join(lines)


def _variant_layout(variant: str, n: int, robust_idle: Sequence[int], fixed_rho: bool,
                    harvest: bool) -> Layout:
    lay = Layout()
    if variant == "baseline2":
        lay.scalar("p_w")
    else:
        lay.hermitian("W", n)
    lay.hermitian("V", n)
    if variant in ("baseline1", "baseline2"):
        lay.scalar("p_E")
    else:
        lay.hermitian("WE", n)
    if not fixed_rho:
        lay.scalar("rho")
    lay.scalar("s")
    if harvest:
        lay.scalar("t")
    for k in robust_idle:
        lay.scalar(f"delta_{k + 1}")
        lay.scalar(f"nu_{k + 1}")
    return lay


def variant_expressions(variant: str, channels: ChannelSet, config: SystemConfig,
                        fixed_rho: float | None = None) -> tuple[Layout, dict]:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    n = config.n_t
    robust = [k for k in range(config.n_idle) if channels.epsilon[k] > 0]
    harvest = config.p_min_desired_w > 0
    lay = _variant_layout(variant, n, robust, fixed_rho is not None, harvest)
    ex: dict = {}
    psd_vars, nonneg_vars = [], []
    if variant == "baseline2":
        h = channels.h
        ex["W"] = lay.var("p_w").times(hm.outer(h) / np.real(np.vdot(h, h)))
        nonneg_vars.append(("p_w", lay.var("p_w")))
    else:
        ex["W"] = lay.herm("W")
        psd_vars.append(("W", ex["W"]))
    ex["V"] = lay.herm("V")
    psd_vars.append(("V", ex["V"]))
    if variant in ("baseline1", "baseline2"):
        ex["WE"] = lay.var("p_E").times(np.eye(n) / n)
        nonneg_vars.append(("p_E", lay.var("p_E")))
    else:
        ex["WE"] = lay.herm("WE")
        psd_vars.append(("WE", ex["WE"]))
    ex["rho"] = AffineScalar(fixed_rho) if fixed_rho is not None else lay.var("rho")
    # without a harvest floor the t-block is [[t, 0], [0, 1 - rho]]: a duplicate of rho <= 1
    # that is identically zero at rho = 1 and spoils strict complementarity, so t is pinned to 0
    ex["s"] = lay.var("s")
    ex["t"] = lay.var("t") if harvest else AffineScalar(0.0)
    # S-procedure multipliers exist only for idle receivers with uncertain channels
    ex["delta"] = [lay.var(f"delta_{k + 1}") if k in robust else AffineScalar(0.0) for k in range(config.n_idle)]
    ex["nu"] = [lay.var(f"nu_{k + 1}") if k in robust else AffineScalar(0.0) for k in range(config.n_idle)]
    ex["psd_vars"], ex["nonneg_vars"] = psd_vars, nonneg_vars
    return lay, ex


def build_constraints(ex: dict, channels: ChannelSet, config: SystemConfig, *,
                      use_c5bar: bool, chance: ChanceBound | None) -> list[Constraint]:
    """All constraints of the relaxed problem for the given variable expressions."""
    w, v, we = ex["W"], ex["V"], ex["WE"]
    rho, s, t = ex["rho"], ex["s"], ex["t"]
    hmat = hm.outer(channels.h)
    cons: list[Constraint] = []

    # C1: Tr(HW) >= gamma_req (sigma_ant^2 + Tr(HV)) + s,  s * rho >= gamma_req sigma_s^2
    c1 = w.trace_with(hmat) - config.gamma_req * v.trace_with(hmat) - s - config.gamma_req * config.sigma_ant_sq_w
    cons.append(Constraint("C1", None, "nonneg", c1))
    nominal = {}
    for k in range(config.n_idle):
        if channels.epsilon[k] > 0:
            cons.append(build_c2_lmi(channels.g_hat[k], float(channels.epsilon[k]), config.gamma_tol_k[k],
                                     config, w, v, ex["delta"][k], index=k + 1))
        else:
            nominal[k] = nominal_idle_constraints(channels.g_hat[k], config.gamma_tol_k[k],
                                                  config.p_min_idle_w[k], config, w, v, we, index=k + 1,
                                                  include_w=not use_c5bar)
            cons.append(nominal[k][0])
    if chance is not None and not chance.dropped:
        cons.append(build_c3bar(chance, config.gamma_tol, w, v, we))
    # C4: Tr(H(W + V + W_E)) + sigma_ant^2 >= t,  t * (1 - rho) >= p_min / eta
    c4 = (w + v + we).trace_with(hmat) + config.sigma_ant_sq_w - t
    cons.append(Constraint("C4", None, "nonneg", c4))
    sinr_blk, harv_blk = build_rho_blocks(config.gamma_req, config.sigma_s_sq_w, config.p_min_desired_w,
                                          config.eta, rho, s, t)
    cons.append(sinr_blk)
    if config.p_min_desired_w > 0:
        cons.append(harv_blk)
    for k in range(config.n_idle):
        if k in nominal:
            cons.append(nominal[k][1])
            continue
        args = (channels.g_hat[k], float(channels.epsilon[k]), config.p_min_idle_w[k], config)
        if use_c5bar:
            cons.append(build_c5bar_lmi(*args, v, we, ex["nu"][k], index=k + 1))
        else:
            cons.append(build_c5_lmi(*args, w, v, we, ex["nu"][k], index=k + 1))
    total = w + v + we
    for n in range(config.n_t):
        cons.append(Constraint("C6_n", n + 1, "nonneg", config.p_max_antenna_w[n] - total.diag_entry(n)))
    if not rho.is_constant:
        hi = 1.0 - RHO_MARGIN if config.p_min_desired_w > 0 else 1.0
        cons.append(Constraint("C7", "lower", "nonneg", rho - RHO_MARGIN))
        cons.append(Constraint("C7", "upper", "nonneg", hi - rho))
    for name, e in ex["psd_vars"]:
        cons.append(Constraint("C8", name, "psd", e))
    for name, e in ex["nonneg_vars"]:
        cons.append(Constraint("C8", name, "nonneg", e))
    for k in range(config.n_idle):
        for name, e in (("delta", ex["delta"][k]), ("nu", ex["nu"][k])):
            if not e.is_constant:
                cons.append(Constraint("C10", f"{name}_{k + 1}", "nonneg", e))
    return cons


def assemble(variant: str, channels: ChannelSet, config: SystemConfig,
             fixed_rho: float | None = None) -> SdpProblem:
    """Relaxed problem for one scheme (rank constraint dropped).

    optimal / benchmark_kappa0 / suboptimal share the variable set; the
    baselines replace W_E by an isotropic p_E I / n_t and (baseline 2) W by
    an MRT direction with free power.
    """
    if channels.n_t != config.n_t or channels.n_idle != config.n_idle:
        raise ValueError("channel set and config dimensions disagree")
    lay, ex = variant_expressions(variant, channels, config, fixed_rho)
    chance = None
    if variant != "benchmark_kappa0" and config.kappa > 0 and config.j_eaves > 0:
        chance = chance_quantile(config.n_t, config.kappa, config.j_eaves, config.gamma_tol,
                                 channels.sigma_tilde_sq)
    cons = build_constraints(ex, channels, config, use_c5bar=(variant == "suboptimal"), chance=chance)
    objective = ex["W"].trace() + ex["V"].trace() + ex["WE"].trace()
    return SdpProblem(variant, lay, objective, cons, ex, channels, config, chance)


def point_from_policy(problem: SdpProblem, policy: TransmitPolicy, s: float | None = None,
                      t: float | None = None) -> np.ndarray:
    """Parameter vector of a policy for a problem with matrix-valued W, V, W_E."""
    lay = problem.layout
    x = np.zeros(lay.size)
    cfg = problem.config
    for name, mat in (("W", policy.w_cov), ("V", policy.an_cov), ("WE", policy.es_cov)):
        if name in lay.slices:
            x[lay.slices[name]] = hermitian_params(mat)
    if "rho" in lay.slices:
        x[lay.slices["rho"]] = policy.rho
    rho = policy.rho
    x[lay.slices["s"]] = cfg.gamma_req * cfg.sigma_s_sq_w / rho if s is None else s
    if t is None:
        t = cfg.p_min_desired_w / (cfg.eta * (1 - rho)) if cfg.p_min_desired_w > 0 else 0.0
    if "t" in lay.slices:
        x[lay.slices["t"]] = t
    for k in range(cfg.n_idle):
        for name, vals in (("delta", policy.delta), ("nu", policy.nu)):
            if f"{name}_{k + 1}" in lay.slices:
                x[lay.slices[f"{name}_{k + 1}"]] = vals[k] if vals.size else 0.0
    return x


def constraint_margins(problem: SdpProblem, x) -> dict[str, float]:
    return {c.label: c.margin(x) for c in problem.constraints}


def iter_psd(constraints: Iterable[Constraint]) -> Iterable[Constraint]:
    return (c for c in constraints if c.kind == "psd")


def tags_of(constraints: Sequence[Constraint]) -> list[str]:
    return [c.label for c in constraints]
