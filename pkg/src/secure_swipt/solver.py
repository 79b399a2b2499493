"""Primal-dual conic solve of an SdpProblem with Clarabel, plus independent KKT checks.

Complex Hermitian blocks go through the real embedding [[Re, -Im], [Im, Re]].
Because the data spans roughly fifteen orders of magnitude (antenna noise near
1e-14 W against per-antenna budgets near 1 W), the conic data is equilibrated
before the solve: each PSD block by a diagonal congruence, each scalar row by a
positive factor, each variable by a column factor. All of these are undone
exactly when primal and dual values are mapped back.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field, replace

import clarabel
import numpy as np
import scipy.sparse as sp

from . import hermitian as hm
from .formulation import AffineHermitian, Constraint, SdpProblem, u_matrix
from .system import TransmitPolicy

DEFAULT_TOL = 1e-8
STATUSES = ("optimal", "infeasible", "numerical_failure")


@dataclass(frozen=True)
class SolverSettings:
    tol: float = DEFAULT_TOL
    max_iter: int = 400
    equilibrate_passes: int = 25
    rescale_passes: int = 1
    polish: bool = True
    polish_steps: int = 4
    # every returned optimum must pass the independent residual check at this level
    accept_residual: float = 1e-6
    clarabel_options: tuple = ()  # extra (name, value) pairs passed straight to Clarabel


@dataclass
class DualCertificate:
    y_mat: np.ndarray | None
    d_c2: list
    d_c3bar: np.ndarray
    d_c5: list
    mu: float
    beta: float
    theta: np.ndarray
    blocks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def cm(m):
            return None if m is None else {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}
        return {
            "y_mat": cm(self.y_mat), "d_c2": [cm(d) for d in self.d_c2], "d_c3bar": cm(self.d_c3bar),
            "d_c5": [cm(d) for d in self.d_c5], "mu": self.mu, "beta": self.beta,
            "theta": np.asarray(self.theta).tolist(),
        }


@dataclass
class SolveReport:
    status: str
    objective_w: float
    policy: TransmitPolicy | None
    duals: DualCertificate | None
    kkt_residuals: dict
    w_rank: int
    iterations: int
    wall_time_s: float
    variant: str = ""
    solver_status: str = ""
    x: np.ndarray | None = None
    aux: dict = field(default_factory=dict)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        return {
            "status": self.status, "variant": self.variant, "objective_w": self.objective_w,
            "objective_dbm": 10 * math.log10(self.objective_w * 1e3) if self.objective_w > 0 else None,
            "policy": None if self.policy is None else self.policy.to_dict(),
            "duals": None if self.duals is None else self.duals.to_dict(),
            "kkt_residuals": self.kkt_residuals, "w_rank": self.w_rank, "iterations": self.iterations,
            "wall_time_s": self.wall_time_s, "solver_status": self.solver_status, "message": self.message,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


# ---------------------------------------------------------------------------
# lowering


def _triu_colmajor(n: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = [], []
    for j in range(n):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    return np.array(rows), np.array(cols)


def _embed_stack(mats: np.ndarray, real: bool) -> np.ndarray:
    """(m, d, d) complex -> (m, D, D) real with D = d or 2d."""
    if real:
        return mats.real.copy()
    re, im = mats.real, mats.imag
    top = np.concatenate([re, -im], axis=2)
    bot = np.concatenate([im, re], axis=2)
    return np.concatenate([top, bot], axis=1)


@dataclass
class _Block:
    con: Constraint
    const: np.ndarray  # (D, D) real, or scalar for nonneg rows
    coef: np.ndarray  # (m, D, D) or (m,)
    scale: np.ndarray | float  # congruence diagonal (D,) or row factor


class _Lowered:
    """Real conic data in equilibrated coordinates."""

    def __init__(self, problem: SdpProblem, passes: int, var_scale: np.ndarray | None = None):
        m = problem.layout.size
        self.m = m
        self.q = problem.objective.coef.copy()
        if self.q.shape[0] == 0:
            self.q = np.zeros(m)
        self.blocks: list[_Block] = []
        for con in problem.constraints:
            if con.kind == "psd":
                coef = np.asarray(con.expr.coef) if con.expr.m else np.zeros((m,) + con.expr.const.shape, complex)
                const = _embed_stack(con.expr.const[None], con.real)[0]
                coef = _embed_stack(coef, con.real)
                self.blocks.append(_Block(con, const, coef, np.ones(const.shape[0])))
            else:
                coef = con.expr.coef if con.expr.m else np.zeros(m)
                self.blocks.append(_Block(con, con.expr.const, coef.copy(), 1.0))
        self.fixed_cols = var_scale is not None
        self.col = np.ones(m) if var_scale is None else np.asarray(var_scale, dtype=float).copy()
        self.omega = 1.0
        self._equilibrate(passes)

    def _equilibrate(self, passes: int) -> None:
        for _ in range(passes):
            col_max = np.zeros(self.m)
            for blk in self.blocks:
                if blk.con.kind == "psd":
                    t = blk.scale
                    d = t.shape[0] // (1 if blk.con.real else 2)
                    scaled = np.abs(blk.coef) * self.col[:, None, None] * np.outer(t, t)[None]
                    row = scaled.max(axis=(0, 2))
                    if not blk.con.real:  # keep the embedding structure: same factor on both halves
                        row = np.maximum(row[:d], row[d:])
                        row = np.concatenate([row, row])
                    row = np.where(row > 0, row, 1.0)
                    blk.scale = t / np.sqrt(row)
                    col_max = np.maximum(col_max, scaled.max(axis=(1, 2)))
                else:
                    scaled = np.abs(blk.coef) * self.col * blk.scale
                    row = scaled.max() if scaled.size else 0.0
                    if row > 0:
                        blk.scale = blk.scale / math.sqrt(row)
                    col_max = np.maximum(col_max, scaled)
            if not self.fixed_cols:
                col_max = np.where(col_max > 0, col_max, 1.0)
                self.col = self.col / np.sqrt(col_max)
        qs = np.abs(self.q * self.col)
        self.omega = 1.0 / qs.max() if qs.max() > 0 else 1.0

    def conic_data(self):
        a_rows, b_rows, cones = [], [], []
        nonneg_a, nonneg_b = [], []
        for blk in self.blocks:
            if blk.con.kind == "nonneg":
                nonneg_a.append(-blk.coef * self.col * blk.scale)
                nonneg_b.append(blk.const * blk.scale)
        if nonneg_a:
            a_rows.append(np.array(nonneg_a))
            b_rows.append(np.array(nonneg_b))
            cones.append(clarabel.NonnegativeConeT(len(nonneg_a)))
        for blk in self.blocks:
            if blk.con.kind != "psd":
                continue
            t = blk.scale
            n = t.shape[0]
            ii, jj = _triu_colmajor(n)
            w = np.where(ii == jj, 1.0, math.sqrt(2.0)) * t[ii] * t[jj]
            const = blk.const[ii, jj] * w
            coef = blk.coef[:, ii, jj] * w[None] * self.col[:, None]
            a_rows.append(-coef.T)
            b_rows.append(const)
            cones.append(clarabel.PSDTriangleConeT(n))
        a = sp.csc_matrix(np.vstack(a_rows))
        b = np.concatenate(b_rows)
        q = self.q * self.col * self.omega
        return q, a, b, cones

    def unpack_duals(self, z: np.ndarray) -> dict[str, object]:
        """Map the equilibrated dual vector back to per-constraint multipliers of the complex problem."""
        out = {}
        pos = 0
        for blk in self.blocks:
            if blk.con.kind == "nonneg":
                out[blk.con.label] = float(z[pos] * blk.scale / self.omega)
                pos += 1
        for blk in self.blocks:
            if blk.con.kind != "psd":
                continue
            t = blk.scale
            n = t.shape[0]
            ii, jj = _triu_colmajor(n)
            size = ii.size
            zs = z[pos:pos + size]
            pos += size
            mat = np.zeros((n, n))
            vals = zs / np.where(ii == jj, 1.0, math.sqrt(2.0))
            mat[ii, jj] = vals
            mat[jj, ii] = vals
            mat = t[:, None] * mat * t[None, :] / self.omega
            out[blk.con.label] = mat.astype(complex) if blk.con.real else hm.lift_embedded_dual(mat)
        return out


# ---------------------------------------------------------------------------
# residuals


def _psd_scale(expr: AffineHermitian, x) -> float:
    """Magnitude reference for a block: the largest of its constant and variable parts."""
    val = np.abs(expr.value(x)).max()
    return max(val, np.abs(expr.const).max(), 1e-300)


def generic_residuals(problem: SdpProblem, x: np.ndarray, duals: dict) -> dict[str, float]:
    """Primal/dual feasibility, stationarity and gap of the conic problem in original units.

    Gradient-type quantities are weighed per variable by that variable's size at
    the solution, which puts every entry in Watts; they are then divided by the
    objective value.
    """
    xs = solution_scale(problem, x)
    obj = problem.objective.value(x)
    ref = max(abs(obj), 1e-300)
    primal = 0.0
    grad = problem.objective.coef.copy() if problem.objective.m else np.zeros(problem.layout.size)
    neg = np.zeros_like(grad)
    gap = 0.0
    for con in problem.constraints:
        d = duals[con.label]
        val = con.expr.value(x)
        if con.kind == "psd":
            primal = max(primal, -hm.lambda_min(val) / _psd_scale(con.expr, x))
            contrib = np.real(np.einsum("ab,mba->m", d, con.expr.coef)) if con.expr.m else 0.0
            lam, vec = np.linalg.eigh(hm.symmetrize(d))
            dneg = (vec * np.minimum(lam, 0.0)) @ vec.conj().T
            negc = np.real(np.einsum("ab,mba->m", dneg, con.expr.coef)) if con.expr.m else 0.0
            gap += float(np.real(np.trace(d @ val)))
        else:
            scale = max(abs(con.expr.const), float(np.abs(con.expr.coef * x).max()) if con.expr.m else 0.0, 1e-300)
            primal = max(primal, -val / scale)
            contrib = d * con.expr.coef if con.expr.m else 0.0
            negc = min(d, 0.0) * con.expr.coef if con.expr.m else 0.0
            gap += d * val
        grad = grad - contrib
        neg = neg + np.abs(negc)
    return {"primal_infeasibility": float(max(primal, 0.0)),
            "dual_infeasibility": float(np.max(neg * xs) / ref),
            "stationarity": float(np.max(np.abs(grad) * xs) / ref),
            "gap_rel": float(abs(gap) / ref)}


def farkas_residual(problem: SdpProblem, duals: dict, var_scale: np.ndarray) -> float:
    """How far multipliers are from proving infeasibility (0 = exact certificate, inf = not one).

    A valid certificate has PSD multipliers whose combination cancels every
    variable while leaving a strictly negative constant part.
    """
    comb = np.zeros(problem.layout.size)
    absn = np.zeros(problem.layout.size)
    const = 0.0
    const_abs = 0.0
    neg = 0.0
    for con in problem.constraints:
        d = duals[con.label]
        if con.kind == "psd":
            c = np.real(np.einsum("ab,mba->m", d, con.expr.coef)) if con.expr.m else 0.0
            k0 = float(np.real(np.trace(d @ con.expr.const)))
            neg = max(neg, -hm.lambda_min(d) / max(np.abs(d).max(), 1e-300))
            const_abs += float(np.abs(d).sum() * np.abs(con.expr.const).max())
        else:
            c = d * con.expr.coef if con.expr.m else 0.0
            k0 = d * con.expr.const
            neg = max(neg, -d / max(abs(d), 1e-300))
            const_abs += abs(k0)
        comb = comb + c
        absn = absn + np.abs(c)
        const += k0
    if not const < 0:
        return math.inf
    cancel = float(np.max(np.abs(comb) * var_scale)) / abs(const)
    return max(cancel, neg)


RHO_IDENTITY_FLOOR = 1e-6


def _rho_target(beta: float, mu: float, config) -> float:
    a = math.sqrt(max(beta, 0.0) * config.sigma_s_sq_w * config.gamma_req)
    b = math.sqrt(max(mu, 0.0) * config.p_min_desired_w / config.eta)
    return a / (a + b) if a + b > 0 else float("nan")


def b_star(duals: DualCertificate, problem: SdpProblem) -> np.ndarray:
    """I + D_C3bar + sum theta_n Psi_n + sum U (D_C2/Gamma_k - D_C5) U^H."""
    cfg, ch = problem.config, problem.channels
    out = np.eye(cfg.n_t, dtype=complex) + duals.d_c3bar + np.diag(duals.theta).astype(complex)
    for k in range(cfg.n_idle):
        u = u_matrix(ch.g_hat[k])
        out = out + u @ (duals.d_c2[k] / cfg.gamma_tol_k[k] - duals.d_c5[k]) @ u.conj().T
    return hm.symmetrize(out)


def verify_kkt(problem: SdpProblem, report: SolveReport) -> dict[str, float]:
    """Independent KKT residuals in the beamforming variables.

    stationarity_w   ||B* - Y - (mu + beta) H|| / ||B*||
    slackness_yw     ||Y W|| / ||W||
    rho_identity     |rho - sqrt(beta s2 G) / (sqrt(beta s2 G) + sqrt(mu P / eta))| / rho

    rho_identity is nan when (mu + beta) ||h||^2 <= 1e-6 ||B*||: with both desired-receiver
    multipliers negligible the identity is 0/0 and rho* is not unique.
    """
    if report.duals is None or report.policy is None:
        raise ValueError("report carries no duals")
    d = report.duals
    cfg = problem.config
    res = dict(generic_residuals(problem, report.x, d.blocks))
    if d.y_mat is not None:
        bs = b_star(d, problem)
        hmat = hm.outer(problem.channels.h)
        nb = np.linalg.norm(bs, 2)
        res["stationarity_w"] = float(np.linalg.norm(bs - d.y_mat - (d.mu + d.beta) * hmat, 2) / nb)
        w = report.policy.w_cov
        res["slackness_yw"] = float(np.linalg.norm(d.y_mat @ w, 2) / max(np.linalg.norm(w, 2), 1e-300))
    if "rho" in problem.layout.slices:
        target = _rho_target(d.beta, d.mu, cfg)
        bs_norm = np.linalg.norm(b_star(d, problem), 2) if d.y_mat is not None else 1.0
        h_sq = float(np.real(np.vdot(problem.channels.h, problem.channels.h)))
        if (max(d.mu, 0.0) + max(d.beta, 0.0)) * h_sq <= RHO_IDENTITY_FLOOR * bs_norm:
            target = float("nan")
        rho = report.policy.rho
        res["rho_identity"] = abs(rho - target) / rho
    return res


# ---------------------------------------------------------------------------
# solve


def _certificate(problem: SdpProblem, blocks: dict) -> DualCertificate:
    cfg = problem.config
    n = cfg.n_t
    zero_k = np.zeros((n + 1, n + 1), dtype=complex)

    def get(label, default):
        val = blocks.get(label, default)
        if np.ndim(default) == 2 and np.ndim(val) == 0:
            # scalar idle constraint g^H X g: its multiplier acts as d * e e^H on the [I g] lifting
            mat = np.zeros_like(default)
            mat[-1, -1] = val
            return mat
        return val

    y = blocks.get("C8[W]")
    return DualCertificate(
        y_mat=y,
        d_c2=[get(f"C2_k[{k + 1}]", zero_k) for k in range(cfg.n_idle)],
        d_c3bar=get("C3bar", np.zeros((n, n), dtype=complex)),
        d_c5=[get(f"C5_k[{k + 1}]", zero_k) for k in range(cfg.n_idle)],
        mu=get("C4", 0.0), beta=get("C1", 0.0),
        theta=np.array([get(f"C6_n[{i + 1}]", 0.0) for i in range(n)]),
        blocks=blocks,
    )


def _w_rank(policy: TransmitPolicy) -> int:
    return hm.numeric_rank(policy.w_cov) if np.abs(policy.w_cov).max() > 0 else 0


def solution_scale(problem: SdpProblem, x: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """Per-variable magnitudes taken from a previous solution, one value per named variable."""
    lay = problem.layout
    mags = {}
    for name, sl in lay.slices.items():
        if lay.kinds[name][0] == "hermitian":
            n = lay.kinds[name][1]
            mags[name] = float(np.abs(x[sl][:n]).max())
        else:
            mags[name] = abs(float(x[sl][0]))
    top = max(mags.values()) if mags else 1.0
    out = np.ones(lay.size)
    for name, sl in lay.slices.items():
        out[sl] = max(mags[name], floor * top, 1e-300)
    return out


def solve(problem: SdpProblem, tol: float = DEFAULT_TOL, settings: SolverSettings | None = None) -> SolveReport:
    """Solve to primal-dual optimality; infeasibility and numerical trouble are reported, never repaired.

    A first pass with coefficient-based equilibration locates the solution; a
    second pass rescales every variable to unit size at that point and
    re-solves, which is what brings complementarity down to the 1e-7 level.
    """
    settings = settings or SolverSettings(tol=tol)
    t0 = time.perf_counter()
    first = _solve_once(problem, settings, None)
    for retry in _FALLBACKS:
        if first.status != "numerical_failure":
            break
        alt = replace(settings, **retry)
        again = _solve_once(problem, alt, None)
        again.iterations += first.iterations
        first = again
        settings = alt if again.status == "optimal" else settings
    if first.status != "optimal":
        first.wall_time_s = time.perf_counter() - t0
        return first
    best = first
    for _ in range(settings.rescale_passes):
        nxt = _solve_once(problem, settings, solution_scale(problem, best.x))
        if nxt.status != "optimal":
            break
        best = nxt
    best.iterations += first.iterations
    if settings.polish:
        best = _polished(problem, best, settings)
    best.wall_time_s = time.perf_counter() - t0
    core = ("primal_infeasibility", "dual_infeasibility", "stationarity", "gap_rel")
    worst = max(best.kkt_residuals[k] for k in core)
    if worst > settings.accept_residual:
        best.status = "numerical_failure"
        best.message = f"independent residual check failed (worst {worst:.1e})"
    return best


# tried in order when the default run neither solves nor proves infeasibility
_FALLBACKS = (
    {"clarabel_options": (("static_regularization_constant", 1e-7),)},
    {"equilibrate_passes": 0, "clarabel_options": (("static_regularization_constant", 1e-7),)},
    {"equilibrate_passes": 0, "clarabel_options": (("equilibrate_enable", False),)},
)


def _quality(res: dict) -> float:
    keys = ("primal_infeasibility", "dual_infeasibility", "stationarity", "gap_rel",
            "stationarity_w", "slackness_yw", "rho_identity")
    vals = [res.get(k, 0.0) for k in keys]
    return max(v for v in vals if not math.isnan(v))


def _polished(problem: SdpProblem, report: SolveReport, settings: SolverSettings) -> SolveReport:
    """Newton-refine the solution; keep the best iterate that does not break the acceptance check."""
    from .polish import newton_iterates

    core = ("primal_infeasibility", "dual_infeasibility", "stationarity", "gap_rel")
    cap = max(settings.accept_residual, max(report.kkt_residuals[k] for k in core))

    def build(x, blocks):
        return _build_report(problem, x, blocks, report.solver_status, report.iterations, 0.0)

    def merit(x, blocks):
        return _quality(build(x, blocks).kkt_residuals)

    best, best_q = report, _quality(report.kkt_residuals)
    # full steps converge fastest near a strictly complementary solution; damped steps
    # survive starts where full steps leave the cone
    for m in (None, merit):
        if m is not None and best_q <= settings.accept_residual:
            break
        for x, blocks in newton_iterates(problem, report.x, report.duals.blocks, settings.polish_steps, m):
            cand = build(x, blocks)
            q = _quality(cand.kkt_residuals)
            if q < best_q and max(cand.kkt_residuals[k] for k in core) <= cap:
                best, best_q = cand, q
    if best is not report:
        best.message = "newton-polished"
    return best


def _build_report(problem: SdpProblem, x, blocks, st: str, iterations: int, elapsed: float) -> SolveReport:
    duals = _certificate(problem, blocks)
    policy = problem.policy_at(x)
    policy = _with_beam(policy)
    report = SolveReport("optimal", problem.objective.value(x), policy, duals, {}, _w_rank(policy),
                         iterations, elapsed, problem.variant, st, x, problem.aux_at(x))
    report.kkt_residuals = verify_kkt(problem, report)
    return report


def _solve_once(problem: SdpProblem, settings: SolverSettings, var_scale) -> SolveReport:
    t0 = time.perf_counter()
    low = _Lowered(problem, settings.equilibrate_passes, var_scale)
    q, a, b, cones = low.conic_data()
    opts = clarabel.DefaultSettings()
    opts.verbose = False
    opts.max_iter = settings.max_iter
    opts.tol_gap_abs = opts.tol_gap_rel = opts.tol_feas = settings.tol
    opts.tol_ktratio = max(settings.tol, 1e-10)
    opts.chordal_decomposition_enable = False
    for name, value in settings.clarabel_options:
        setattr(opts, name, value)
    p = sp.csc_matrix((low.m, low.m))
    sol = clarabel.DefaultSolver(p, q, a, b, cones, opts).solve()
    elapsed = time.perf_counter() - t0
    st = str(sol.status)
    if st in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        blocks = low.unpack_duals(np.asarray(sol.z))
        residual = farkas_residual(problem, blocks, low.col)
        if residual <= settings.accept_residual:
            return SolveReport("infeasible", math.nan, None, None, {"farkas": residual}, 0, sol.iterations,
                               elapsed, problem.variant, st,
                               message="verified infeasibility certificate: PSD multipliers D with "
                                       "sum <D, A_k> = 0 for all k and sum <D, C0> < 0")
        return SolveReport("numerical_failure", math.nan, None, None, {"farkas": residual}, 0, sol.iterations,
                           elapsed, problem.variant, st, message="infeasibility certificate failed verification")
    if st not in ("Solved", "AlmostSolved"):
        return SolveReport("numerical_failure", math.nan, None, None, {}, 0, sol.iterations, elapsed,
                           problem.variant, st, message=f"solver stopped with {st}")
    x = np.asarray(sol.x) * low.col
    blocks = low.unpack_duals(np.asarray(sol.z))
    return _build_report(problem, x, blocks, st, sol.iterations, elapsed)


def _with_beam(policy: TransmitPolicy) -> TransmitPolicy:
    if hm.numeric_rank(policy.w_cov) != 1:
        return policy
    lam, vec = hm.dominant_eigenpair(policy.w_cov)
    beam = math.sqrt(lam) * vec
    try:
        return TransmitPolicy(policy.w_cov, policy.an_cov, policy.es_cov, policy.rho, policy.delta,
                              policy.nu, beam_vector=beam)
    except ValueError:
        return policy
