"""Rank certification and rank-one reconstruction of the relaxed beamformer.

check_prop1 evaluates the dual sufficient condition D_C2,k / Gamma_k - D_C5,k >= 0.
construct_rank_one deflates W* along a direction v outside the null space of
B*: f u u^H with u proportional to W* v keeps the part seen by the desired
receiver, and the remainder, which lies in that null space, goes to the
artificial noise (and, for pi < 1, to the energy signal). (f, gamma_t) are then
re-optimised with rho, delta, nu frozen.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import hermitian as hm
from .formulation import AffineScalar, Layout, SdpProblem, build_constraints
from .solver import DEFAULT_TOL, SolveReport, b_star, solve
from .system import SystemConfig, TransmitPolicy

NULL_THRESHOLD = 1e-6
PROP1_TOL = 1e-8


class RecoveryFailure(RuntimeError):
    """The reconstruction subproblem did not return a usable rank-one point."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class RecoveryWorkspace:
    b_star: np.ndarray
    upsilon: np.ndarray
    r: int
    u_dir: np.ndarray  # dominant direction of W* outside the null space (orthogonal to upsilon)
    beam_dir: np.ndarray  # W* u_dir, normalised: direction of the rank-one beamformer
    gamma_t: np.ndarray
    f_scale: float
    pi_t: np.ndarray


@dataclass
class RecoveryOutcome:
    policy: TransmitPolicy
    invoked: bool
    objective_before: float
    objective_after: float
    workspace: RecoveryWorkspace | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def objective_change(self) -> float:
        return abs(self.objective_after - self.objective_before) / max(abs(self.objective_before), 1e-300)


def check_prop1(duals, config: SystemConfig) -> tuple[list[bool], bool]:
    """Per idle receiver: lambda_min(D_C2,k / Gamma_k - D_C5,k) >= -1e-8 * scale."""
    flags = []
    for k in range(config.n_idle):
        a = np.asarray(duals.d_c2[k]) / config.gamma_tol_k[k]
        b = np.asarray(duals.d_c5[k])
        # the multipliers enter B* next to the identity, so 1 is the natural floor
        scale = max(np.linalg.norm(a, 2), np.linalg.norm(b, 2), 1.0)
        flags.append(bool(hm.lambda_min(a - b) >= -PROP1_TOL * scale))
    return flags, all(flags)


def _beam_policy(policy: TransmitPolicy) -> TransmitPolicy:
    lam, vec = hm.dominant_eigenpair(policy.w_cov)
    beam = math.sqrt(max(lam, 0.0)) * vec
    w = hm.outer(beam)
    return TransmitPolicy(w, policy.an_cov, policy.es_cov, policy.rho, policy.delta, policy.nu, beam_vector=beam)


def _subproblem(problem: SdpProblem, policy: TransmitPolicy, u: np.ndarray, upsilon: np.ndarray,
                pi: np.ndarray | None) -> tuple[SdpProblem, Layout]:
    """Convex program in (f, gamma_t) with rho, delta, nu frozen.

    ``pi=None`` is the fallback: each null direction gets separate artificial-noise
    and energy-signal weights, and rho, delta, nu are optimised again as well.
    """
    cfg, ch = problem.config, problem.channels
    r = upsilon.shape[1]
    lay = Layout()
    lay.scalar("f")
    names = [f"gamma_{t + 1}" for t in range(r)]
    if pi is None:
        names = [f"gammaV_{t + 1}" for t in range(r)] + [f"gammaE_{t + 1}" for t in range(r)]
    for name in names:
        lay.scalar(name)
    free = pi is None
    robust = [k for k in range(cfg.n_idle) if ch.epsilon[k] > 0] if free else []
    if free:
        lay.scalar("rho")
        for k in robust:
            lay.scalar(f"delta_{k + 1}")
            lay.scalar(f"nu_{k + 1}")
    lay.scalar("s")
    harvest = cfg.p_min_desired_w > 0
    if harvest:
        lay.scalar("t")
    f = lay.var("f")
    w = f.times(hm.outer(u))
    v = AffineScalar(0.0).times(policy.an_cov) + policy.an_cov
    we = AffineScalar(0.0).times(policy.es_cov) + policy.es_cov
    for t in range(r):
        rr = hm.outer(upsilon[:, t])
        if pi is None:
            v = v + lay.var(f"gammaV_{t + 1}").times(rr)
            we = we + lay.var(f"gammaE_{t + 1}").times(rr)
        else:
            g = lay.var(f"gamma_{t + 1}")
            v = v + g.times(pi[t] * rr)
            we = we + g.times((1.0 - pi[t]) * rr)
    if free:
        rho = lay.var("rho")
        delta = [lay.var(f"delta_{k + 1}") if k in robust else AffineScalar(0.0) for k in range(cfg.n_idle)]
        nu = [lay.var(f"nu_{k + 1}") if k in robust else AffineScalar(0.0) for k in range(cfg.n_idle)]
    else:
        rho = AffineScalar(policy.rho)
        delta = [AffineScalar(d) for d in policy.delta] or [AffineScalar(0.0)] * cfg.n_idle
        nu = [AffineScalar(d) for d in policy.nu] or [AffineScalar(0.0)] * cfg.n_idle
    ex = {
        "W": w, "V": v, "WE": we, "rho": rho, "s": lay.var("s"),
        "t": lay.var("t") if harvest else AffineScalar(0.0),
        "delta": delta, "nu": nu,
        "psd_vars": [], "nonneg_vars": [("f", f)] + [(n, lay.var(n)) for n in names],
    }
    cons = build_constraints(ex, ch, cfg, use_c5bar=(problem.variant == "suboptimal"), chance=problem.chance)
    cons = [c for c in cons if not c.expr.is_constant]
    objective = w.trace() + v.trace() + we.trace()
    sub = SdpProblem("recovery", lay, objective, cons, ex, ch, cfg, problem.chance)
    return sub, lay


def construct_rank_one(report: SolveReport, problem: SdpProblem, pi=1.0, tol: float = DEFAULT_TOL,
                       force: bool = False) -> RecoveryOutcome:
    """Rank-one beamformer with the relaxed objective.

    A numerically rank-one W* only gets its beam vector extracted. ``force``
    runs the construction regardless, which is how the pi-family is explored.
    """
    if report.status != "optimal":
        raise ValueError("recovery needs an optimal report")
    policy = report.policy
    before = report.objective_w
    if hm.numeric_rank(policy.w_cov) <= 1 and not force:
        out = _beam_policy(policy)
        return RecoveryOutcome(out, False, before, out.total_power)
    bs = b_star(report.duals, problem)
    upsilon = hm.null_basis(bs, NULL_THRESHOLD)
    proj = np.eye(policy.n_t) - upsilon @ upsilon.conj().T
    outside, v = hm.dominant_eigenpair(proj @ policy.w_cov @ proj)
    if outside > NULL_THRESHOLD * hm.lambda_max(policy.w_cov):
        # W* = f u u^H + R with R v = 0: the remainder then lives in span(upsilon) even when
        # W* couples the null space and its complement
        wv = policy.w_cov @ v
        u = wv / np.linalg.norm(wv)
        rest = hm.symmetrize(policy.w_cov - np.outer(wv, wv.conj()) / np.real(np.vdot(v, wv)))
    else:
        # W* lies entirely in the null space of B*, which happens when the desired-receiver
        # constraints are slack (mu = beta = 0); deflate along h so h^H W h is preserved
        h = problem.channels.h
        v = h / np.linalg.norm(h)
        wv = policy.w_cov @ v
        u = wv / np.linalg.norm(wv)
        rest = hm.symmetrize(policy.w_cov - np.outer(wv, wv.conj()) / np.real(np.vdot(v, wv)))
        lam, vecs = np.linalg.eigh(rest)
        upsilon = vecs[:, lam > NULL_THRESHOLD * hm.lambda_max(policy.w_cov)][:, ::-1]
    if upsilon.shape[1]:
        lam, rot = np.linalg.eigh(hm.symmetrize(upsilon.conj().T @ rest @ upsilon))
        upsilon = upsilon @ rot[:, ::-1]
    r = upsilon.shape[1]
    pi_t = np.broadcast_to(np.asarray(pi, dtype=float), (r,)).copy() if r else np.zeros(0)
    if np.any((pi_t < 0) | (pi_t > 1)):
        raise ValueError("pi must lie in [0, 1]")
    sub, lay = _subproblem(problem, policy, u, upsilon, pi_t)
    res = solve(sub, tol)
    diag = {"null_dim": r, "sub_status": res.status, "split": "fixed",
            "h_upsilon": float(np.linalg.norm(problem.channels.h.conj() @ upsilon)) if r else 0.0}
    if res.status != "optimal" and r:
        # the prescribed split can clash with the desired-receiver SINR when h is not
        # orthogonal to the moved directions, or leave a near-degenerate program the
        # residual check rejects; let the subproblem choose it instead
        sub, lay = _subproblem(problem, policy, u, upsilon, None)
        res = solve(sub, tol)
        diag.update(sub_status=res.status, split="free")
        if res.status == "optimal":
            policy = sub.policy_at(res.x)
    if res.status != "optimal":
        raise RecoveryFailure(f"reconstruction subproblem {res.status}", diag)
    x = res.x
    f = float(x[lay.slices["f"]][0])
    if diag["split"] == "fixed":
        gam = np.array([x[lay.slices[f"gamma_{t + 1}"]][0] for t in range(r)])
    else:
        gv = np.array([x[lay.slices[f"gammaV_{t + 1}"]][0] for t in range(r)])
        ge = np.array([x[lay.slices[f"gammaE_{t + 1}"]][0] for t in range(r)])
        gam = gv + ge
        pi_t = np.where(gam > 0, gv / np.where(gam > 0, gam, 1.0), 1.0)
    diag.update(f=f, gamma=gam.tolist())
    if f <= 0:
        raise RecoveryFailure("reconstruction returned f <= 0", diag)
    e = sub.exprs
    beam = math.sqrt(f) * u
    new = TransmitPolicy(hm.outer(beam), e["V"].value(x), e["WE"].value(x), policy.rho, policy.delta,
                         policy.nu, beam_vector=beam)
    ws = RecoveryWorkspace(bs, upsilon, r, v, u, gam, f, pi_t)
    return RecoveryOutcome(new, True, before, new.total_power, ws, diag)


@dataclass
class AuditRow:
    instance: str
    rank: int
    prop1: bool
    recovered: bool


def rank_one_audit(reports, problems=None, ids=None) -> dict:
    """Tabulate rank, dual-certificate outcome and recovery use; only "certificate => rank one" is asserted."""
    rows = []
    violations = []
    for i, rep in enumerate(reports):
        if rep.status != "optimal":
            continue
        inst = str(ids[i]) if ids is not None else str(i)
        cfg = problems[i].config if problems is not None else None
        prop1 = check_prop1(rep.duals, cfg)[1] if cfg is not None else False
        rank = hm.numeric_rank(rep.policy.w_cov)
        recovered = rank > 1
        if prop1 and rank != 1:
            violations.append(inst)
        rows.append(AuditRow(inst, rank, prop1, recovered))
    n = len(rows)
    return {
        "rows": rows,
        "count": n,
        "rank1_frac": sum(r.rank == 1 for r in rows) / n if n else math.nan,
        "prop1_frac": sum(r.prop1 for r in rows) / n if n else math.nan,
        "rank1_without_prop1": sum(r.rank == 1 and not r.prop1 for r in rows),
        "implication_violations": violations,
    }


def audit_csv(summary: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["instance", "rank", "prop1", "recovered"])
    for r in summary["rows"]:
        w.writerow([r.instance, r.rank, int(r.prop1), int(r.recovered)])
    return buf.getvalue()
