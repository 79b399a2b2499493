"""Monte Carlo driver: per-trial solves, parameter sweeps and the rho-grid oracle.

Every scheme in a trial sees the same ChannelSet and the same eavesdropper
validation pool, so scheme comparisons are paired at the instance level.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import hermitian as hm
from .channels import (ChannelSet, FadingSpec, apply_csi_uncertainty, draw_eavesdropper_channels,
                       draw_legitimate_channels)
from .cli.units import db_to_linear, mean_dbm
from .formulation import VARIANTS, assemble, chance_quantile
from .recovery import DEFAULT_TOL as DEFAULT_RECOVERY_TOL, RecoveryFailure, check_prop1, construct_rank_one
from .solver import SolveReport, SolverSettings, solve
from .system import (SystemConfig, TransmitPolicy, evaluate_constraints, harvested_power_desired,
                     harvested_power_idle, sinr_desired, sinr_idle_worstsplit, sinr_passive_batch)

SWEEP_PARAMETERS = ("gamma_req_db", "n_t", "k_total", "sigma_est_sq")
CSV_COLUMNS = ("sweep_param", "sweep_value", "scheme", "trials_ok", "mean_power_dbm", "mean_trW_dbm",
               "mean_trV_dbm", "mean_trWE_dbm", "mean_rho", "rank1_frac", "prop1_frac",
               "mean_secrecy_bps_hz", "mean_harvest_desired_dbm", "mean_harvest_idle_dbm",
               "empirical_outage")
DEFAULT_OUTAGE_DRAWS = 10_000
EAVES_PURPOSE = 2
SOLVED_CHUNK = 32


# ---------------------------------------------------------------------------
# instances


def draw_instance(config: SystemConfig, fading: FadingSpec, seed: int) -> ChannelSet:
    """Channels for one trial: legitimate draws plus the configured CSI error."""
    ch = draw_legitimate_channels(config, fading, seed)
    if config.sigma_est_sq > 0:
        ch = apply_csi_uncertainty(ch, config.sigma_est_sq)
    return ch


def eavesdropper_pool(config: SystemConfig, seed: int, groups: int) -> np.ndarray:
    """Shared (groups, J, n_t) validation pool of one trial; prefix-stable in groups."""
    rng = np.random.default_rng([int(seed), EAVES_PURPOSE])
    return draw_eavesdropper_channels(config.n_t, groups, rng, j=max(config.j_eaves, 1))


def passes_screen(channels: ChannelSet, config: SystemConfig) -> bool:
    """Cheap necessary feasibility test on the harvesting constraints.

    |x^H X x| <= (sum_n sqrt(X_nn) |x_n|)^2 for PSD X, so with the per-antenna
    budget no covariance can deliver more than that to a receiver. A robust idle
    receiver must also be served at g_hat (1 - eps/||g_hat||), which lies in its ball.
    """
    amp = np.sqrt(np.asarray(config.p_max_antenna_w))
    for k in range(config.n_idle):
        g = channels.g_hat[k]
        shrink = max(0.0, 1.0 - channels.epsilon[k] / max(np.linalg.norm(g), 1e-300))
        best = config.eta * ((shrink * float(amp @ np.abs(g))) ** 2 + config.sigma_ant_sq_w)
        if best < config.p_min_idle_w[k]:
            return False
    best = config.eta * (float(amp @ np.abs(channels.h)) ** 2 + config.sigma_ant_sq_w)
    return best >= config.p_min_desired_w


def trial_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# metrics


def empirical_outage(policy: TransmitPolicy, config: SystemConfig, sigma_tilde_sq: float, draws: int,
                     seed: int | np.ndarray) -> float:
    """Fraction of J-eavesdropper groups whose best SINR stays at or below Gamma_tol.

    ``seed`` may also be a ready (groups, J, n_t) pool, which is how trials share one.
    """
    if draws < 1:
        raise ValueError("draws must be >= 1")
    if isinstance(seed, np.ndarray):
        pool = seed[:draws]
    else:
        pool = draw_eavesdropper_channels(config.n_t, draws, seed, j=max(config.j_eaves, 1))
    s = sinr_passive_batch(policy, pool, sigma_tilde_sq)
    return float(np.mean(np.max(s, axis=1) <= config.gamma_tol))


def secrecy_metrics(policy: TransmitPolicy, channels: ChannelSet, config: SystemConfig,
                    pool: np.ndarray) -> tuple[float, float]:
    """(bound, sampled) secrecy capacity in bit/s/Hz.

    The bound evaluates the passive-eavesdropper term at Gamma_tol; the sampled
    value averages over the J-eavesdropper groups of the pool.
    """
    ic = math.log2(1.0 + sinr_desired(policy, channels.h, config))
    idle = max((math.log2(1.0 + sinr_idle_worstsplit(policy, g, config)) for g in channels.g_true),
               default=0.0)
    eav_bound = math.log2(1.0 + config.gamma_tol) if config.j_eaves else 0.0
    bound = max(0.0, ic - max(idle, eav_bound))
    if not config.j_eaves:
        return bound, max(0.0, ic - idle)
    eav = np.log2(1.0 + np.max(sinr_passive_batch(policy, pool, channels.sigma_tilde_sq), axis=1))
    sampled = float(np.mean(np.maximum(0.0, ic - np.maximum(idle, eav))))
    return bound, sampled


# ---------------------------------------------------------------------------
# trials


@dataclass
class TrialRecord:
    instance_id: int
    scheme: str
    status: str
    objective_w: float = math.nan
    relaxed_objective_w: float = math.nan
    tr_w: float = math.nan
    tr_v: float = math.nan
    tr_we: float = math.nan
    rho: float = math.nan
    w_rank: int = 0
    final_rank: int = 0
    prop1: bool | None = None
    recovery_invoked: bool = False
    recovery_ok: bool = False
    secrecy_bound: float = math.nan
    secrecy_capacity: float = math.nan
    harvest_desired_w: float = math.nan
    harvest_idle_w: tuple[float, ...] = ()
    empirical_outage: float = math.nan
    margins: dict = field(default_factory=dict)
    kkt: dict = field(default_factory=dict)
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["harvest_idle_w"] = list(self.harvest_idle_w)
        return d


def _policy_record(rec: TrialRecord, policy: TransmitPolicy, channels: ChannelSet, config: SystemConfig,
                   pool: np.ndarray, c3bar_coeff: float | None) -> None:
    rec.objective_w = policy.total_power
    rec.tr_w, rec.tr_v, rec.tr_we = policy.power_split()
    rec.rho = float(policy.rho)
    rec.final_rank = hm.numeric_rank(policy.w_cov)
    rec.secrecy_bound, rec.secrecy_capacity = secrecy_metrics(policy, channels, config, pool)
    rec.harvest_desired_w = harvested_power_desired(policy, channels.h, config)
    rec.harvest_idle_w = tuple(harvested_power_idle(policy, g, config) for g in channels.g_true)
    rec.empirical_outage = empirical_outage(policy, config, channels.sigma_tilde_sq, len(pool), pool)
    rec.margins = evaluate_constraints(policy, channels, config, c3bar_coeff=c3bar_coeff).margins


def evaluate_scheme(scheme: str, channels: ChannelSet, config: SystemConfig, pool: np.ndarray,
                    instance_id: int = 0, settings: SolverSettings | None = None
                    ) -> tuple[TrialRecord, SolveReport | None]:
    """Solve one scheme on a fixed instance, recover a rank-one beam and evaluate it."""
    rec = TrialRecord(instance_id, scheme, "error")
    try:
        problem = assemble(scheme, channels, config)
        report = solve(problem, settings=settings)
    except (ValueError, np.linalg.LinAlgError) as exc:
        rec.message = f"{type(exc).__name__}: {exc}"
        return rec, None
    rec.status = report.status
    rec.message = report.message
    if not report.optimal:
        return rec, report
    rec.relaxed_objective_w = report.objective_w
    rec.w_rank = report.w_rank
    rec.kkt = dict(report.kkt_residuals)
    policy = report.policy
    if problem.has_matrix_w():
        rec.prop1 = check_prop1(report.duals, config)[1]
        try:
            out = construct_rank_one(report, problem, tol=settings.tol if settings else DEFAULT_RECOVERY_TOL)
            policy = out.policy
            rec.recovery_invoked = out.invoked
            rec.recovery_ok = True
        except RecoveryFailure as exc:
            rec.message = f"recovery failed: {exc}"
    else:
        rec.recovery_ok = True
    coeff = None
    if config.kappa > 0 and config.j_eaves > 0:
        coeff = chance_quantile(config.n_t, config.kappa, config.j_eaves).quantile_coeff
    _policy_record(rec, policy, channels, config, pool, coeff)
    return rec, report


def run_trial(config: SystemConfig, fading: FadingSpec, seed: int, schemes=("optimal",),
              outage_draws: int = DEFAULT_OUTAGE_DRAWS, settings: SolverSettings | None = None
              ) -> list[TrialRecord]:
    """One channel draw, every scheme solved on it; failures are recorded, never raised."""
    schemes = tuple(schemes)
    if not schemes:
        raise ValueError("schemes must be non-empty")
    unknown = set(schemes) - set(VARIANTS)
    if unknown:
        raise ValueError(f"unknown schemes {sorted(unknown)}")
    channels = draw_instance(config, fading, seed)
    if not passes_screen(channels, config):
        return [TrialRecord(int(seed), s, "infeasible", message="screened: harvest target out of reach")
                for s in schemes]
    pool = eavesdropper_pool(config, seed, outage_draws)
    return [evaluate_scheme(s, channels, config, pool, int(seed), settings)[0] for s in schemes]


@dataclass
class SolvedInstance:
    seed: int
    channels: ChannelSet
    problem: object
    report: SolveReport


def solved_instances(config: SystemConfig, fading: FadingSpec, count: int, start: int = 0,
                     scheme: str = "optimal", max_draws: int = 100_000,
                     settings: SolverSettings | None = None) -> list[SolvedInstance]:
    """The first ``count`` draws from seed ``start`` on that the scheme solves, with their reports."""
    out = []
    for seed in range(start, start + max_draws):
        ch = draw_instance(config, fading, seed)
        if not passes_screen(ch, config):
            continue
        problem = assemble(scheme, ch, config)
        report = solve(problem, settings=settings)
        if report.optimal:
            out.append(SolvedInstance(seed, ch, problem, report))
            if len(out) == count:
                return out
    raise RuntimeError(f"only {len(out)} of {count} solvable seeds in {max_draws} draws")


def find_solved_seeds(config: SystemConfig, fading: FadingSpec, count: int, start: int = 0,
                      scheme: str = "optimal", max_draws: int = 100_000,
                      settings: SolverSettings | None = None) -> list[int]:
    return [inst.seed for inst in solved_instances(config, fading, count, start, scheme, max_draws, settings)]


# ---------------------------------------------------------------------------
# rho-grid oracle


@dataclass(frozen=True)
class RhoOracleResult:
    status: str
    objective_w: float
    rho: float
    grid: np.ndarray
    values: np.ndarray  # inf where the fixed-rho problem is infeasible


def _fixed_rho_objective(channels, config, variant, rho, settings) -> float:
    r = solve(assemble(variant, channels, config, fixed_rho=rho), settings=settings)
    return r.objective_w if r.optimal else math.inf


def rho_grid_oracle(channels: ChannelSet, config: SystemConfig, variant: str = "optimal",
                    grid_points: int = 21, golden_iters: int = 24,
                    settings: SolverSettings | None = None) -> RhoOracleResult:
    """Minimum over rho of the fixed-rho problem: uniform grid, then golden section around the best point."""
    if grid_points < 3:
        raise ValueError("grid_points must be >= 3")
    lo, hi = 1e-6, 1.0 - 1e-6
    grid = np.linspace(lo, hi, grid_points)
    values = np.array([_fixed_rho_objective(channels, config, variant, r, settings) for r in grid])
    if not np.any(np.isfinite(values)):
        return RhoOracleResult("infeasible", math.inf, math.nan, grid, values)
    i = int(np.argmin(values))
    best_rho, best = float(grid[i]), float(values[i])
    a, b = float(grid[max(i - 1, 0)]), float(grid[min(i + 1, grid_points - 1)])
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    fc = _fixed_rho_objective(channels, config, variant, c, settings)
    fd = _fixed_rho_objective(channels, config, variant, d, settings)
    for _ in range(golden_iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = _fixed_rho_objective(channels, config, variant, c, settings)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = _fixed_rho_objective(channels, config, variant, d, settings)
    for r, f in ((c, fc), (d, fd)):
        if f < best:
            best_rho, best = r, f
    return RhoOracleResult("optimal", best, best_rho, grid, values)


# ---------------------------------------------------------------------------
# sweeps


@dataclass(frozen=True)
class SweepSpec:
    """Parameter sweep over paired trials.

    ``trials`` counts channel draws. With ``max_draws`` set it instead counts
    draws that the first scheme solves at every sweep value, searching at most
    ``max_draws`` draws.
    """
    swept_parameter: str
    values: tuple
    trials: int
    schemes: tuple[str, ...]
    base_config: SystemConfig
    base_fading: FadingSpec = FadingSpec()
    master_seed: int = 0
    outage_draws: int = DEFAULT_OUTAGE_DRAWS
    max_draws: int | None = None
    solver: SolverSettings = SolverSettings()

    def __post_init__(self):
        if self.swept_parameter not in SWEEP_PARAMETERS:
            raise ValueError(f"swept_parameter must be one of {SWEEP_PARAMETERS}")
        object.__setattr__(self, "values", tuple(self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        if not self.values or list(self.values) != sorted(self.values):
            raise ValueError("values must be non-empty and sorted")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.schemes or set(self.schemes) - set(VARIANTS):
            raise ValueError(f"schemes must be a non-empty subset of {VARIANTS}")
        if self.max_draws is not None and self.max_draws < self.trials:
            raise ValueError("max_draws must be >= trials")

    def config_at(self, value) -> SystemConfig:
        cfg = self.base_config
        if self.swept_parameter == "gamma_req_db":
            return cfg.with_(gamma_req=db_to_linear(value))
        if self.swept_parameter == "n_t":
            return cfg.resized(n_t=int(value))
        if self.swept_parameter == "k_total":
            return cfg.resized(k_total=int(value))
        return cfg.with_(sigma_est_sq=float(value))

    def with_(self, **changes) -> "SweepSpec":
        return replace(self, **changes)


def _trial_task(args) -> list[list[TrialRecord]]:
    spec, index = args
    seed = trial_seed(spec.master_seed, index)
    return [run_trial(spec.config_at(v), spec.base_fading, seed, spec.schemes, spec.outage_draws, spec.solver)
            for v in spec.values]


def _map(tasks, jobs: int):
    if jobs <= 1:
        return [_trial_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_trial_task, tasks, chunksize=1))


def run_sweep_trials(spec: SweepSpec, jobs: int = 1) -> list[list[list[TrialRecord]]]:
    """Records indexed [trial][value][scheme]; independent of ``jobs``."""
    if spec.max_draws is None:
        return _map([(spec, i) for i in range(spec.trials)], jobs)
    kept: list = []
    start = 0
    while len(kept) < spec.trials and start < spec.max_draws:
        stop = min(start + SOLVED_CHUNK, spec.max_draws)
        for recs in _map([(spec, i) for i in range(start, stop)], jobs):
            if all(per_value[0].optimal for per_value in recs):
                kept.append(recs)
        start = stop
    return kept[:spec.trials]


def aggregate(spec: SweepSpec, trials: list[list[list[TrialRecord]]]) -> list[dict]:
    """One row per (sweep value, scheme): Watts averaged first, then expressed in dBm."""
    rows = []
    for vi, value in enumerate(spec.values):
        for si, scheme in enumerate(spec.schemes):
            recs = [t[vi][si] for t in trials if t[vi][si].optimal]
            prop = [r.prop1 for r in recs if r.prop1 is not None]
            idle = [p for r in recs for p in r.harvest_idle_w]

            def mean(xs):
                return float(np.mean(xs)) if len(xs) else math.nan

            rows.append({
                "sweep_param": spec.swept_parameter, "sweep_value": value, "scheme": scheme,
                "trials_ok": len(recs),
                "mean_power_dbm": mean_dbm(r.objective_w for r in recs),
                "mean_trW_dbm": mean_dbm(r.tr_w for r in recs),
                "mean_trV_dbm": mean_dbm(r.tr_v for r in recs),
                "mean_trWE_dbm": mean_dbm(r.tr_we for r in recs),
                "mean_rho": mean([r.rho for r in recs]),
                "rank1_frac": mean([r.final_rank == 1 for r in recs]),
                "prop1_frac": mean(prop),
                "mean_secrecy_bps_hz": mean([r.secrecy_capacity for r in recs]),
                "mean_harvest_desired_dbm": mean_dbm(r.harvest_desired_w for r in recs),
                "mean_harvest_idle_dbm": mean_dbm(idle),
                "empirical_outage": mean([r.empirical_outage for r in recs]),
            })
    return rows


def sweep(spec: SweepSpec, jobs: int = 1) -> list[dict]:
    return aggregate(spec, run_sweep_trials(spec, jobs))


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()
