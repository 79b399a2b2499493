"""secure-swipt command line: solve, sweep, audit, quantile.

Exit codes: 0 optimal (or command succeeded), 2 infeasible, 1 any error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .. import hermitian as hm
from ..experiments import (aggregate, draw_instance, eavesdropper_pool, passes_screen,
                           rows_to_csv, run_sweep_trials, solved_instances)
from ..formulation import VARIANTS, assemble, chance_quantile
from ..recovery import RecoveryFailure, audit_csv, check_prop1, construct_rank_one, rank_one_audit
from ..solver import SolverSettings, solve
from ..system import evaluate_constraints
from .scenario import ScenarioError, ScenarioFile
from .units import db_to_linear

OUT_ENV = "SECURE_SWIPT_OUT"
EXIT_OK, EXIT_ERROR, EXIT_INFEASIBLE = 0, 1, 2
ROBUSTNESS_SAMPLES = 1_000


def _out_dir(args, scenario: ScenarioFile | None) -> Path:
    """--out, then the scenario's output.directory, then $SECURE_SWIPT_OUT, then the cwd."""
    chosen = args.out or (scenario.output["directory"] if scenario else None) or os.environ.get(OUT_ENV) or "."
    path = Path(chosen)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _settings(scenario: ScenarioFile) -> SolverSettings:
    return SolverSettings(tol=scenario.solver["tol"], max_iter=scenario.solver["max_iter"])


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _solve_seed(scenario: ScenarioFile, scheme: str, seed: int):
    cfg = scenario.config
    channels = draw_instance(cfg, scenario.fading, seed)
    problem = assemble(scheme, channels, cfg)
    return channels, problem, solve(problem, settings=_settings(scenario))


def cmd_solve(args) -> int:
    scenario = ScenarioFile.load(args.scenario)
    cfg = scenario.config
    seed = args.seed
    for seed in range(args.seed, args.seed + args.search):
        if args.search > 1 and not passes_screen(draw_instance(cfg, scenario.fading, seed), cfg):
            continue
        channels, problem, report = _solve_seed(scenario, args.scheme, seed)
        if report.optimal:
            break
    else:
        if args.search > 1:
            print(f"no solvable draw among seeds {args.seed}..{args.seed + args.search - 1}", file=sys.stderr)
            return EXIT_INFEASIBLE
    out = _out_dir(args, scenario)
    payload = {"seed": seed, "scheme": args.scheme, "report": report.to_dict()}
    if not report.optimal:
        _write_json(out / "solve_report.json", payload)
        print(f"seed {seed}: {report.status} ({report.message})")
        return EXIT_INFEASIBLE if report.status == "infeasible" else EXIT_ERROR
    policy = report.policy
    audit = {"relaxed_rank": report.w_rank, "kkt_residuals": report.kkt_residuals}
    if problem.has_matrix_w():
        audit["prop1"] = check_prop1(report.duals, cfg)[1]
        try:
            rec = construct_rank_one(report, problem, tol=scenario.solver["tol"])
        except RecoveryFailure as exc:
            print(f"rank-one recovery failed: {exc}", file=sys.stderr)
            _write_json(out / "solve_report.json", payload)
            return EXIT_ERROR
        policy = rec.policy
        audit.update(recovery_invoked=rec.invoked, objective_change=rec.objective_change,
                     recovery_diagnostics=rec.diagnostics)
    coeff = chance_quantile(cfg.n_t, cfg.kappa, cfg.j_eaves).quantile_coeff if cfg.kappa > 0 and cfg.j_eaves else None
    pool = eavesdropper_pool(cfg, seed, 10_000) if cfg.j_eaves else None
    cons = evaluate_constraints(policy, channels, cfg, robustness_samples=ROBUSTNESS_SAMPLES,
                                eaves_draws=pool, c3bar_coeff=coeff, seed=seed)
    audit["rank1"] = hm.numeric_rank(policy.w_cov) == 1
    payload.update(final_policy=policy.to_dict(), audit=audit)
    _write_json(out / "solve_report.json", payload)
    _write_json(out / "constraint_report.json", cons.to_dict())
    print(f"seed {seed}: optimal, total power {policy.total_power:.6g} W, rank one {audit['rank1']}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = ScenarioFile.load(args.scenario)
    schemes = tuple(args.schemes.split(",")) if args.schemes else None
    if schemes and set(schemes) - set(VARIANTS):
        raise ScenarioError(f"--schemes: expected names from {', '.join(VARIANTS)}")
    spec = scenario.sweep_spec(trials=args.trials, schemes=schemes, master_seed=args.seed,
                               max_draws=args.max_draws)
    spec = replace(spec, solver=_settings(scenario))
    trials = run_sweep_trials(spec, jobs=args.jobs)
    rows = aggregate(spec, trials)
    out = _out_dir(args, scenario)
    formats = scenario.output["formats"]
    if "csv" in formats:
        (out / "sweep.csv").write_text(rows_to_csv(rows))
    if "json" in formats:
        records = [[[r.to_dict() for r in per_value] for per_value in t] for t in trials]
        _write_json(out / "sweep_trials.json", {"spec": {"swept_parameter": spec.swept_parameter,
                                                         "values": list(spec.values),
                                                         "schemes": list(spec.schemes)},
                                                "trials": records})
    for row in rows:
        if row["trials_ok"] < len(trials):
            print(f"warning: {row['scheme']} at {row['sweep_param']}={row['sweep_value']} solved "
                  f"{row['trials_ok']} of {len(trials)} trials", file=sys.stderr)
    print(rows_to_csv(rows), end="")
    return EXIT_OK


def cmd_audit(args) -> int:
    scenario = ScenarioFile.load(args.scenario)
    cfg = scenario.config
    found = solved_instances(cfg, scenario.fading, args.count, args.seed, args.scheme,
                             max_draws=args.max_draws, settings=_settings(scenario))
    seeds = [inst.seed for inst in found]
    reports = [inst.report for inst in found]
    problems = [inst.problem for inst in found]
    changes = [construct_rank_one(r, p, tol=scenario.solver["tol"]).objective_change
               for r, p in zip(reports, problems) if p.has_matrix_w()]
    summary = rank_one_audit(reports, problems, seeds)
    out = _out_dir(args, scenario)
    (out / "audit.csv").write_text(audit_csv(summary))
    brief = {k: v for k, v in summary.items() if k != "rows"}
    brief["max_objective_change"] = max(changes, default=0.0)
    brief["seeds"] = seeds
    _write_json(out / "audit.json", brief)
    print(json.dumps(brief, indent=2))
    return EXIT_ERROR if summary["implication_violations"] else EXIT_OK


def cmd_quantile(args) -> int:
    bound = chance_quantile(args.n_t, args.kappa, args.j, db_to_linear(args.gamma_tol_db), args.sigma_tilde_sq)
    payload = {k: (None if isinstance(v, float) and math.isinf(v) else v) for k, v in asdict(bound).items()}
    payload["dropped"] = bound.dropped
    print(json.dumps(payload, indent=2))
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # usage errors are errors (1); argparse's default 2 would read as "infeasible"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="secure-swipt", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one channel draw and write the reports")
    s.add_argument("scenario")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scheme", choices=VARIANTS, default="optimal")
    s.add_argument("--search", type=int, default=1,
                   help="try seeds seed..seed+N-1 and keep the first solvable draw")
    s.add_argument("--out")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("sweep", help="run the scenario's parameter sweep and write the CSV")
    s.add_argument("scenario")
    s.add_argument("--schemes", help="comma-separated scheme names")
    s.add_argument("--trials", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--seed", type=int, help="master seed (overrides the scenario)")
    s.add_argument("--max-draws", type=int, help="count solved draws, searching at most this many")
    s.add_argument("--out")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("audit", help="rank and dual-certificate audit over solved draws")
    s.add_argument("scenario")
    s.add_argument("--count", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scheme", choices=VARIANTS, default="optimal")
    s.add_argument("--max-draws", type=int, default=100_000)
    s.add_argument("--out")
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("quantile", help="print the chance-constraint quantile coefficient")
    s.add_argument("--n-t", type=int, required=True)
    s.add_argument("--kappa", type=float, required=True)
    s.add_argument("--j", type=int, required=True)
    s.add_argument("--gamma-tol-db", type=float, default=0.0)
    s.add_argument("--sigma-tilde-sq", type=float, default=1.0)
    s.set_defaults(func=cmd_quantile)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
