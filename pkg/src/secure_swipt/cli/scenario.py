"""JSON scenario files.

Powers are given in dBm and SINRs in dB; they are converted to linear units
exactly once, when the file is loaded. Saving writes the user-facing values
back unchanged, so load -> save -> load is the identity.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..channels import FadingSpec
from ..experiments import SWEEP_PARAMETERS, SweepSpec
from ..formulation import VARIANTS
from ..system import SystemConfig
from .units import db_to_linear, dbm_to_watts

SYSTEM_DEFAULTS = {
    "n_t": 6,
    "k_total": 4,
    "j_eaves": 5,
    "gamma_req_db": 10.0,
    "gamma_tol_k_db": 0.0,
    "gamma_tol_db": 0.0,
    "kappa": 0.99,
    "p_min_desired_dbm": 0.0,
    "p_min_idle_dbm": 0.0,
    "p_max_antenna_dbm": 30.0,
    "eta": 0.5,
    "sigma_ant_sq_dbm": -111.0,
    "sigma_s_sq_dbm": -35.0,
    "sigma_est_sq": 0.0,
}
INT_FIELDS = ("n_t", "k_total", "j_eaves")
LIST_FIELDS = ("gamma_tol_k_db", "p_min_idle_dbm", "p_max_antenna_dbm")
SWEEP_DEFAULTS = {"swept_parameter": "gamma_req_db", "values": [5.0, 10.0, 15.0, 20.0], "trials": 200,
                  "schemes": ["optimal"], "master_seed": 0, "outage_draws": 10_000, "max_draws": None}
SOLVER_DEFAULTS = {"tol": 1e-8, "max_iter": 400}
OUTPUT_DEFAULTS = {"directory": None, "formats": ["csv", "json"]}
OUTPUT_FORMATS = ("csv", "json")


class ScenarioError(ValueError):
    """Malformed scenario; the message names the offending field or JSON position."""


def _number(value, where: str, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(f"{where}: must be finite, got {value!r}")
    if integer:
        if int(value) != value:
            raise ScenarioError(f"{where}: expected an integer, got {value!r}")
        return int(value)
    return float(value)


def _section(raw: dict, name: str, defaults: dict) -> dict:
    given = raw.get(name) or {}
    if not isinstance(given, dict):
        raise ScenarioError(f"{name}: expected an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ScenarioError(f"{name}: unknown field(s) {', '.join(unknown)}")
    return {**defaults, **given}


def _parse_system(raw: dict) -> dict:
    sec = _section(raw, "system", SYSTEM_DEFAULTS)
    out = {}
    for key, value in sec.items():
        where = f"system.{key}"
        if key in LIST_FIELDS and isinstance(value, list):
            out[key] = [_number(v, f"{where}[{i}]") for i, v in enumerate(value)]
        else:
            out[key] = _number(value, where, integer=key in INT_FIELDS)
    return out


def system_config(system: dict) -> SystemConfig:
    """Linear-unit SystemConfig from the dB/dBm system section."""
    def lin(key, conv):
        v = system[key]
        return [conv(x) for x in v] if isinstance(v, list) else conv(v)

    try:
        return SystemConfig.uniform(
            system["n_t"], system["k_total"], j_eaves=system["j_eaves"],
            gamma_req=db_to_linear(system["gamma_req_db"]),
            gamma_tol_k=lin("gamma_tol_k_db", db_to_linear),
            gamma_tol=db_to_linear(system["gamma_tol_db"]), kappa=system["kappa"],
            p_min_desired_w=dbm_to_watts(system["p_min_desired_dbm"]),
            p_min_idle_w=lin("p_min_idle_dbm", dbm_to_watts),
            p_max_antenna_w=lin("p_max_antenna_dbm", dbm_to_watts),
            eta=system["eta"], sigma_ant_sq_w=dbm_to_watts(system["sigma_ant_sq_dbm"]),
            sigma_s_sq_w=dbm_to_watts(system["sigma_s_sq_dbm"]), sigma_est_sq=system["sigma_est_sq"],
        )
    except ValueError as exc:
        raise ScenarioError(f"system: {exc}") from exc


def _parse_fading(raw: dict) -> FadingSpec:
    defaults = {f.name: f.default for f in fields(FadingSpec)}
    sec = _section(raw, "fading", defaults)
    vals = {k: _number(v, f"fading.{k}") for k, v in sec.items()}
    try:
        return FadingSpec(**vals)
    except ValueError as exc:
        raise ScenarioError(f"fading: {exc}") from exc


def _parse_sweep(raw: dict) -> dict | None:
    if raw.get("sweep") is None:
        return None
    sec = _section(raw, "sweep", SWEEP_DEFAULTS)
    if sec["swept_parameter"] not in SWEEP_PARAMETERS:
        raise ScenarioError(f"sweep.swept_parameter: must be one of {', '.join(SWEEP_PARAMETERS)}")
    integer = sec["swept_parameter"] in ("n_t", "k_total")
    if not isinstance(sec["values"], list) or not sec["values"]:
        raise ScenarioError("sweep.values: expected a non-empty list")
    sec["values"] = [_number(v, f"sweep.values[{i}]", integer) for i, v in enumerate(sec["values"])]
    if sec["values"] != sorted(sec["values"]):
        raise ScenarioError("sweep.values: must be sorted")
    if not isinstance(sec["schemes"], list) or not sec["schemes"] or set(sec["schemes"]) - set(VARIANTS):
        raise ScenarioError(f"sweep.schemes: expected a non-empty list drawn from {', '.join(VARIANTS)}")
    for key in ("trials", "master_seed", "outage_draws"):
        sec[key] = _number(sec[key], f"sweep.{key}", integer=True)
    if sec["trials"] < 1 or sec["outage_draws"] < 1:
        raise ScenarioError("sweep: trials and outage_draws must be >= 1")
    if sec["max_draws"] is not None:
        sec["max_draws"] = _number(sec["max_draws"], "sweep.max_draws", integer=True)
    return sec


def _parse_solver(raw: dict) -> dict:
    sec = _section(raw, "solver", SOLVER_DEFAULTS)
    tol = _number(sec["tol"], "solver.tol")
    if not 0 < tol < 1:
        raise ScenarioError("solver.tol: must lie in (0, 1)")
    max_iter = _number(sec["max_iter"], "solver.max_iter", integer=True)
    if max_iter < 1:
        raise ScenarioError("solver.max_iter: must be >= 1")
    return {"tol": tol, "max_iter": max_iter}


def _parse_output(raw: dict) -> dict:
    sec = _section(raw, "output", OUTPUT_DEFAULTS)
    if sec["directory"] is not None and not isinstance(sec["directory"], str):
        raise ScenarioError("output.directory: expected a string or null")
    formats = sec["formats"]
    if not isinstance(formats, list) or set(formats) - set(OUTPUT_FORMATS):
        raise ScenarioError(f"output.formats: expected a list drawn from {', '.join(OUTPUT_FORMATS)}")
    return {"directory": sec["directory"], "formats": list(formats)}


@dataclass
class ScenarioFile:
    system: dict = field(default_factory=lambda: dict(SYSTEM_DEFAULTS))
    fading: FadingSpec = field(default_factory=FadingSpec)
    sweep: dict | None = None
    solver: dict = field(default_factory=lambda: dict(SOLVER_DEFAULTS))
    output: dict = field(default_factory=lambda: dict(OUTPUT_DEFAULTS))
    config: SystemConfig = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.config = system_config(self.system)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioFile":
        if not isinstance(raw, dict):
            raise ScenarioError("top level: expected a JSON object")
        unknown = sorted(set(raw) - {"system", "fading", "sweep", "solver", "output"})
        if unknown:
            raise ScenarioError(f"top level: unknown section(s) {', '.join(unknown)}")
        return cls(_parse_system(raw), _parse_fading(raw), _parse_sweep(raw), _parse_solver(raw),
                   _parse_output(raw))

    @classmethod
    def loads(cls, text: str) -> "ScenarioFile":
        def reject(token):
            raise ScenarioError(f"non-finite number {token} is not allowed")

        try:
            raw = json.loads(text, parse_constant=reject)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "ScenarioFile":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ScenarioError(f"{path}: {exc.strerror or exc}") from exc
        try:
            return cls.loads(text)
        except ScenarioError as exc:
            raise ScenarioError(f"{path}: {exc}") from exc

    def to_dict(self) -> dict:
        out = {"system": dict(self.system), "fading": asdict(self.fading),
               "solver": dict(self.solver), "output": dict(self.output)}
        if self.sweep is not None:
            out["sweep"] = dict(self.sweep)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps())

    def sweep_spec(self, **overrides) -> SweepSpec:
        sec = {**SWEEP_DEFAULTS, **(self.sweep or {})}
        sec.update({k: v for k, v in overrides.items() if v is not None})
        return SweepSpec(
            swept_parameter=sec["swept_parameter"], values=tuple(sec["values"]), trials=sec["trials"],
            schemes=tuple(sec["schemes"]), base_config=self.config, base_fading=self.fading,
            master_seed=sec["master_seed"], outage_draws=sec["outage_draws"], max_draws=sec["max_draws"],
        )
