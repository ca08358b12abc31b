"""JSON configuration parsing: medium schema plus the experiment plan.

Unknown keys are rejected everywhere so typos fail loudly; malformed JSON
reports line and column.  Numbers follow JSON syntax, which is locale
independent by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .medium import (Interface, MediumSpec, Piece, derive_lambdas, validate_model)

REGISTERED_CHECKS = (
    "splitting-probability",
    "jump-ratio",
    "occupation-ratio",
    "duality",
    "conservation",
    "continuity-probe",
)


@dataclass(frozen=True)
class EngineSettings:
    h: float
    t: float
    paths: int
    seed: int = 0
    mode: str = "fixed"
    start: float = 0.0
    trace: int = 0


@dataclass(frozen=True)
class EstimatorSettings:
    epsilons: tuple | None = None    # None: derive (8h, 4h, 2h) from the grid
    probes: tuple = ()


@dataclass(frozen=True)
class SolverSettings:
    cells: int = 1000
    dt: float = 1e-4
    scheme: str = "implicit-euler"
    t: float | None = None           # None: reuse the engine horizon


@dataclass(frozen=True)
class CheckRequest:
    name: str
    tolerance: float | None = None   # None: each check's own default rule


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    engine: EngineSettings
    estimator: EstimatorSettings = EstimatorSettings()
    solver: SolverSettings = SolverSettings()
    checks: tuple = field(default_factory=tuple)


def _require_keys(d: dict, allowed: set, required: set, where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}; "
                          f"allowed: {sorted(allowed)}")
    missing = required - set(d)
    if missing:
        raise ConfigError(f"{where}: missing required key(s) {sorted(missing)}")


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _pair(value, where: str) -> tuple[float, float]:
    if not isinstance(value, list) or len(value) != 2:
        raise ConfigError(f"{where}: expected a two-element array")
    return _number(value[0], where), _number(value[1], where)


def _coeffs(value, where: str) -> tuple[float, float, float, float]:
    if not isinstance(value, list) or not 1 <= len(value) <= 4:
        raise ConfigError(f"{where}: expected 1 to 4 polynomial coefficients")
    coeffs = [_number(v, where) for v in value] + [0.0] * (4 - len(value))
    return tuple(coeffs)


def medium_from_dict(doc: dict) -> MediumSpec:
    """Build a MediumSpec from the parsed top-level document."""
    _require_keys(doc, {"window", "bounds", "interfaces", "pieces", "experiment"},
                  {"window", "bounds", "interfaces", "pieces"}, "config")
    window = _pair(doc["window"], "window")
    bounds = _pair(doc["bounds"], "bounds")

    interfaces = []
    if not isinstance(doc["interfaces"], list):
        raise ConfigError("interfaces: expected an array")
    for i, entry in enumerate(doc["interfaces"]):
        where = f"interfaces[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        _require_keys(entry, {"x", "lambda", "beta_plus", "beta_minus"},
                      {"x"}, where)
        interfaces.append(Interface(
            x=_number(entry["x"], where),
            lam=_number(entry["lambda"], where) if "lambda" in entry else None,
            beta_plus=_number(entry["beta_plus"], where) if "beta_plus" in entry else None,
            beta_minus=_number(entry["beta_minus"], where) if "beta_minus" in entry else None,
        ))

    pieces = []
    if not isinstance(doc["pieces"], list):
        raise ConfigError("pieces: expected an array")
    for i, entry in enumerate(doc["pieces"]):
        where = f"pieces[{i}]"
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: expected an object")
        _require_keys(entry, {"left", "right", "D", "eta"},
                      {"left", "right", "D", "eta"}, where)
        pieces.append(Piece(
            left=_number(entry["left"], where),
            right=_number(entry["right"], where),
            d_coeffs=_coeffs(entry["D"], f"{where}.D"),
            eta_coeffs=_coeffs(entry["eta"], f"{where}.eta"),
        ))
    return MediumSpec(tuple(interfaces), tuple(pieces), window, bounds)


def plan_from_dict(doc: dict, default_name: str) -> ExperimentPlan | None:
    """Extract the optional experiment section."""
    if "experiment" not in doc:
        return None
    exp = doc["experiment"]
    _require_keys(exp, {"name", "engine", "estimator", "solver", "checks"},
                  {"engine"}, "experiment")
    eng = exp["engine"]
    _require_keys(eng, {"h", "t", "paths", "seed", "mode", "start", "trace"},
                  {"h", "t", "paths"}, "experiment.engine")
    mode = eng.get("mode", "fixed")
    if mode not in ("fixed", "exp"):
        raise ConfigError(f"experiment.engine.mode: must be 'fixed' or 'exp', got {mode!r}")
    engine = EngineSettings(
        h=_number(eng["h"], "engine.h"),
        t=_number(eng["t"], "engine.t"),
        paths=int(_number(eng["paths"], "engine.paths")),
        seed=int(_number(eng.get("seed", 0), "engine.seed")),
        mode=mode,
        start=_number(eng.get("start", 0.0), "engine.start"),
        trace=int(_number(eng.get("trace", 0), "engine.trace")),
    )

    est = exp.get("estimator", {})
    _require_keys(est, {"epsilons", "probes"}, set(), "experiment.estimator")
    epsilons = est.get("epsilons")
    if epsilons is not None:
        epsilons = tuple(_number(e, "estimator.epsilons") for e in epsilons)
    probes = tuple(_number(p, "estimator.probes") for p in est.get("probes", []))
    estimator = EstimatorSettings(epsilons=epsilons, probes=probes)

    sol = exp.get("solver", {})
    _require_keys(sol, {"cells", "dt", "scheme", "t"}, set(), "experiment.solver")
    solver = SolverSettings(
        cells=int(_number(sol.get("cells", 1000), "solver.cells")),
        dt=_number(sol.get("dt", 1e-4), "solver.dt"),
        scheme=sol.get("scheme", "implicit-euler"),
        t=_number(sol["t"], "solver.t") if "t" in sol else None,
    )

    checks = []
    for i, entry in enumerate(exp.get("checks", [])):
        where = f"experiment.checks[{i}]"
        if isinstance(entry, str):
            name, tol = entry, None
        elif isinstance(entry, dict):
            _require_keys(entry, {"name", "tolerance"}, {"name"}, where)
            name = entry["name"]
            tol = _number(entry["tolerance"], where) if "tolerance" in entry else None
        else:
            raise ConfigError(f"{where}: expected a name or an object")
        if name not in REGISTERED_CHECKS:
            raise ConfigError(f"{where}: unknown check {name!r}; "
                              f"registered: {list(REGISTERED_CHECKS)}")
        checks.append(CheckRequest(name, tol))

    return ExperimentPlan(
        name=exp.get("name", default_name),
        engine=engine, estimator=estimator, solver=solver,
        checks=tuple(checks))


def parse_config(path, require_valid: bool = True):
    """Load a config file into (MediumSpec, ExperimentPlan | None).

    Lambdas are derived from betas where missing.  With `require_valid`
    the medium must pass validate_model, else a ConfigError carries the
    violation summary.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: "
            f"{exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    spec = derive_lambdas(medium_from_dict(doc))
    plan = plan_from_dict(doc, default_name=path.stem)
    if require_valid:
        report = validate_model(spec)
        if not report.ok:
            raise ConfigError(f"{path}: medium fails validation:\n{report.summary()}")
    return spec, plan
