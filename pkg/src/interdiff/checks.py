"""Registered cross-validation checks and their CSV artifact trail.

Each check compares a prediction from the medium's coefficients against
an observation from the path engine or the finite-volume solver:

  splitting-probability  P(X_t > x0) against the transmission probability
  jump-ratio             extrapolated local-time ratio against the predicted jump
  occupation-ratio       raw finest-window occupation ratio against the
                         eta/beta form of the predicted jump
  duality                solver expectation of f against the ensemble mean
  conservation           relative drift of the conserved mass
  continuity-probe       left/right local-time agreement off interfaces and
                         m'-normalized agreement at interfaces

Failures are data: the run always completes and reports per-check rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain import build_grid, chain_parameters
from .config import ExperimentPlan
from .errors import EstimationError
from .fpe import expectation_under_p, p_from_q, solve_forward
from .localtime import (continuity_probe, default_epsilons, estimate_ratio,
                        nlt_estimate, nodes_for_probe, window_occupation)
from .medium import MediumSpec, beta_ratio, coeff_at
from .paths import simulate_paths, splitting_estimate, transmission_probability
from .scale import ScaleSpeed


def fmt(x) -> str:
    """Canonical float formatting for CSV artifacts (17 significant digits)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], rows: list[list], footer: str = "") -> None:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    if footer:
        lines.append(footer)
    path.write_text("\n".join(lines) + "\n")


@dataclass
class CheckResult:
    name: str
    predicted: float
    observed: float
    tolerance: float
    passed: bool
    detail: str = ""


@dataclass
class CheckReport:
    results: list[CheckResult]

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary(self) -> str:
        lines = []
        for r in sorted(self.results, key=lambda r: r.name):
            status = "PASS" if r.passed else "FAIL"
            lines.append(f"{status} {r.name}: predicted={r.predicted:.6g} "
                         f"observed={r.observed:.6g} tolerance={r.tolerance:.6g}"
                         + (f" ({r.detail})" if r.detail else ""))
        return "\n".join(lines)


class _Workspace:
    """Lazily built shared state so each plan simulates and solves once."""

    def __init__(self, spec: MediumSpec, plan: ExperimentPlan, threads: int):
        self.spec = spec
        self.plan = plan
        self.threads = threads
        self.scale = ScaleSpeed(spec)
        self.grid = build_grid(spec, plan.engine.h)
        self.chain = chain_parameters(spec, self.grid, self.scale)
        eps = plan.estimator.epsilons
        self.epsilons = tuple(eps) if eps else default_epsilons(plan.engine.h)
        self._ensemble = None
        self._field = None

    @property
    def ensemble(self):
        if self._ensemble is None:
            probes = list(self.spec.interface_positions()) + list(self.plan.estimator.probes)
            tracked = np.empty(0, dtype=np.int64)
            for x in probes:
                tracked = np.union1d(
                    tracked, nodes_for_probe(self.grid.nodes, x, max(self.epsilons)))
            eng = self.plan.engine
            self._ensemble = simulate_paths(
                self.chain, eng.start, eng.t, eng.paths, eng.seed, eng.mode,
                tracked_nodes=tracked, trace=eng.trace, threads=self.threads)
        return self._ensemble

    @property
    def field(self):
        if self._field is None:
            sol = self.plan.solver
            t = sol.t if sol.t is not None else self.plan.engine.t
            self._field = solve_forward(self.spec, self.plan.engine.start, t,
                                        sol.cells, sol.dt, sol.scheme)
        return self._field


def _check_splitting(ws: _Workspace, tol: float | None) -> CheckResult:
    if ws.spec.n_interfaces != 1:
        return CheckResult("splitting-probability", math.nan, math.nan,
                           tol if tol is not None else math.nan, False,
                           "needs exactly one interface")
    predicted = transmission_probability(ws.spec)
    x0 = ws.spec.interfaces[0].x
    observed, se = splitting_estimate(ws.ensemble, ws.scale, x0)
    tolerance = tol if tol is not None else 3.0 * se
    return CheckResult("splitting-probability", predicted, observed, tolerance,
                       abs(observed - predicted) <= tolerance,
                       f"stderr={se:.3g}, boundary_fraction={ws.ensemble.boundary_fraction:.3g}")


def _check_jump_ratio(ws: _Workspace, tol: float | None):
    tolerance = tol if tol is not None else 0.10
    results = []
    reports = []
    for j in range(ws.spec.n_interfaces):
        rep = estimate_ratio(ws.ensemble, ws.scale, j, ws.epsilons)
        reports.append(rep)
        rel = abs(rep.estimated - rep.predicted) / rep.predicted
        results.append((rel, rep))
    worst_rel, worst = max(results, key=lambda t: t[0])
    detail = "; ".join(
        f"x={r.interface_x:g}: est={r.estimated:.5g} pred={r.predicted:.5g}"
        for _, r in results)
    return CheckResult("jump-ratio", worst.predicted, worst.estimated, tolerance,
                       worst_rel <= tolerance, detail + " (relative tolerance)"), reports


def _check_occupation_ratio(ws: _Workspace, tol: float | None) -> CheckResult:
    tolerance = tol if tol is not None else 0.05
    worst = None
    details = []
    for j in range(ws.spec.n_interfaces):
        itf = ws.spec.interfaces[j]
        _, e_minus = coeff_at(ws.spec, itf.x, "left")
        _, e_plus = coeff_at(ws.spec, itf.x, "right")
        predicted = (e_plus / e_minus) / beta_ratio(ws.spec, j)
        eps = min(ws.epsilons)
        right = window_occupation(ws.ensemble, itf.x, "right", eps)
        left = window_occupation(ws.ensemble, itf.x, "left", eps)
        if left.value <= 0:
            raise EstimationError(f"occupation-ratio: no left occupation at x={itf.x}")
        observed = right.value / left.value
        rel = abs(observed - predicted) / predicted
        details.append(f"x={itf.x:g}: {observed:.5g} vs {predicted:.5g} at eps={eps:g}")
        if worst is None or rel > worst[0]:
            worst = (rel, predicted, observed)
    rel, predicted, observed = worst
    return CheckResult("occupation-ratio", predicted, observed, tolerance,
                       rel <= tolerance, "; ".join(details) + " (relative tolerance)")


def _check_duality(ws: _Workspace, tol: float | None) -> CheckResult:
    f = lambda y: np.exp(-np.square(y))
    mc = f(ws.ensemble.final_x)
    mc_mean = float(mc.mean())
    mc_se = float(mc.std(ddof=1) / math.sqrt(len(mc)))
    sol = ws.plan.solver
    if sol.t is not None and sol.t != ws.plan.engine.t:
        # the comparison only makes sense at the ensemble horizon
        field = solve_forward(ws.spec, ws.plan.engine.start, ws.plan.engine.t,
                              sol.cells, sol.dt, sol.scheme)
    else:
        field = ws.field
    predicted = expectation_under_p(field, ws.plan.engine.start, f)
    tolerance = tol if tol is not None else 3.0 * mc_se + 0.02
    return CheckResult("duality", predicted, mc_mean, tolerance,
                       abs(predicted - mc_mean) <= tolerance,
                       f"f=exp(-y^2), mc_stderr={mc_se:.3g}")


def _check_conservation(ws: _Workspace, tol: float | None) -> CheckResult:
    tolerance = tol if tol is not None else 1e-10
    drift = ws.field.max_mass_drift
    return CheckResult("conservation", 0.0, drift, tolerance, drift <= tolerance,
                       f"mass={ws.field.mass:.12g} over {round(ws.field.time / ws.field.system.dt)} steps")


def _check_continuity(ws: _Workspace, tol: float | None):
    tolerance = tol if tol is not None else 3.0   # units of standard errors
    probes = []
    for x in ws.plan.estimator.probes:
        probes.append(continuity_probe(ws.ensemble, ws.scale, x, ws.epsilons))
    for x in ws.spec.interface_positions():
        probes.append(continuity_probe(ws.ensemble, ws.scale, float(x), ws.epsilons))
    if not probes:
        return CheckResult("continuity-probe", 0.0, 0.0, tolerance, True,
                           "no probe points configured"), []
    worst = max(p.within for p in probes)
    detail = "; ".join(
        f"x={p.x:g}{'(norm)' if p.normalized else ''}: {p.within:.2f} sigma"
        for p in probes)
    return CheckResult("continuity-probe", 0.0, worst, tolerance,
                       worst <= tolerance, detail + " (gap in stderr units)"), probes


def run_checks(spec: MediumSpec, plan: ExperimentPlan, out_dir=None,
               threads: int = 1) -> CheckReport:
    """Execute every check in the plan and write the CSV artifact trail.

    The report contains one row per requested check, sorted by name; a
    failing check never aborts the remaining ones.
    """
    ws = _Workspace(spec, plan, threads)
    results: list[CheckResult] = []
    ratio_reports = []
    probe_rows = []
    for req in plan.checks:
        if req.name == "splitting-probability":
            results.append(_check_splitting(ws, req.tolerance))
        elif req.name == "jump-ratio":
            res, ratio_reports = _check_jump_ratio(ws, req.tolerance)
            results.append(res)
        elif req.name == "occupation-ratio":
            results.append(_check_occupation_ratio(ws, req.tolerance))
        elif req.name == "duality":
            results.append(_check_duality(ws, req.tolerance))
        elif req.name == "conservation":
            results.append(_check_conservation(ws, req.tolerance))
        elif req.name == "continuity-probe":
            res, probe_rows = _check_continuity(ws, req.tolerance)
            results.append(res)
    results.sort(key=lambda r: r.name)
    report = CheckReport(results)
    if out_dir is not None:
        write_artifacts(ws, report, ratio_reports, Path(out_dir))
    return report


def write_artifacts(ws: _Workspace, report: CheckReport, ratio_reports,
                    out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)

    if ws._ensemble is not None:
        ens = ws.ensemble
        write_csv(out_dir / "ensemble.csv",
                  ["node_x", "total_occupation_time", "visit_count"],
                  [[ens.nodes[k], ens.total_occupation[k], ens.visit_count[k]]
                   for k in range(len(ens.nodes))])

        rows = []
        probe_xs = list(ws.plan.estimator.probes) + \
            [float(x) for x in ws.spec.interface_positions()]
        for x in probe_xs:
            for side in ("left", "right"):
                try:
                    est = nlt_estimate(ens, x, side, ws.epsilons)
                except EstimationError:
                    continue
                for eps, val, se in zip(est.epsilons, est.ladder_values,
                                        est.ladder_stderrs):
                    rows.append([x, side, eps, "nlt", val, se])
                rows.append([x, side, 0.0, "nlt", est.value, est.stderr])
        write_csv(out_dir / "localtime.csv",
                  ["x", "side", "epsilon", "notion", "value", "stderr"], rows)

    if ratio_reports:
        write_csv(out_dir / "ratio.csv",
                  ["x_j", "predicted", "estimated", "half_width"],
                  [[r.interface_x, r.predicted, r.estimated, r.half_width]
                   for r in ratio_reports])
        hist_rows = []
        for r in ratio_reports:
            ok = r.left.per_path > 0
            if not np.any(ok):
                continue
            ratios = r.right.per_path[ok] / r.left.per_path[ok]
            lo, hi = np.percentile(ratios, [1, 99])
            counts, edges = np.histogram(ratios, bins=40, range=(lo, hi))
            hist_rows += [[r.interface_x, edges[i], edges[i + 1], counts[i]]
                          for i in range(len(counts))]
        write_csv(out_dir / "ratio_hist.csv",
                  ["x_j", "bin_left", "bin_right", "count"], hist_rows)

    if ws._field is not None:
        fld = ws.field
        p = p_from_q(fld, ws.plan.engine.start)
        mass0 = coeff_at(ws.spec, ws.plan.engine.start, "left")[1]
        footer = (f"# mass_initial={fmt(mass0)} mass_final={fmt(fld.mass)} "
                  f"mass_drift={fmt(fld.max_mass_drift)}")
        write_csv(out_dir / "pde.csv", ["cell_center", "u", "p", "eta"],
                  [[fld.system.centers[i], fld.values[i], p[i], fld.system.eta_cell[i]]
                   for i in range(fld.system.n_cells)], footer=footer)

    write_csv(out_dir / "report.csv",
              ["name", "predicted", "observed", "tolerance", "passed"],
              [[r.name, r.predicted, r.observed, r.tolerance, r.passed]
               for r in report.results])
