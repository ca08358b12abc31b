"""Local-time estimators and the interface jump-ratio predictions.

Three notions of local time are handled: natural (occupation density per
unit length), semimartingale (per unit quadratic variation) and diffusion
(per unit speed measure).  They differ by the one-sided factors q = D/eta
and m'; natural local time is the one that jumps at interfaces, with the
ratio predicted by the medium's coefficients and transmission weight.

Window estimates use half-open windows (x, x+eps] and [x-eps, x): summing
full node tallies over the nodes inside such a window approximates the
window occupation with an O(h) error that is linear in eps, which the
linear-in-eps extrapolation then removes along with the O(eps) bias of
the window itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, EstimationError
from .medium import MediumSpec, Side, coeff_at
from .paths import PathEnsemble
from .scale import ScaleSpeed

NOTIONS = ("nlt", "smlt", "dlt")


def default_epsilons(h: float) -> tuple[float, float, float]:
    """Window ladder tied to the grid spacing: each window holds >= 2 nodes."""
    return (8.0 * h, 4.0 * h, 2.0 * h)


def window_node_indices(nodes: np.ndarray, interfaces: np.ndarray,
                        x: float, side: Side, epsilon: float) -> np.ndarray:
    """Grid nodes inside the one-sided window, rejecting straddled interfaces."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    tol = 1e-9 * max(1.0, abs(x) + epsilon)
    if side == "right":
        lo, hi = x + tol, x + epsilon + tol
        if hi > nodes[-1] + 2 * tol:
            raise DomainError(f"window ({x}, {x + epsilon}] leaves the grid")
    else:
        lo, hi = x - epsilon - tol, x - tol
        if lo < nodes[0] - 2 * tol:
            raise DomainError(f"window [{x - epsilon}, {x}) leaves the grid")
    for p in interfaces:
        if lo < p <= hi if side == "right" else lo <= p < hi:
            raise EstimationError(
                f"window at x={x} ({side}, eps={epsilon}) straddles the "
                f"interface at {p}; probe the two sides separately")
    first = int(np.searchsorted(nodes, lo, side="left"))
    last = int(np.searchsorted(nodes, hi, side="right"))
    idx = np.arange(first, last, dtype=np.int64)
    if len(idx) == 0:
        raise EstimationError(
            f"window at x={x} ({side}, eps={epsilon}) contains no grid node")
    return idx


def nodes_for_probe(nodes: np.ndarray, x: float, max_epsilon: float) -> np.ndarray:
    """Node indices to track per-path so that x can be probed up to max_epsilon."""
    tol = 1e-9 * max(1.0, abs(x) + max_epsilon)
    lo = np.searchsorted(nodes, x - max_epsilon - tol, side="left")
    hi = np.searchsorted(nodes, x + max_epsilon + tol, side="right")
    return np.arange(lo, hi, dtype=np.int64)


@dataclass
class WindowStat:
    """Per-window occupation time: ensemble mean, stderr, per-path sums."""

    value: float
    stderr: float
    per_path: np.ndarray
    node_indices: np.ndarray


def _per_path_window(ensemble: PathEnsemble, idx: np.ndarray,
                     node_weights: np.ndarray | None = None) -> np.ndarray:
    cols = np.array([ensemble.tracked_position(int(k)) for k in idx])
    block = ensemble.tracked_occupation[:, cols]
    if node_weights is not None:
        return block @ node_weights
    return block.sum(axis=1)


def window_occupation(ensemble: PathEnsemble, x: float, side: Side,
                      epsilon: float) -> WindowStat:
    """Ensemble-averaged holding time spent at nodes inside the window."""
    idx = window_node_indices(ensemble.nodes, ensemble.interface_positions,
                              x, side, epsilon)
    per_path = _per_path_window(ensemble, idx)
    n = len(per_path)
    stderr = float(per_path.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return WindowStat(float(per_path.mean()), stderr, per_path, idx)


@dataclass
class LocalTimeEstimate:
    """One-sided local time at x, extrapolated over a window ladder.

    `value`/`stderr` are the linear-in-eps extrapolation to eps -> 0;
    the raw per-window estimates are kept in `ladder_values`.  `epsilon`
    is the finest window used.
    """

    x: float
    side: Side
    notion: str
    value: float
    stderr: float
    epsilon: float
    epsilons: tuple
    ladder_values: tuple
    ladder_stderrs: tuple
    per_path: np.ndarray = field(repr=False, default=None)


def _extrapolation_weights(widths: np.ndarray) -> np.ndarray:
    """Least-squares weights mapping ladder values to the zero-width intercept."""
    if len(widths) == 1:
        return np.array([1.0])
    design = np.column_stack([np.ones_like(widths), widths])
    pseudo = np.linalg.pinv(design)
    return pseudo[0]


def _side_spacing(ensemble: PathEnsemble, x: float, side: Side,
                  epsilon: float) -> float:
    """Distance from x to the first tallied node on the given side."""
    idx = window_node_indices(ensemble.nodes, ensemble.interface_positions,
                              x, side, epsilon)
    if side == "right":
        return float(ensemble.nodes[idx[0]] - x)
    return float(x - ensemble.nodes[idx[-1]])


def nlt_estimate(ensemble: PathEnsemble, x: float, side: Side,
                 epsilons) -> LocalTimeEstimate:
    """Natural local time at (x, side): window occupation over window width.

    The estimate for each eps is the per-path window sum divided by eps.
    Node tallies over (x, x+eps] cover (x+h/2, x+eps+h/2) for spacing h,
    so the zero-width limit is taken by regressing against the effective
    covered width eps+h; the standard error is taken across per-path
    extrapolated values.
    """
    eps = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    if len(eps) == 0:
        raise ValueError("need at least one epsilon")
    cols = []
    for e in eps:
        stat = window_occupation(ensemble, x, side, float(e))
        cols.append(stat.per_path / e)
    values = np.column_stack(cols)          # (n_paths, n_eps)
    weights = _extrapolation_weights(eps + _side_spacing(ensemble, x, side, eps[-1]))
    per_path = values @ weights
    n = len(per_path)
    value = float(per_path.mean())
    stderr = float(per_path.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    ladder = values.mean(axis=0)
    ladder_se = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 \
        else np.zeros(len(eps))
    return LocalTimeEstimate(
        x=float(x), side=side, notion="nlt",
        value=max(value, 0.0), stderr=stderr,
        epsilon=float(eps[-1]), epsilons=tuple(float(e) for e in eps),
        ladder_values=tuple(float(v) for v in ladder),
        ladder_stderrs=tuple(float(v) for v in ladder_se),
        per_path=per_path)


def smlt_direct(ensemble: PathEnsemble, scale: ScaleSpeed, x: float, side: Side,
                epsilons) -> LocalTimeEstimate:
    """Semimartingale local time tallied directly with per-node q weights."""
    eps = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    cols = []
    for e in eps:
        idx = window_node_indices(ensemble.nodes, ensemble.interface_positions,
                                  x, side, float(e))
        q_nodes = np.array([scale.qv_rate(ensemble.nodes[k], side) for k in idx])
        cols.append(_per_path_window(ensemble, idx, q_nodes) / e)
    values = np.column_stack(cols)
    weights = _extrapolation_weights(eps + _side_spacing(ensemble, x, side, eps[-1]))
    per_path = values @ weights
    n = len(per_path)
    ladder = values.mean(axis=0)
    ladder_se = values.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 \
        else np.zeros(len(eps))
    return LocalTimeEstimate(
        x=float(x), side=side, notion="smlt",
        value=max(float(per_path.mean()), 0.0),
        stderr=float(per_path.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
        epsilon=float(eps[-1]), epsilons=tuple(float(e) for e in eps),
        ladder_values=tuple(float(v) for v in ladder),
        ladder_stderrs=tuple(float(v) for v in ladder_se),
        per_path=per_path)


def convert_lt(est: LocalTimeEstimate, target: str,
               scale: ScaleSpeed) -> LocalTimeEstimate:
    """Convert between local-time notions with the one-sided q and m'.

    nlt -> smlt multiplies by q(x, side); nlt -> dlt divides by m'(x, side);
    all other conversions compose these, so round trips are identities up
    to floating-point rounding.
    """
    if est.notion not in NOTIONS:
        raise ValueError(f"unknown source notion {est.notion!r}")
    if target not in NOTIONS:
        raise ValueError(f"unknown target notion {target!r}")
    if target == est.notion:
        return est
    q = scale.qv_rate(est.x, est.side)
    m = scale.m_prime(est.x, est.side)
    to_nlt = {"nlt": 1.0, "smlt": 1.0 / q, "dlt": m}
    from_nlt = {"nlt": 1.0, "smlt": q, "dlt": 1.0 / m}
    factor = to_nlt[est.notion] * from_nlt[target]
    return LocalTimeEstimate(
        x=est.x, side=est.side, notion=target,
        value=est.value * factor, stderr=est.stderr * factor,
        epsilon=est.epsilon, epsilons=est.epsilons,
        ladder_values=tuple(v * factor for v in est.ladder_values),
        ladder_stderrs=tuple(v * factor for v in est.ladder_stderrs),
        per_path=est.per_path * factor if est.per_path is not None else None)


def predicted_ratio(spec: MediumSpec, j: int) -> float:
    """Right/left natural-local-time jump ratio predicted at interface j.

    Equals [eta+ / eta-] [D- / D+] [lambda / (1 - lambda)]; with beta
    weights this reduces to [eta+ / eta-] [beta- / beta+].
    """
    itf = spec.interfaces[j]
    if itf.lam is None:
        raise DomainError(f"interface {j} has no lambda (derive it first)")
    d_minus, e_minus = coeff_at(spec, itf.x, "left")
    d_plus, e_plus = coeff_at(spec, itf.x, "right")
    return (e_plus / e_minus) * (d_minus / d_plus) * (itf.lam / (1.0 - itf.lam))


@dataclass
class JumpRatioReport:
    """Estimated vs predicted local-time ratio at one interface."""

    interface_index: int
    interface_x: float
    predicted: float
    estimated: float
    half_width: float
    epsilons: tuple
    ratios_per_epsilon: tuple
    right: LocalTimeEstimate = field(repr=False, default=None)
    left: LocalTimeEstimate = field(repr=False, default=None)

    @property
    def consistent(self) -> bool:
        return abs(self.estimated - self.predicted) <= self.half_width


def estimate_ratio(ensemble: PathEnsemble, scale: ScaleSpeed, j: int,
                   epsilons) -> JumpRatioReport:
    """Ratio of right/left extrapolated natural local times at interface j.

    The confidence half-width is 3 sigma by the delta method, using the
    per-path covariance of the two extrapolated estimates.
    """
    spec = scale.spec
    x_j = spec.interfaces[j].x
    right = nlt_estimate(ensemble, x_j, "right", epsilons)
    left = nlt_estimate(ensemble, x_j, "left", epsilons)
    if left.value <= 0.0 or not np.any(left.per_path > 0):
        raise EstimationError(
            f"zero left-side occupation at interface {j} (x={x_j}); "
            "ratio undefined")
    a_plus, a_minus = right.value, left.value
    n = len(right.per_path)
    cov = np.cov(right.per_path, left.per_path, ddof=1) / n
    var_ratio = (cov[0, 0] / a_minus**2
                 + (a_plus**2) * cov[1, 1] / a_minus**4
                 - 2.0 * a_plus * cov[0, 1] / a_minus**3)
    ratios = tuple(
        rv / lv if lv > 0 else math.inf
        for rv, lv in zip(right.ladder_values, left.ladder_values))
    return JumpRatioReport(
        interface_index=j, interface_x=float(x_j),
        predicted=predicted_ratio(spec, j),
        estimated=a_plus / a_minus,
        half_width=3.0 * math.sqrt(max(var_ratio, 0.0)),
        epsilons=right.epsilons, ratios_per_epsilon=ratios,
        right=right, left=left)


@dataclass
class ContinuityProbe:
    """Left/right agreement of (possibly normalized) local time at x."""

    x: float
    right_value: float
    left_value: float
    gap: float
    gap_stderr: float
    normalized: bool

    @property
    def within(self) -> float:
        """Gap measured in standard errors (0 when both sides are zero)."""
        if self.gap_stderr == 0.0:
            return 0.0 if self.gap == 0.0 else math.inf
        return abs(self.gap) / self.gap_stderr


def continuity_probe(ensemble: PathEnsemble, scale: ScaleSpeed, x: float,
                     epsilons, normalize: bool | None = None) -> ContinuityProbe:
    """Compare right and left local-time extrapolations at x.

    At interfaces the raw natural local time jumps, but dividing by the
    one-sided m' restores continuity; `normalize` defaults to True exactly
    when x is an interface.
    """
    interfaces = scale.spec.interface_positions()
    is_interface = bool(len(interfaces)) and bool(
        np.any(np.abs(interfaces - x) <= 1e-12 * max(1.0, abs(x))))
    if normalize is None:
        normalize = is_interface
    right = nlt_estimate(ensemble, x, "right", epsilons)
    left = nlt_estimate(ensemble, x, "left", epsilons)
    r_per, l_per = right.per_path, left.per_path
    if normalize:
        r_per = r_per / scale.m_prime(x, "right")
        l_per = l_per / scale.m_prime(x, "left")
    diff = r_per - l_per
    n = len(diff)
    gap_se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return ContinuityProbe(
        x=float(x),
        right_value=float(r_per.mean()),
        left_value=float(l_per.mean()),
        gap=float(diff.mean()),
        gap_stderr=gap_se,
        normalized=bool(normalize))
