"""Path simulation for the embedded chain, plus the skew-diffusion oracle.

Randomness is counter-based: every uniform is a hash of
(global seed, path index, draw index), so ensembles are reproducible and
independent of chunking or thread count, and any single path can be
replayed exactly (used for trace dumps).

Holding times are the chain's mean exit times (weak-approximation mode,
default) or exponential with that mean (Markov mode).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .chain import ChainModel
from .errors import DomainError, EstimationError
from .medium import MediumSpec, beta_ratio, coeff_at
from .scale import ScaleSpeed

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_STREAM_SALT = np.uint64(0x632BE59BD9B4E019)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53
_BLOCK_PATHS = 8192


@njit(inline="always", cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(inline="always", cache=True)
def _stream_key(seed, path_id):
    return _mix64(seed ^ _mix64(np.uint64(path_id) * _GOLDEN + _STREAM_SALT))


@njit(inline="always", cache=True)
def _uniform(key, draw):
    h = _mix64(key + np.uint64(draw) * _GOLDEN)
    return (h >> np.uint64(11)) * _TO_UNIT


@njit(cache=True, nogil=True)
def _walk_chunk(p_up, tau, start_idx, horizon, n_chunk, path_offset, seed,
                exp_mode, tracked, weights,
                total_occ, visits, tracked_occ, func_vals,
                final_node, touched, path_time):
    n_nodes = p_up.shape[0]
    n_tracked = tracked.shape[0]
    n_func = weights.shape[0]
    occ_row = np.zeros(n_nodes)
    for p in range(n_chunk):
        key = _stream_key(seed, path_offset + p)
        for i in range(n_nodes):
            occ_row[i] = 0.0
        node = start_idx
        clock = 0.0
        draw = np.uint64(0)
        hit = node == 0 or node == n_nodes - 1
        while True:
            hold = tau[node]
            if exp_mode:
                hold = -hold * math.log1p(-_uniform(key, draw))
                draw += np.uint64(1)
            remaining = horizon - clock
            visits[node] += 1
            if hold >= remaining:
                occ_row[node] += remaining
                break
            occ_row[node] += hold
            clock += hold
            if node == 0:
                node = 1
            elif node == n_nodes - 1:
                node = n_nodes - 2
            else:
                if _uniform(key, draw) < p_up[node]:
                    node += 1
                else:
                    node -= 1
                draw += np.uint64(1)
            if node == 0 or node == n_nodes - 1:
                hit = True
        final_node[p] = node
        touched[p] = hit
        total = 0.0
        for i in range(n_nodes):
            total_occ[i] += occ_row[i]
            total += occ_row[i]
        path_time[p] = total
        for i in range(n_tracked):
            tracked_occ[p, i] = occ_row[tracked[i]]
        for f in range(n_func):
            acc = 0.0
            for i in range(n_nodes):
                acc += weights[f, i] * occ_row[i]
            func_vals[p, f] = acc


@njit(cache=True, nogil=True)
def _trace_path(p_up, tau, start_idx, horizon, path_id, seed, exp_mode,
                nodes_out, holds_out):
    """Replay one path; fills the output arrays when non-empty, returns steps."""
    n_nodes = p_up.shape[0]
    key = _stream_key(seed, path_id)
    record = nodes_out.shape[0] > 0
    node = start_idx
    clock = 0.0
    draw = np.uint64(0)
    steps = 0
    done = False
    while not done:
        hold = tau[node]
        if exp_mode:
            hold = -hold * math.log1p(-_uniform(key, draw))
            draw += np.uint64(1)
        remaining = horizon - clock
        if hold >= remaining:
            hold = remaining
            done = True
        if record:
            nodes_out[steps] = node
            holds_out[steps] = hold
        steps += 1
        if not done:
            clock += hold
            if node == 0:
                node = 1
            elif node == n_nodes - 1:
                node = n_nodes - 2
            else:
                if _uniform(key, draw) < p_up[node]:
                    node += 1
                else:
                    node -= 1
                draw += np.uint64(1)
    return steps


@njit(cache=True, nogil=True)
def _first_exit_chunk(p_up, tau, start_idx, ia, ib, n_chunk, path_offset, seed,
                      exp_mode, max_steps, exit_hi, elapsed):
    n_nodes = p_up.shape[0]
    for p in range(n_chunk):
        key = _stream_key(seed, path_offset + p)
        node = start_idx
        clock = 0.0
        draw = np.uint64(0)
        ok = False
        for _ in range(max_steps):
            hold = tau[node]
            if exp_mode:
                hold = -hold * math.log1p(-_uniform(key, draw))
                draw += np.uint64(1)
            clock += hold
            if node == 0:
                node = 1
            elif node == n_nodes - 1:
                node = n_nodes - 2
            else:
                if _uniform(key, draw) < p_up[node]:
                    node += 1
                else:
                    node -= 1
                draw += np.uint64(1)
            if node == ia or node == ib:
                ok = True
                break
        exit_hi[p] = node == ib
        elapsed[p] = clock if ok else -1.0

@dataclass
class PathEnsemble:
    """Simulated trajectories reduced to occupation statistics.

    Aggregates cover every node; per-path occupation is kept only for the
    `tracked_nodes` (local-time probes need per-path window sums for
    standard errors, and tracking everything would not fit in memory).
    Optional functionals are per-path integrals sum_k w[k] * occ[k].
    """

    nodes: np.ndarray
    start_index: int
    horizon: float
    seed: int
    mode: str
    n_paths: int
    total_occupation: np.ndarray
    visit_count: np.ndarray
    tracked_nodes: np.ndarray
    tracked_occupation: np.ndarray
    final_node: np.ndarray
    touched_boundary: np.ndarray
    path_time: np.ndarray
    functional_names: tuple = ()
    functional_values: np.ndarray | None = None
    traces: list = field(default_factory=list)
    interface_positions: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def final_x(self) -> np.ndarray:
        return self.nodes[self.final_node]

    @property
    def boundary_fraction(self) -> float:
        return float(self.touched_boundary.mean())

    @property
    def start_x(self) -> float:
        return float(self.nodes[self.start_index])

    def tracked_position(self, node_index: int) -> int:
        pos = np.searchsorted(self.tracked_nodes, node_index)
        if pos >= len(self.tracked_nodes) or self.tracked_nodes[pos] != node_index:
            raise EstimationError(
                f"node {node_index} (x={self.nodes[node_index]:.6g}) was not "
                "tracked per-path; re-simulate with it in tracked_nodes")
        return int(pos)

    def functional(self, name: str) -> np.ndarray:
        try:
            idx = self.functional_names.index(name)
        except ValueError:
            raise EstimationError(f"no functional named {name!r} in ensemble") from None
        return self.functional_values[:, idx]


def simulate_paths(chain: ChainModel, start: float, horizon: float, n_paths: int,
                   seed: int, mode: str = "fixed",
                   tracked_nodes=None, functionals=None,
                   trace: int = 0, threads: int = 1) -> PathEnsemble:
    """Run `n_paths` independent trajectories of the chain up to `horizon`.

    `tracked_nodes` lists node indices whose occupation is recorded per
    path; `functionals` maps names to full-length node-weight arrays.
    Output is identical for any `threads` value.
    """
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if n_paths < 1:
        raise ValueError(f"need at least one path, got {n_paths}")
    if mode not in ("fixed", "exp"):
        raise ValueError(f"mode must be 'fixed' or 'exp', got {mode!r}")
    start_idx = chain.grid.index_of(start)
    n_nodes = chain.n_nodes
    tracked = (np.unique(np.asarray(tracked_nodes, dtype=np.int64))
               if tracked_nodes is not None and len(tracked_nodes) > 0
               else np.empty(0, dtype=np.int64))
    if len(tracked) and (tracked[0] < 0 or tracked[-1] >= n_nodes):
        raise DomainError("tracked node index out of range")
    functionals = dict(functionals) if functionals else {}
    names = tuple(functionals.keys())
    weights = (np.vstack([np.asarray(functionals[k], dtype=float) for k in names])
               if names else np.empty((0, n_nodes)))
    if weights.shape[1] != n_nodes:
        raise ValueError("functional weights must have one entry per node")

    p_up = np.ascontiguousarray(chain.p_up)
    tau = np.ascontiguousarray(chain.tau)
    total_occ = np.zeros(n_nodes)
    visits = np.zeros(n_nodes, dtype=np.int64)
    tracked_occ = np.empty((n_paths, len(tracked)))
    func_vals = np.empty((n_paths, len(names)))
    final_node = np.empty(n_paths, dtype=np.int64)
    touched = np.empty(n_paths, dtype=np.bool_)
    path_time = np.empty(n_paths)

    # fixed-size blocks keep the aggregate merge order, and hence every
    # output byte, independent of the thread count
    bounds = list(range(0, n_paths, _BLOCK_PATHS)) + [n_paths]
    seed_u = np.uint64(np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF))
    exp_mode = mode == "exp"

    def run_block(bi):
        lo, hi = bounds[bi], bounds[bi + 1]
        occ = np.zeros(n_nodes)
        vis = np.zeros(n_nodes, dtype=np.int64)
        _walk_chunk(p_up, tau, start_idx, float(horizon), hi - lo, lo, seed_u,
                    exp_mode, tracked, weights, occ, vis,
                    tracked_occ[lo:hi], func_vals[lo:hi],
                    final_node[lo:hi], touched[lo:hi], path_time[lo:hi])
        return occ, vis

    n_blocks = len(bounds) - 1
    if threads <= 1 or n_blocks == 1:
        partials = map(run_block, range(n_blocks))
        for occ, vis in partials:
            total_occ += occ
            visits += vis
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            for occ, vis in pool.map(run_block, range(n_blocks)):
                total_occ += occ
                visits += vis

    traces = []
    for path_id in range(min(trace, n_paths)):
        steps = _trace_path(p_up, tau, start_idx, float(horizon), path_id, seed_u,
                            exp_mode, np.empty(0, dtype=np.int64), np.empty(0))
        t_nodes = np.empty(steps, dtype=np.int64)
        t_holds = np.empty(steps)
        _trace_path(p_up, tau, start_idx, float(horizon), path_id, seed_u,
                    exp_mode, t_nodes, t_holds)
        traces.append((t_nodes, t_holds))

    return PathEnsemble(
        nodes=chain.grid.nodes.copy(), start_index=start_idx,
        horizon=float(horizon), seed=int(seed), mode=mode, n_paths=n_paths,
        total_occupation=total_occ, visit_count=visits,
        tracked_nodes=tracked, tracked_occupation=tracked_occ,
        final_node=final_node, touched_boundary=touched, path_time=path_time,
        functional_names=names, functional_values=func_vals, traces=traces,
        interface_positions=chain.spec.interface_positions())


def simulate_first_exit(chain: ChainModel, start: float, a: float, b: float,
                        n_paths: int, seed: int, mode: str = "fixed",
                        threads: int = 1, max_steps: int = 500_000_000):
    """First-exit Monte Carlo from the interval (a, b); both ends absorbing.

    Returns (exit_hi, elapsed): per-path flags for exiting through b and
    the accumulated holding time before absorption.
    """
    start_idx = chain.grid.index_of(start)
    ia, ib = chain.grid.index_of(a), chain.grid.index_of(b)
    if not ia < start_idx < ib:
        raise DomainError("start must lie strictly between the absorbing nodes")
    exit_hi = np.empty(n_paths, dtype=np.bool_)
    elapsed = np.empty(n_paths)
    seed_u = np.uint64(np.uint64(seed) & np.uint64(0xFFFFFFFFFFFFFFFF))
    exp_mode = mode == "exp"
    p_up = np.ascontiguousarray(chain.p_up)
    tau = np.ascontiguousarray(chain.tau)
    bounds = list(range(0, n_paths, _BLOCK_PATHS)) + [n_paths]

    def run_block(bi):
        lo, hi = bounds[bi], bounds[bi + 1]
        _first_exit_chunk(p_up, tau, start_idx, ia, ib, hi - lo, lo, seed_u,
                          exp_mode, max_steps, exit_hi[lo:hi], elapsed[lo:hi])

    n_blocks = len(bounds) - 1
    if threads <= 1 or n_blocks == 1:
        for bi in range(n_blocks):
            run_block(bi)
    else:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            list(pool.map(run_block, range(n_blocks)))
    if np.any(elapsed < 0):
        raise EstimationError("a path exceeded max_steps before exiting (a, b)")
    return exit_hi, elapsed


# ----------------------------------------------------------------------
# closed-form oracles for the single-interface piecewise-constant medium

def gaussian_kernel(t: float, z) -> np.ndarray:
    return np.exp(-np.square(z) / (2.0 * t)) / math.sqrt(2.0 * math.pi * t)


def skew_density_oracle(alpha: float, t: float, x: float, y) -> np.ndarray:
    """Transition density of skew Brownian motion with up-probability alpha.

    For x >= 0 the density at y is g_t(y - x) + sign(y)(2 alpha - 1)
    g_t(|x| + |y|); starting points x < 0 use the mirror identity.
    Vectorized over y.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if t <= 0:
        raise ValueError(f"t must be positive, got {t}")
    y = np.asarray(y, dtype=float)
    if x < 0:
        return skew_density_oracle(1.0 - alpha, t, -x, -y)
    return gaussian_kernel(t, y - x) + np.sign(y) * (2.0 * alpha - 1.0) \
        * gaussian_kernel(t, abs(x) + np.abs(y))


def transmission_probability(spec: MediumSpec) -> float:
    """Skew-motion up-probability for a single-interface constant medium.

    alpha weighs the one-sided sqrt(eta D) values by the inverse beta
    weights; exact only when D and eta are constant on each side.
    """
    if spec.n_interfaces != 1:
        raise DomainError("transmission probability needs exactly one interface")
    x0 = spec.interfaces[0].x
    d_minus, e_minus = coeff_at(spec, x0, "left")
    d_plus, e_plus = coeff_at(spec, x0, "right")
    ratio = beta_ratio(spec, 0)  # beta_plus / beta_minus
    w_plus = math.sqrt(e_plus * d_plus)
    w_minus = math.sqrt(e_minus * d_minus) * ratio
    return w_plus / (w_plus + w_minus)


def rescaled_skew_density(spec: MediumSpec, t: float, y, x0: float = 0.0) -> np.ndarray:
    """Density of the diffusion built from the single-interface medium.

    Push-forward of the skew oracle through z -> sqrt(D/eta) z; this is
    the transition density p(t, x0, y) for piecewise-constant media.
    """
    if spec.n_interfaces != 1 or spec.interfaces[0].x != 0.0:
        raise DomainError("rescaled oracle needs a single interface at 0")
    alpha = transmission_probability(spec)
    d_minus, e_minus = coeff_at(spec, 0.0, "left")
    d_plus, e_plus = coeff_at(spec, 0.0, "right")
    c_minus = math.sqrt(d_minus / e_minus)
    c_plus = math.sqrt(d_plus / e_plus)
    y = np.asarray(y, dtype=float)
    c_y = np.where(y > 0, c_plus, c_minus)
    z0 = x0 / (c_plus if x0 > 0 else c_minus)
    return skew_density_oracle(alpha, t, z0, y / c_y) / c_y


def splitting_estimate(ensemble: PathEnsemble, scale: ScaleSpeed,
                       x0: float = 0.0) -> tuple[float, float]:
    """Empirical P(X(t) > x0) with the interface-node mass split.

    Paths whose final node sits exactly at x0 are counted with the weight
    of the node cell's right-side share of the speed measure, which removes
    the O(h) bias of hard thresholding at an interface.
    """
    nodes = ensemble.nodes
    k0 = int(np.argmin(np.abs(nodes - x0)))
    fx = ensemble.final_x
    if abs(nodes[k0] - x0) > 1e-9 * max(1.0, abs(x0)):
        per_path = (fx > x0).astype(float)
    else:
        h_plus = nodes[k0 + 1] - nodes[k0] if k0 + 1 < len(nodes) else 0.0
        h_minus = nodes[k0] - nodes[k0 - 1] if k0 > 0 else 0.0
        m_plus = scale.m_prime(x0, "right") * h_plus
        m_minus = scale.m_prime(x0, "left") * h_minus
        w0 = m_plus / (m_plus + m_minus)
        per_path = np.where(ensemble.final_node == k0, w0,
                            (fx > x0).astype(float))
    p_hat = float(per_path.mean())
    stderr = float(per_path.std(ddof=1) / math.sqrt(len(per_path)))
    return p_hat, stderr


# ----------------------------------------------------------------------
# ensemble persistence (binary state next to the CSV summaries)

def save_ensemble(ensemble: PathEnsemble, path) -> None:
    trace_nodes = [tn for tn, _ in ensemble.traces]
    trace_holds = [th for _, th in ensemble.traces]
    np.savez_compressed(
        path,
        nodes=ensemble.nodes,
        start_index=ensemble.start_index,
        horizon=ensemble.horizon,
        seed=ensemble.seed,
        mode=ensemble.mode,
        n_paths=ensemble.n_paths,
        total_occupation=ensemble.total_occupation,
        visit_count=ensemble.visit_count,
        tracked_nodes=ensemble.tracked_nodes,
        tracked_occupation=ensemble.tracked_occupation,
        final_node=ensemble.final_node,
        touched_boundary=ensemble.touched_boundary,
        path_time=ensemble.path_time,
        functional_names=np.array(list(ensemble.functional_names)),
        functional_values=(ensemble.functional_values
                           if ensemble.functional_values is not None
                           else np.empty((ensemble.n_paths, 0))),
        trace_lengths=np.array([len(tn) for tn in trace_nodes], dtype=np.int64),
        trace_nodes=(np.concatenate(trace_nodes) if trace_nodes
                     else np.empty(0, dtype=np.int64)),
        trace_holds=np.concatenate(trace_holds) if trace_holds else np.empty(0),
        interface_positions=ensemble.interface_positions,
    )


def load_ensemble(path) -> PathEnsemble:
    with np.load(path, allow_pickle=False) as data:
        traces = []
        offset = 0
        for length in data["trace_lengths"]:
            traces.append((data["trace_nodes"][offset:offset + length].copy(),
                           data["trace_holds"][offset:offset + length].copy()))
            offset += int(length)
        return PathEnsemble(
            nodes=data["nodes"],
            start_index=int(data["start_index"]),
            horizon=float(data["horizon"]),
            seed=int(data["seed"]),
            mode=str(data["mode"]),
            n_paths=int(data["n_paths"]),
            total_occupation=data["total_occupation"],
            visit_count=data["visit_count"],
            tracked_nodes=data["tracked_nodes"],
            tracked_occupation=data["tracked_occupation"],
            final_node=data["final_node"],
            touched_boundary=data["touched_boundary"],
            path_time=data["path_time"],
            functional_names=tuple(str(s) for s in data["functional_names"]),
            functional_values=data["functional_values"],
            traces=traces,
            interface_positions=data["interface_positions"],
        )
