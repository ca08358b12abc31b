"""Embedded Markov chain: grid, exit probabilities, and mean holding times.

Interior node k moves to a neighbour with probability read off the scale
function, p_up = (s_k - s_{k-1}) / (s_{k+1} - s_{k-1}), and holds for the
mean exit time of (y_{k-1}, y_{k+1}), computed as the Green-function
integral of the speed density.  Window bounds reflect: the boundary node
always steps inward after the one-sided holding time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import DomainError
from .medium import MediumSpec
from .quadrature import adaptive_simpson, gauss_points
from .scale import ScaleSpeed

NODE_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Strictly increasing nodes covering the window, interfaces included.

    `cell_piece[k]` is the piece list index of the open cell
    (nodes[k], nodes[k+1]); cells never straddle an interface.
    """

    nodes: np.ndarray
    interface_nodes: np.ndarray
    cell_piece: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def index_of(self, x: float) -> int:
        """Node index for a coordinate that must sit on the grid."""
        k = int(np.argmin(np.abs(self.nodes - x)))
        scale = max(1.0, abs(x))
        if abs(self.nodes[k] - x) > NODE_MATCH_TOL * scale:
            raise DomainError(f"x={x!r} is not a grid node (nearest: {self.nodes[k]!r})")
        return k


def build_grid(spec: MediumSpec, h: float) -> Grid:
    """Uniform-per-piece grid with target spacing h.

    Each piece is split into ceil(length/h) equal cells so interfaces and
    window bounds land on nodes exactly.
    """
    if h <= 0:
        raise ValueError(f"target spacing must be positive, got {h}")
    lengths = [p.right - p.left for p in spec.pieces]
    if h > min(lengths):
        raise ValueError(
            f"h={h} too large: it must not exceed the narrowest piece "
            f"(length {min(lengths)})")
    node_blocks = []
    cell_piece = []
    for idx, piece in enumerate(spec.pieces):
        n_sub = max(1, math.ceil((piece.right - piece.left) / h - 1e-12))
        block = np.linspace(piece.left, piece.right, n_sub + 1)
        node_blocks.append(block if idx == 0 else block[1:])
        cell_piece.extend([idx] * n_sub)
    nodes = np.concatenate(node_blocks)
    positions = spec.interface_positions()
    interface_nodes = np.array(
        [int(np.argmin(np.abs(nodes - x))) for x in positions], dtype=np.int64)
    return Grid(nodes, interface_nodes, np.asarray(cell_piece, dtype=np.int64))


@dataclass(frozen=True)
class ChainModel:
    """Per-node step law of the embedded chain (reflecting boundaries)."""

    grid: Grid
    p_up: np.ndarray
    tau: np.ndarray
    s_nodes: np.ndarray
    spec: MediumSpec
    scale: ScaleSpeed

    @property
    def n_nodes(self) -> int:
        return self.grid.n_nodes


def _cell_green_integrals(scale: ScaleSpeed, piece_idx: int,
                          y_lo: float, y_hi: float,
                          s_lo: float, s_hi: float) -> tuple[float, float]:
    """(integral of (s - s_lo) m' dy, integral of (s_hi - s) m' dy) over a cell."""
    m_prime = scale._m_prime_on_piece(piece_idx)
    s_prime = scale._s_prime_on_piece(piece_idx)
    ys, ws = gauss_points(y_lo, y_hi)
    up = down = 0.0
    for y, w in zip(ys, ws):
        s_val = s_lo + adaptive_simpson(s_prime, y_lo, y, 1e-14)
        m_val = m_prime(y)
        up += w * (s_val - s_lo) * m_val
        down += w * (s_hi - s_val) * m_val
    return up, down


def chain_parameters(spec: MediumSpec, grid: Grid,
                     scale: ScaleSpeed | None = None) -> ChainModel:
    """Exit probabilities and mean holding times for every node."""
    if scale is None:
        scale = ScaleSpeed(spec)
    nodes = grid.nodes
    n = len(nodes)
    s_nodes = np.array([scale.scale_value(x) for x in nodes])

    # per-cell Green integrals shared by the two adjacent nodes
    rise = np.empty(n - 1)   # integral of (s - s_left) m' over cell k
    fall = np.empty(n - 1)   # integral of (s_right - s) m' over cell k
    for k in range(n - 1):
        rise[k], fall[k] = _cell_green_integrals(
            scale, int(grid.cell_piece[k]), nodes[k], nodes[k + 1],
            s_nodes[k], s_nodes[k + 1])

    p_up = np.empty(n)
    tau = np.empty(n)
    for k in range(1, n - 1):
        ds_lo = s_nodes[k] - s_nodes[k - 1]
        ds_hi = s_nodes[k + 1] - s_nodes[k]
        p_up[k] = ds_lo / (ds_lo + ds_hi)
        tau[k] = (ds_hi * rise[k - 1] + ds_lo * fall[k]) / (ds_lo + ds_hi)
    p_up[0], p_up[n - 1] = 1.0, 0.0
    tau[0] = fall[0]          # reflected at y_min: E[time to reach node 1]
    tau[n - 1] = rise[n - 2]  # reflected at y_max
    if not np.all((p_up[1:-1] > 0.0) & (p_up[1:-1] < 1.0)):
        raise DomainError("exit probabilities left (0, 1); scale not increasing?")
    if not np.all(tau > 0.0):
        raise DomainError("non-positive holding time; speed quadrature failed")
    return ChainModel(grid, p_up, tau, s_nodes, spec, scale)


def mean_exit_time(scale: ScaleSpeed, x: float, a: float, b: float) -> float:
    """Green-function quadrature for the expected exit time of (a, b) from x."""
    if not a < x < b:
        raise DomainError(f"need a < x < b, got a={a}, x={x}, b={b}")
    s_a, s_x, s_b = (scale.scale_value(v) for v in (a, x, b))

    def split_segments(lo, hi):
        cuts = [lo] + [p for p in scale.spec.interface_positions() if lo < p < hi] + [hi]
        return zip(cuts[:-1], cuts[1:])

    up = sum(adaptive_simpson(
        lambda y, lo=lo, hi=hi: (scale.scale_value(y) - s_a)
        * scale.m_prime(y, "right" if y < hi else "left"),
        lo, hi, 1e-12) for lo, hi in split_segments(a, x))
    down = sum(adaptive_simpson(
        lambda y, lo=lo, hi=hi: (s_b - scale.scale_value(y))
        * scale.m_prime(y, "right" if y < hi else "left"),
        lo, hi, 1e-12) for lo, hi in split_segments(x, b))
    return ((s_b - s_x) * up + (s_x - s_a) * down) / (s_b - s_a)


def _tridiag_solve(sub: np.ndarray, diag: np.ndarray, sup: np.ndarray,
                   rhs: np.ndarray) -> np.ndarray:
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = sup[:-1]
    ab[1, :] = diag
    ab[2, :-1] = sub[1:]
    return solve_banded((1, 1), ab, rhs)


def absorption_probabilities(chain: ChainModel, ia: int, ib: int) -> np.ndarray:
    """P(hit node ib before node ia) for every node in [ia, ib], by direct solve.

    Independent of the scale function: uses only the chain's p_up, so it
    serves as a brute-force oracle for the s-ratio identity.
    """
    if not 0 <= ia < ib < chain.n_nodes:
        raise DomainError(f"need 0 <= ia < ib < n_nodes, got {ia}, {ib}")
    m = ib - ia + 1
    diag = np.ones(m)
    sub = np.zeros(m)
    sup = np.zeros(m)
    rhs = np.zeros(m)
    rhs[-1] = 1.0
    for i in range(1, m - 1):
        p = chain.p_up[ia + i]
        sub[i] = -(1.0 - p)
        sup[i] = -p
    return _tridiag_solve(sub, diag, sup, rhs)


def chain_mean_exit_times(chain: ChainModel, ia: int, ib: int) -> np.ndarray:
    """Expected time to leave (ia, ib) for every node in [ia, ib], by direct solve."""
    if not 0 <= ia < ib < chain.n_nodes:
        raise DomainError(f"need 0 <= ia < ib < n_nodes, got {ia}, {ib}")
    m = ib - ia + 1
    diag = np.ones(m)
    sub = np.zeros(m)
    sup = np.zeros(m)
    rhs = np.zeros(m)
    for i in range(1, m - 1):
        p = chain.p_up[ia + i]
        sub[i] = -(1.0 - p)
        sup[i] = -p
        rhs[i] = chain.tau[ia + i]
    return _tridiag_solve(sub, diag, sup, rhs)
