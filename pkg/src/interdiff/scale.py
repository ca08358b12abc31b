"""Scale function, speed density, and quadratic-variation rate of the medium.

On each piece j the densities are s'(x) = 2*phi_j / D(x) and
m'(x) = eta(x) / phi_j.  The scale function s integrates s' from the
anchor (the origin when it lies inside the window) and is cached at piece
endpoints so pointwise evaluation only quadratures within one piece.
"""

from __future__ import annotations

from bisect import bisect_right

import numpy as np

from .errors import DomainError
from .medium import MediumSpec, PhiSequence, Side, phi_sequence
from .quadrature import adaptive_simpson

QUAD_TOL = 1e-13
INVERSE_TOL = 1e-12


class ScaleSpeed:
    """Cached scale/speed maps for one immutable medium.

    Construction integrates s' over every piece once; all later queries
    are O(1) plus local quadrature, so the object is cheap to share and
    safe for concurrent reads.
    """

    def __init__(self, spec: MediumSpec, phi: PhiSequence | None = None):
        self.spec = spec
        self.phi = phi if phi is not None else phi_sequence(spec)
        self._piece_lefts = [p.left for p in spec.pieces]
        self._piece_integrals = [
            adaptive_simpson(self._s_prime_on_piece(i), p.left, p.right, QUAD_TOL)
            for i, p in enumerate(spec.pieces)
        ]
        edges = np.concatenate([[0.0], np.cumsum(self._piece_integrals)])
        y_min, y_max = spec.window
        anchor = 0.0 if y_min <= 0.0 <= y_max else y_min
        idx = spec.piece_index_at(anchor, "left")
        piece = spec.pieces[idx]
        offset = edges[idx] + adaptive_simpson(
            self._s_prime_on_piece(idx), piece.left, anchor, QUAD_TOL)
        self._s_edges = edges - offset

    def _s_prime_on_piece(self, list_index: int):
        phi = self.phi.for_piece(self.spec, list_index)
        piece = self.spec.pieces[list_index]
        return lambda x: 2.0 * phi / piece.d_at(x)

    def _m_prime_on_piece(self, list_index: int):
        phi = self.phi.for_piece(self.spec, list_index)
        piece = self.spec.pieces[list_index]
        return lambda x: piece.eta_at(x) / phi

    # ------------------------------------------------------------------
    # densities

    def s_prime(self, x: float, side: Side = "right") -> float:
        idx = self.spec.piece_index_at(x, side)
        return self._s_prime_on_piece(idx)(x)

    def m_prime(self, x: float, side: Side = "right") -> float:
        idx = self.spec.piece_index_at(x, side)
        return self._m_prime_on_piece(idx)(x)

    def qv_rate(self, x: float, side: Side = "right") -> float:
        """Quadratic-variation rate q = D/eta = 2/(m' s')."""
        idx = self.spec.piece_index_at(x, side)
        piece = self.spec.pieces[idx]
        return piece.d_at(x) / piece.eta_at(x)

    def densities_at(self, x: float, side: Side = "right") -> tuple[float, float, float]:
        """(s', m', q) at x from the requested side."""
        return self.s_prime(x, side), self.m_prime(x, side), self.qv_rate(x, side)

    # ------------------------------------------------------------------
    # scale function and its inverse

    def scale_value(self, x: float) -> float:
        """s(x), with s(0) = 0 when the origin lies inside the window."""
        idx = self.spec.piece_index_at(x, "left")
        piece = self.spec.pieces[idx]
        return self._s_edges[idx] + adaptive_simpson(
            self._s_prime_on_piece(idx), piece.left, x, QUAD_TOL)

    def scale_image(self) -> tuple[float, float]:
        return float(self._s_edges[0]), float(self._s_edges[-1])

    def inverse_scale_value(self, u: float) -> float:
        """Monotone inverse: x with s(x) = u, by safeguarded Newton."""
        lo, hi = self.scale_image()
        tol = INVERSE_TOL * (1.0 + abs(u))
        if u < lo - tol or u > hi + tol:
            raise DomainError(f"u={u!r} outside the scale image [{lo}, {hi}]")
        u = min(max(u, lo), hi)
        idx = min(bisect_right(self._s_edges, u), len(self.spec.pieces)) - 1
        idx = max(idx, 0)
        piece = self.spec.pieces[idx]
        a, b = piece.left, piece.right
        x = a + (b - a) * (u - self._s_edges[idx]) / max(
            self._s_edges[idx + 1] - self._s_edges[idx], np.finfo(float).tiny)
        x = min(max(x, a), b)
        for _ in range(100):
            f = self.scale_value(x) - u
            if abs(f) <= tol:
                return x
            if f > 0:
                b = x
            else:
                a = x
            step = f / self.s_prime(x, "right" if x < piece.right else "left")
            x_newton = x - step
            x = x_newton if a < x_newton < b else 0.5 * (a + b)
        return x

    # ------------------------------------------------------------------
    # derived quantities

    def speed_density_in_scale(self, u: float, side: Side = "right") -> float:
        """Speed density of the scale-transformed process at scale point u."""
        x = self.inverse_scale_value(u)
        return self.m_prime(x, side) / self.s_prime(x, side)

    def speed_measure(self, a: float, b: float) -> float:
        """Integral of m' over (a, b), split at interior interfaces."""
        if b < a:
            raise DomainError(f"empty speed interval ({a}, {b})")
        cuts = [a] + [x for x in self.spec.interface_positions() if a < x < b] + [b]
        total = 0.0
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            idx = self.spec.piece_index_at(0.5 * (lo + hi), "right")
            total += adaptive_simpson(self._m_prime_on_piece(idx), lo, hi, QUAD_TOL)
        return total

    def scale_between(self, a: float, b: float) -> float:
        """s(b) - s(a) without the anchor, handy for exit probabilities."""
        return self.scale_value(b) - self.scale_value(a)

    def exit_probability(self, x: float, a: float, b: float) -> float:
        """P(hit b before a | start at x) = (s(x)-s(a)) / (s(b)-s(a))."""
        if not a < x < b:
            raise DomainError(f"need a < x < b, got a={a}, x={x}, b={b}")
        return self.scale_between(a, x) / self.scale_between(a, b)

    def tabulate(self, xs: np.ndarray) -> list[dict[str, float]]:
        """Rows of one-sided densities and s for the given coordinates."""
        rows = []
        for x in xs:
            rows.append({
                "x": float(x),
                "s_prime_left": self.s_prime(x, "left"),
                "s_prime_right": self.s_prime(x, "right"),
                "m_prime_left": self.m_prime(x, "left"),
                "m_prime_right": self.m_prime(x, "right"),
                "s": self.scale_value(x),
            })
        return rows
