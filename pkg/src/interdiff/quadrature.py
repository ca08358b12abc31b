"""Scalar quadrature helpers: adaptive Simpson and fixed Gauss-Legendre."""

from __future__ import annotations

from typing import Callable

import numpy as np

_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(20)


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-12, max_depth: int = 40) -> float:
    """Integrate f over [a, b] by adaptive Simpson bisection.

    The interval is split until the Richardson error estimate of each
    subinterval drops below its share of `tol`.  Suitable for smooth
    integrands; the callers only pass functions that are smooth within
    a single coefficient piece.
    """
    if a == b:
        return 0.0
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth)


def _simpson_rec(f, a, b, fa, fm, fb, whole, tol, depth):
    m = 0.5 * (a + b)
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    err = left + right - whole
    if depth <= 0 or abs(err) <= 15.0 * tol:
        return left + right + err / 15.0
    return (_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + _simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1))


def gauss_points(a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """20-point Gauss-Legendre nodes and weights mapped to [a, b]."""
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return mid + half * _GAUSS_NODES, half * _GAUSS_WEIGHTS
