"""Adaptive Simpson quadrature."""

from __future__ import annotations

import numpy as np


def adaptive_simpson(f, a: float, b: float, tol: float = 1e-10, max_depth: int = 60) -> tuple[float, float]:
    """Integrate ``f`` over [a, b] to absolute tolerance ``tol``.

    Returns (value, error_estimate).  Uses an explicit stack and the usual
    |S2 - S1| <= 15 tol acceptance with Richardson correction.
    """
    if a == b:
        return 0.0, 0.0
    fa, fb = f(a), f(b)
    c = 0.5 * (a + b)
    fc = f(c)
    whole = (b - a) / 6.0 * (fa + 4 * fc + fb)
    stack = [(a, b, fa, fb, fc, whole, tol, 0)]
    total = 0.0
    err = 0.0
    while stack:
        a, b, fa, fb, fc, whole, eps, depth = stack.pop()
        c = 0.5 * (a + b)
        d, e = 0.5 * (a + c), 0.5 * (c + b)
        fd, fe = f(d), f(e)
        left = (c - a) / 6.0 * (fa + 4 * fd + fc)
        right = (b - c) / 6.0 * (fc + 4 * fe + fb)
        delta = left + right - whole
        if depth >= max_depth or abs(delta) <= 15 * eps:
            total += left + right + delta / 15.0
            err += abs(delta) / 15.0
        else:
            stack.append((a, c, fa, fc, fd, left, eps / 2, depth + 1))
            stack.append((c, b, fc, fb, fe, right, eps / 2, depth + 1))
    return total, err


def cumulative_integral(f, knots, tol: float = 1e-10) -> tuple[np.ndarray, float]:
    """Running integral of ``f`` from knots[0] to each knot, segment by segment."""
    knots = np.asarray(knots, dtype=float)
    out = np.zeros(len(knots))
    err = 0.0
    for j in range(1, len(knots)):
        v, e = adaptive_simpson(f, knots[j - 1], knots[j], tol)
        out[j] = out[j - 1] + v
        err += e
    return out, err
