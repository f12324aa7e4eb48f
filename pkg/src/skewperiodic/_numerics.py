"""Small scalar root-finding and minimisation helpers.

All routines accept functions that may return ``+inf`` or ``-inf`` and only
rely on the sign (root finding) or the ordering (minimisation) of the values.
"""
from __future__ import annotations

import math
from typing import Callable, Optional

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def bisect_sign(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-12,
    max_iter: int = 400,
    f_lo: Optional[float] = None,
    f_hi: Optional[float] = None,
) -> float:
    """Locate a sign change of ``f`` on ``[lo, hi]`` by bisection.

    ``f(lo)`` and ``f(hi)`` must have opposite signs (zero counts as either).
    Infinite values are allowed.
    """
    a, b = float(lo), float(hi)
    fa = f(a) if f_lo is None else f_lo
    fb = f(b) if f_hi is None else f_hi
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if (fa > 0) == (fb > 0):
        raise ValueError("no sign change on the bracket")
    for _ in range(max_iter):
        if b - a <= tol * max(1.0, abs(a), abs(b)) and b - a <= tol:
            break
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b, fb = m, fm
    return 0.5 * (a + b)


def bisect_predicate(pred: Callable[[float], bool], lo: float, hi: float, tol: float = 1e-9) -> float:
    """Boundary between ``pred(lo) == True`` and ``pred(hi) == False``."""
    a, b = float(lo), float(hi)
    while b - a > tol:
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        if pred(m):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def golden_section_min(
    f: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200
) -> tuple[float, float]:
    """Minimise a unimodal ``f`` on ``[lo, hi]``. Returns ``(x, f(x))``."""
    a, b = float(lo), float(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    best = min((fc, c), (fd, d))
    return best[1], best[0]


def fsum_dot(values, weights) -> float:
    """Correctly rounded sum of ``values * weights``."""
    return math.fsum((values * weights).tolist())
