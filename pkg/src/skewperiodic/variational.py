"""Skewed pressures over Z and N, critical exponents and the drift-zero curve.

``P(g, Z)`` is the infimum of ``q -> P(g + q psi)`` over all real ``q`` and
``P(g, N)`` the infimum over ``q <= 0``.  Both use the convexity of that map:
the minimiser is the zero of the drift ``dP/dq`` when it is available, and a
bounded scalar search otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from ._numerics import bisect_sign
from .pressure import PressureValue, convergence_boundary, cylinder_pressure, moment_sums, series_pressure
from .systems import SystemSpec

__all__ = [
    "SkewPressureResult",
    "CriticalExponents",
    "skew_pressure_Z",
    "skew_pressure_N",
    "critical_exponent",
    "critical_exponents",
    "q_of_s",
    "root_in_s",
    "CYLINDER_DEFAULTS",
]

ESCAPE_Q = -40.0
WALL_GAP = 1e-9
CYLINDER_DEFAULTS = {"depth": 8, "branch_cutoff": 200, "grid": 1024, "method": "transfer"}


@dataclass(frozen=True)
class SkewPressureResult:
    """``value`` of the skewed pressure with the location of the infimum.

    ``flag`` is one of ``interior``, ``boundary_at_zero``, ``boundary_at_wall``,
    ``escapes_to_minus_infinity``, ``escapes_to_plus_infinity`` or
    ``divergent``; ``case_selected`` is ``Z``, ``base`` or ``both``.
    """

    value: float
    minimizer_q: Optional[float]
    flag: str
    case_selected: str
    diagnostics: Optional[PressureValue]
    extension: str = "Z"

    def to_dict(self) -> dict:
        return {
            "extension": self.extension,
            "value": self.value,
            "minimizer_q": self.minimizer_q,
            "flag": self.flag,
            "case_selected": self.case_selected,
            "diagnostics": None if self.diagnostics is None else self.diagnostics.to_dict(),
        }


@dataclass(frozen=True)
class CriticalExponents:
    delta0: float
    deltaZ: float
    deltaN: float
    tol: float

    def to_dict(self) -> dict:
        return {"delta0": self.delta0, "deltaZ": self.deltaZ, "deltaN": self.deltaN, "tol": self.tol}


class _Oracle:
    """Pressure and drift evaluations for one system."""

    def __init__(self, spec: SystemSpec, cylinder: Optional[dict] = None):
        self.spec = spec
        self.cyl = dict(CYLINDER_DEFAULTS, **(cylinder or {}))

    def value(self, s, q) -> PressureValue:
        if self.spec.is_nonlinear:
            return cylinder_pressure(self.spec, s, q, **self.cyl)
        return series_pressure(self.spec, s, q)

    def p(self, s, q) -> float:
        return self.value(s, q).value

    @property
    def has_drift(self) -> bool:
        return not self.spec.is_nonlinear

    def drift(self, s, q) -> float:
        ms = moment_sums(self.spec, s, q, ["psi"])
        if ms.divergent is not None:
            return math.nan
        return ms.expectation("psi")[0]

    def finite(self, s, q) -> bool:
        fam = self.spec.family
        return fam is None or fam.moment_finite(s, q, "1")

    def restricted(self, s, level) -> float:
        """Pressure of the subsystem of branches with ``psi == level``."""
        spec = self.spec
        keep = spec.psi == level
        terms = list(s * spec.w_sup[keep])
        if spec.family is not None:
            fam = spec.family
            if fam.psi_bounded_above:
                k = np.arange(fam.start, fam.start + 1)
                _, _, ps = fam.evaluate(k)
                if int(ps[0]) == level:
                    ms = moment_sums(spec, s, 0.0, start=fam.start)
                    return float(np.logaddexp(np.logaddexp.reduce(terms) if terms else -math.inf,
                                              ms.shift + math.log(ms.values["1"])))
            else:
                # unbounded step families hit a fixed level at most on a finite set
                sample = np.arange(fam.start, fam.start + 4096)
                w, _, ps = fam.evaluate(sample)
                terms += list(s * w[ps == level])
        if not terms:
            return -math.inf
        return float(np.logaddexp.reduce(np.array(terms)))


def _psi_extremes(spec: SystemSpec):
    lo = float(spec.psi.min()) if len(spec.psi) else math.inf
    hi = float(spec.psi.max()) if len(spec.psi) else -math.inf
    if spec.family is not None:
        if not spec.family.psi_bounded_above:
            hi = math.inf
        _, _, ps = spec.family.evaluate(np.arange(spec.family.start, spec.family.start + 64))
        lo = min(lo, float(ps.min()))
        hi = max(hi, float(ps.max()))
    return lo, hi


def _escape_value(orc: _Oracle, s: float, direction: int) -> float:
    """Limit of ``P(g + q psi)`` as ``q -> -inf`` (direction -1) or ``+inf``."""
    lo, hi = _psi_extremes(orc.spec)
    edge = lo if direction < 0 else hi
    if direction < 0 and lo > 0 or direction > 0 and hi < 0:
        return -math.inf
    if edge == 0:
        return orc.restricted(s, 0)
    # the extreme step has the wrong sign: the sum blows up along this ray
    return math.inf


def _unconstrained_min(orc: _Oracle, s: float) -> SkewPressureResult:
    spec = orc.spec
    q_div = convergence_boundary(spec, s)
    if q_div == -math.inf:
        return SkewPressureResult(math.inf, None, "divergent", "Z", None)
    wall_finite = math.isfinite(q_div) and orc.finite(s, q_div)
    if orc.has_drift:
        return _min_by_drift(orc, s, q_div, wall_finite)
    return _min_by_search(orc, s, q_div, wall_finite)


def _min_by_drift(orc, s, q_div, wall_finite):
    if wall_finite:
        d_wall = orc.drift(s, q_div)
        if d_wall <= 0.0:
            pv = orc.value(s, q_div)
            return SkewPressureResult(pv.value, q_div, "boundary_at_wall", "Z", pv)
    if math.isfinite(q_div):
        hi = q_div - WALL_GAP * max(1.0, abs(q_div)) if not wall_finite else q_div
        d_hi = orc.drift(s, hi)
        if not d_hi > 0.0:
            # drift still negative next to a divergent wall: the infimum sits at the edge
            pv = orc.value(s, hi)
            return SkewPressureResult(pv.value, hi, "boundary_at_wall", "Z", pv)
    else:
        hi = 1.0
        d_hi = orc.drift(s, hi)
        while d_hi < 0.0:
            hi = 2.0 * hi
            if hi > -ESCAPE_Q:
                v = _escape_value(orc, s, +1)
                return SkewPressureResult(v, None, "escapes_to_plus_infinity", "Z", None)
            d_hi = orc.drift(s, hi)
    lo = min(hi, 0.0) - 1.0
    d_lo = orc.drift(s, lo)
    while d_lo > 0.0:
        if lo <= ESCAPE_Q:
            v = _escape_value(orc, s, -1)
            return SkewPressureResult(v, None, "escapes_to_minus_infinity", "Z", None)
        lo = max(2.0 * lo, ESCAPE_Q)
        d_lo = orc.drift(s, lo)
    q = bisect_sign(lambda x: orc.drift(s, x), lo, hi, tol=1e-14, f_lo=d_lo, f_hi=d_hi)
    pv = orc.value(s, q)
    return SkewPressureResult(pv.value, q, "interior", "Z", pv)


def _min_by_search(orc, s, q_div, wall_finite):
    hi = q_div if wall_finite else (q_div - 1e-6 if math.isfinite(q_div) else 40.0)
    f = lambda x: orc.p(s, x)
    res = optimize.minimize_scalar(f, bounds=(ESCAPE_Q, hi), method="bounded", options={"xatol": 1e-7})
    q = float(res.x)
    pv = orc.value(s, q)
    p_hi = orc.value(s, hi)
    if p_hi.value <= pv.value:
        return SkewPressureResult(p_hi.value, hi, "boundary_at_wall", "Z", p_hi)
    if q - ESCAPE_Q < 1e-4:
        v = _escape_value(orc, s, -1)
        return SkewPressureResult(v, None, "escapes_to_minus_infinity", "Z", None)
    return SkewPressureResult(pv.value, q, "interior", "Z", pv)


def skew_pressure_Z(spec: SystemSpec, s: float, cylinder: Optional[dict] = None) -> SkewPressureResult:
    """Infimum over real ``q`` of ``P(s phi + q psi)``.

    When the infimum escapes to ``q -> -inf`` the value is the pressure of the
    subsystem with zero steps if ``0`` is an extreme step value, else ``-inf``.
    """
    if math.isnan(s):
        raise ValueError("s must not be NaN")
    return _unconstrained_min(_Oracle(spec, cylinder), s)


def skew_pressure_N(spec: SystemSpec, s: float, cylinder: Optional[dict] = None) -> SkewPressureResult:
    """Infimum over ``q <= 0`` of ``P(s phi + q psi)``.

    If the unconstrained infimum is reached at some ``q <= 0`` it is also the
    constrained one (case ``Z``); otherwise convexity puts the constrained
    infimum at ``q = 0`` and the value is the base pressure (case ``base``).
    """
    if math.isnan(s):
        raise ValueError("s must not be NaN")
    orc = _Oracle(spec, cylinder)
    z = _unconstrained_min(orc, s)
    if z.flag == "divergent":
        return SkewPressureResult(math.inf, None, "divergent", "base", None, "N")
    if z.flag == "escapes_to_minus_infinity" or (z.minimizer_q is not None and z.minimizer_q < 0.0):
        return SkewPressureResult(z.value, z.minimizer_q, z.flag, "Z", z.diagnostics, "N")
    pv = orc.value(s, 0.0)
    if z.minimizer_q == 0.0:
        return SkewPressureResult(pv.value, 0.0, "boundary_at_zero", "both", pv, "N")
    return SkewPressureResult(pv.value, 0.0, "boundary_at_zero", "base", pv, "N")


def q_of_s(spec: SystemSpec, s: float) -> Optional[float]:
    """Zero of the drift ``q -> dP/dq`` on the finite range, or ``None``."""
    z = skew_pressure_Z(spec, s)
    return z.minimizer_q if z.flag == "interior" else None


def _root_decreasing(f, tol, s_max=64.0):
    """``inf{s >= 0 : f(s) <= 0}`` for nonincreasing ``f`` (``+inf`` allowed)."""
    f0 = f(0.0)
    if f0 <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    fhi = f(hi)
    while fhi > 0.0:
        lo = hi
        hi *= 2.0
        if hi > s_max:
            raise RuntimeError("no sign change of the pressure for s <= 64 (unresolved)")
        fhi = f(hi)
    flo = f(lo) if lo > 0 else f0
    # shrink until both ends are finite, then switch to Brent
    while not math.isfinite(flo) and hi - lo > tol:
        m = 0.5 * (lo + hi)
        fm = f(m)
        if fm > 0.0:
            lo, flo = m, fm
        else:
            hi, fhi = m, fm
    if hi - lo <= tol or fhi == 0.0:
        return hi
    return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))


def critical_exponent(
    spec: SystemSpec, extension: str = "Z", tol: float = 1e-10, cylinder: Optional[dict] = None
) -> float:
    """``inf{s >= 0 : P(s phi, H) <= 0}`` for ``H`` in ``base0``, ``Z``, ``N``."""
    if extension == "base0":
        orc = _Oracle(spec, cylinder)
        f = lambda s: orc.p(s, 0.0)
    elif extension == "Z":
        f = lambda s: skew_pressure_Z(spec, s, cylinder).value
    elif extension == "N":
        f = lambda s: skew_pressure_N(spec, s, cylinder).value
    else:
        raise ValueError("extension must be 'base0', 'Z' or 'N'")
    if spec.is_nonlinear:
        tol = max(tol, 1e-7)
    return _root_decreasing(f, tol)


def critical_exponents(spec: SystemSpec, tol: float = 1e-10, cylinder: Optional[dict] = None) -> CriticalExponents:
    return CriticalExponents(
        critical_exponent(spec, "base0", tol, cylinder),
        critical_exponent(spec, "Z", tol, cylinder),
        critical_exponent(spec, "N", tol, cylinder),
        tol,
    )


def root_in_s(spec: SystemSpec, q: float, tol: float = 1e-10) -> float:
    """``s(q)``: the zero of ``s -> P(s phi + q psi)``."""
    orc = _Oracle(spec)
    return _root_decreasing(lambda s: orc.p(s, q), tol)
