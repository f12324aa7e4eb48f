"""Drift, covariance, dimension gap, trichotomy and phase-transition analysis."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from ._numerics import bisect_sign
from .pressure import convergence_boundary, cylinder_pressure, moment_sums
from .systems import SystemSpec
from .variational import CYLINDER_DEFAULTS, critical_exponent

__all__ = [
    "IndeterminateDrift",
    "DriftValue",
    "GapReport",
    "TrichotomyReport",
    "PhaseReport",
    "drift",
    "drift_value",
    "asymptotic_covariance",
    "dimension_gap_Z",
    "classify_trichotomy",
    "phase_transition",
    "ALPHA_TOL",
]

ALPHA_TOL = 1e-9
COV_TOL = 1e-9


class IndeterminateDrift(ValueError):
    """The pressure diverges at the requested point, so the drift is undefined."""


@dataclass(frozen=True)
class DriftValue:
    value: float
    error: float
    certificate: Optional[dict] = None


def _fd_drift(spec, s, q, h=1e-4):
    cyl = dict(CYLINDER_DEFAULTS)
    up = cylinder_pressure(spec, s, q + h if q + h <= 0 else q, **cyl)
    dn = cylinder_pressure(spec, s, q - h, **cyl)
    step = (q + h if q + h <= 0 else q) - (q - h)
    return (up.value - dn.value) / step


def drift_value(spec: SystemSpec, s: float, q: float) -> DriftValue:
    """Mean step ``sum psi_k p_k`` under the Gibbs weights at ``(s, q)``."""
    fam = spec.family
    if fam is not None and not fam.moment_finite(s, q, "1"):
        raise IndeterminateDrift(f"pressure diverges at s={s}, q={q}; drift undefined")
    if fam is not None and not fam.moment_finite(s, q, "psi"):
        cert = {
            "rule": "lower_envelope_divergence",
            "detail": "sum of psi_k exp(s*w_inf(k) + q*psi_k) diverges while the pressure is finite",
            "s": s,
            "q": q,
        }
        return DriftValue(math.inf, 0.0, cert)
    if spec.is_nonlinear:
        # derivative of the bracket midpoint; the error is the bracket half-width scale
        v = _fd_drift(spec, s, q)
        return DriftValue(v, math.nan)
    ms = moment_sums(spec, s, q, ["psi"])
    v, e = ms.expectation("psi")
    return DriftValue(v, e)


def drift(spec: SystemSpec, s: float, q: float) -> float:
    return drift_value(spec, s, q).value


_PAIR = {
    ("phi", "psi"): "phipsi",
    ("psi", "phi"): "phipsi",
    ("phi", "phi"): "phi2",
    ("psi", "psi"): "psi2",
}


def asymptotic_covariance(
    spec: SystemSpec, s: float, q: float, f: Union[str, np.ndarray], g: Union[str, np.ndarray]
) -> float:
    """Covariance of two per-branch observables under the Bernoulli Gibbs weights.

    With a locally constant potential on a full shift the Gibbs measure is a
    product measure, so every lagged term vanishes and only the one-step
    covariance remains.  ``f`` and ``g`` are ``"phi"``/``"psi"`` or arrays over
    the tabulated branches (finite systems only).
    """
    if spec.is_nonlinear:
        raise ValueError("covariances need a locally constant potential")
    if isinstance(f, str) and isinstance(g, str):
        ms = moment_sums(spec, s, q, ["phi", "psi", _PAIR[(f, g)]])
        if ms.divergent is not None:
            raise ValueError("pressure diverges; covariance undefined")
        ef, _ = ms.expectation(f)
        eg, _ = ms.expectation(g)
        efg, _ = ms.expectation(_PAIR[(f, g)])
        if not math.isfinite(efg):
            return math.inf if f == g else efg
        return efg - ef * eg
    if spec.family is not None:
        raise ValueError("array observables are only supported on finite systems")
    fv = np.asarray(spec.w_sup if isinstance(f, str) and f == "phi" else spec.psi if isinstance(f, str) else f, float)
    gv = np.asarray(spec.w_sup if isinstance(g, str) and g == "phi" else spec.psi if isinstance(g, str) else g, float)
    if fv.shape != spec.w_sup.shape or gv.shape != spec.w_sup.shape:
        raise ValueError("observable arrays must have one value per branch")
    if not (np.all(np.isfinite(fv)) and np.all(np.isfinite(gv))):
        raise ValueError("observables must be finite (square-summable)")
    h = s * spec.w_sup + q * spec.psi
    p = np.exp(h - np.logaddexp.reduce(h))
    p = p / math.fsum(p.tolist())
    ef = math.fsum((fv * p).tolist())
    eg = math.fsum((gv * p).tolist())
    return math.fsum(((fv - ef) * (gv - eg) * p).tolist())


# ------------------------------------------------------------ dimension gap


@dataclass(frozen=True)
class GapReport:
    gap: Optional[bool]
    alpha_max: float
    alpha_error: float
    delta0: float
    boundary_case: bool
    witness_q: Optional[float] = None
    certificate: Optional[dict] = None

    def to_dict(self):
        return asdict(self)


def _positive_q_evidence(spec: SystemSpec, delta0: float):
    """Is ``sum exp(delta0 phi + q psi)`` finite for some ``q > 0``?"""
    wall = convergence_boundary(spec, delta0)
    if wall > 0:
        wq = 1.0 if math.isinf(wall) else 0.5 * wall
        return True, wq, {"rule": "finite_wall", "q_div": wall}
    samples = [1e-6, 1e-3, 0.1, 1.0]
    certs = [spec.family.divergence_certificate(delta0, q) for q in samples]
    return False, None, {
        "rule": "all_positive_q_divergent",
        "q_div": wall,
        "reason": "step function unbounded against a tail that is not geometric in excess",
        "samples": certs,
    }


def dimension_gap_Z(spec: SystemSpec, delta0: Optional[float] = None) -> GapReport:
    """Dimension gap of the Z-extension: positive drift, or negative drift with
    a finite sum ``sum exp(delta0 phi + q psi)`` for some ``q > 0``."""
    d0 = critical_exponent(spec, "base0") if delta0 is None else delta0
    dv = drift_value(spec, d0, 0.0)
    a = dv.value
    err = dv.error if math.isfinite(dv.error) else 0.0
    if math.isfinite(a) and abs(a) < max(ALPHA_TOL, err):
        return GapReport(None, a, err, d0, True)
    if a > 0:
        return GapReport(True, a, err, d0, False, certificate=dv.certificate)
    ok, wq, cert = _positive_q_evidence(spec, d0)
    return GapReport(ok, a, err, d0, False, wq, cert)


# ------------------------------------------------------------- trichotomy


@dataclass(frozen=True)
class TrichotomyReport:
    label: str
    alpha_max: float
    delta0: float
    deltaZ: float
    deltaN: float
    dimT_plus_Z: float
    dimT_plus_N: float
    dimT_minus_Z: float
    dimT_minus_N: float
    gap_Z: bool
    gap_N: bool
    evidence: dict
    numerical_boundary: bool = False
    neighbor_labels: tuple = ()
    deltaN_formula: float = math.nan
    tol: float = 1e-10

    def to_dict(self):
        d = asdict(self)
        d["neighbor_labels"] = list(self.neighbor_labels)
        return d


def classify_trichotomy(spec: SystemSpec, tol: float = 1e-10) -> TrichotomyReport:
    """Lean / balanced / black-hole label with all dimension values."""
    d0 = critical_exponent(spec, "base0", tol)
    dz = critical_exponent(spec, "Z", tol)
    dn = critical_exponent(spec, "N", tol)
    gap = dimension_gap_Z(spec, d0)
    a = gap.alpha_max
    ok, wq, cert = (None, None, None)
    if gap.boundary_case or a < 0:
        ok, wq, cert = _positive_q_evidence(spec, d0)
    evidence = {
        "finite_for_some_positive_q": ok,
        "witness_q": wq,
        "certificate": cert if cert is not None else gap.certificate,
        "alpha_error": gap.alpha_error,
    }
    neighbors = ()
    if gap.boundary_case:
        label = "balanced"
        neighbors = ("lean" if ok else "balanced", "black_hole")
        sign = 0
    elif a > 0:
        label, sign = "black_hole", 1
    else:
        label, sign = ("lean" if ok else "balanced"), -1
    dim_plus = d0 if sign >= 0 else dz
    dim_minus = d0 if sign <= 0 else dz
    dn_formula = dz if sign >= 0 else d0
    gap_z = bool(gap.gap) if gap.gap is not None else False
    return TrichotomyReport(
        label=label,
        alpha_max=a,
        delta0=d0,
        deltaZ=dz,
        deltaN=dn,
        dimT_plus_Z=dim_plus,
        dimT_plus_N=dim_plus,
        dimT_minus_Z=dim_minus,
        dimT_minus_N=0.0,
        gap_Z=gap_z,
        gap_N=label == "black_hole" and not gap.boundary_case,
        evidence=evidence,
        numerical_boundary=gap.boundary_case,
        neighbor_labels=neighbors,
        deltaN_formula=dn_formula,
        tol=tol if not spec.is_nonlinear else max(tol, 1e-7),
    )


# ---------------------------------------------------------- phase transition


@dataclass(frozen=True)
class PhaseReport:
    s0: float
    has_transition: bool
    cov_phi_psi: float
    cov_phi_phi: float
    cov_psi_psi: float
    second_derivative_jump: float
    hypothesis: str
    degenerate: bool = False
    asserted: bool = True
    tol: float = COV_TOL

    def to_dict(self):
        return asdict(self)


def _drift0(spec, s):
    try:
        return drift(spec, s, 0.0)
    except IndeterminateDrift:
        return math.nan


def _find_s0(spec):
    grid = np.arange(-8.0, 16.0 + 1e-9, 0.25)
    vals = [_drift0(spec, float(s)) for s in grid]
    finite = [(s, v) for s, v in zip(grid, vals) if not math.isnan(v)]
    if finite and all(math.isfinite(v) and abs(v) < 1e-12 for _, v in finite):
        return None, True
    for (s1, v1), (s2, v2) in zip(finite, finite[1:]):
        if v1 == 0.0:
            return float(s1), False
        if (v1 > 0) != (v2 > 0) or v2 == 0.0:
            f = lambda s: _drift0(spec, s)
            return bisect_sign(f, float(s1), float(s2), tol=1e-13, f_lo=v1, f_hi=v2), False
    raise ValueError("no candidate s0: the drift at q=0 has no sign change")


def phase_transition(spec: SystemSpec) -> PhaseReport:
    """Locate ``s0`` (zero of the drift at ``q = 0``) and test the covariance criterion."""
    s0, degenerate = _find_s0(spec)
    if degenerate:
        s0 = critical_exponent(spec, "base0")
    # transition hypothesis: some s1 < s0 admits a finite sum for some q > 0
    wall = convergence_boundary(spec, s0 - 1e-3)
    hypothesis = "theorem" if wall > 0 else "wall_pinned"
    if spec.is_nonlinear:
        h = 1e-3
        cyl = dict(CYLINDER_DEFAULTS)
        p = lambda s, q: cylinder_pressure(spec, s, q, **cyl).value
        c_fp = (p(s0 + h, 0.0) - p(s0 - h, 0.0) - p(s0 + h, -2 * h) + p(s0 - h, -2 * h)) / (4 * h * h)
        c_ff = (p(s0 + h, 0.0) - 2 * p(s0, 0.0) + p(s0 - h, 0.0)) / (h * h)
        c_pp = (p(s0, 0.0) - 2 * p(s0, -h) + p(s0, -2 * h)) / (h * h)
        jump = c_fp ** 2 / c_pp if c_pp > 0 else math.nan
        return PhaseReport(s0, abs(c_fp) > COV_TOL, c_fp, c_ff, c_pp, jump, hypothesis, degenerate, asserted=False)
    c_fp = asymptotic_covariance(spec, s0, 0.0, "phi", "psi")
    c_ff = asymptotic_covariance(spec, s0, 0.0, "phi", "phi")
    c_pp = asymptotic_covariance(spec, s0, 0.0, "psi", "psi")
    if c_pp == math.inf:
        jump = 0.0
    elif c_pp > 0:
        jump = c_fp ** 2 / c_pp
    else:
        jump = 0.0
    return PhaseReport(s0, abs(c_fp) > COV_TOL, c_fp, c_ff, c_pp, jump, hypothesis, degenerate)
