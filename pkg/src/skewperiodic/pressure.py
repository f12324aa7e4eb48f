"""Base pressure ``P(s*phi + q*psi)`` with certified truncation error.

Locally constant systems use exact series: the tabulated prefix is summed
with correctly rounded accumulation and the analytic family supplies the
rest (closed form or explicit head plus remainder bound).  Nonlinear systems
get a two-sided bracket from partition sums over cylinders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ._numerics import bisect_predicate
from .systems import SystemSpec
from .tails import MOMENTS

__all__ = [
    "PressureValue",
    "GibbsWeights",
    "MomentSums",
    "series_pressure",
    "base_pressure",
    "cylinder_pressure",
    "convergence_boundary",
    "gibbs_weights",
    "moment_sums",
    "is_finite_at",
    "distortion_constant",
]

CYLINDER_BUDGET = 10**7


@dataclass(frozen=True)
class PressureValue:
    """Pressure with error data.

    ``mode`` is ``"series_exact"`` or ``"cylinder_bracket"``; for brackets
    ``value`` is the midpoint and ``remainder_bound`` the half-width.
    """

    value: float
    remainder_bound: float
    mode: str = "series_exact"
    lower: Optional[float] = None
    upper: Optional[float] = None
    depth: Optional[int] = None
    method: Optional[str] = None
    certificate: Optional[dict] = None

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)

    def to_dict(self) -> dict:
        d = {"value": self.value, "remainder_bound": self.remainder_bound, "mode": self.mode}
        if self.mode == "cylinder_bracket":
            d.update(lower=self.lower, upper=self.upper, depth=self.depth, method=self.method)
        if self.certificate is not None:
            d["certificate"] = self.certificate
        return d


@dataclass
class MomentSums:
    """Sums ``sum g_k exp(s w_k + q psi_k - shift)`` for named moments ``g``.

    ``divergent`` holds a certificate when the plain sum (moment ``"1"``)
    diverges; individual moments may still be infinite with finite ``"1"``.
    """

    shift: float
    values: dict
    errors: dict
    divergent: Optional[dict] = None

    def expectation(self, name: str) -> tuple[float, float]:
        z, ez = self.values["1"], self.errors["1"]
        v, ev = self.values[name], self.errors[name]
        if not math.isfinite(v):
            return v, 0.0
        mean = v / z
        err = (ev + abs(mean) * ez) / max(z - ez, 1e-300)
        return mean, err


def _check_args(s, q):
    if math.isnan(s) or math.isnan(q):
        raise ValueError("s and q must not be NaN")


def _prefix_arrays(spec: SystemSpec, which: str):
    w = spec.w_sup if which == "sup" else spec.w_inf
    return w, spec.psi.astype(float)


def is_finite_at(spec: SystemSpec, s: float, q: float, moment: str = "1") -> bool:
    """Analytic finiteness of the branch sum (prefix terms are always finite)."""
    if spec.family is None:
        return True
    return spec.family.moment_finite(s, q, moment)


def moment_sums(
    spec: SystemSpec,
    s: float,
    q: float,
    moments: Sequence[str] = ("1",),
    which: str = "sup",
    start: Optional[int] = None,
) -> MomentSums:
    """Weighted moment sums over all branches with index ``>= start``."""
    _check_args(s, q)
    moments = list(dict.fromkeys(["1", *moments]))
    fam = spec.family
    if fam is not None and not fam.moment_finite(s, q, "1"):
        vals = {m: (math.inf if MOMENTS[m][1] % 2 == 0 else -math.inf) for m in moments}
        return MomentSums(math.inf, vals, {m: 0.0 for m in moments}, fam.divergence_certificate(s, q))
    w, psi = _prefix_arrays(spec, which)
    if start is not None:
        keep = spec.indices >= start
        w, psi = w[keep], psi[keep]
    h = s * w + q * psi if len(w) else np.zeros(0)
    shift = float(h.max()) if len(h) else -math.inf
    if fam is not None:
        shift = max(shift, fam.log_first_term(s, q, start))
    e = np.exp(h - shift)
    vals, errs = {}, {}
    fam_sums = fam.sums(s, q, shift, moments, start=start) if fam is not None else None
    for m in moments:
        a, b = MOMENTS[m]
        g = psi ** a * w ** b
        head = math.fsum((e * g).tolist())
        v, err = head, 2e-16 * math.fsum(np.abs(e * g).tolist())
        if fam_sums is not None:
            v = v + fam_sums.values[m]
            err = err + fam_sums.errors[m]
        vals[m] = v
        errs[m] = err
    return MomentSums(shift, vals, errs)


def series_pressure(spec: SystemSpec, s: float, q: float) -> PressureValue:
    """``log sum_k exp(s w_k + q psi_k)`` with certified remainder.

    Divergence returns ``+inf`` carrying a certificate (ratio test, term
    growth or p-series exponent).
    """
    if spec.is_nonlinear:
        raise ValueError("series pressure needs a locally constant system; use cylinder_pressure")
    ms = moment_sums(spec, s, q)
    if ms.divergent is not None:
        return PressureValue(math.inf, 0.0, certificate=ms.divergent)
    z, ez = ms.values["1"], ms.errors["1"]
    if z <= 0.0:
        return PressureValue(-math.inf, 0.0)
    rel = ez / z
    bound = -math.log1p(-rel) if rel < 1 else math.inf
    return PressureValue(ms.shift + math.log(z), bound + 4e-16 * abs(ms.shift))


def base_pressure(spec: SystemSpec, s: float, q: float = 0.0) -> float:
    """Point value of the base pressure (bracket midpoint for nonlinear systems)."""
    if spec.is_nonlinear:
        return cylinder_pressure(spec, s, q).value
    return series_pressure(spec, s, q).value


def convergence_boundary(spec: SystemSpec, s: float, tol: float = 1e-9) -> float:
    """``sup{q : P(s phi + q psi) < inf}`` by bisection on the finiteness predicate."""
    _check_args(s, 0.0)
    if spec.family is None or spec.family.psi_bounded_above:
        return math.inf

    def pred(q):
        return spec.family.moment_finite(s, q, "1")

    lo = 0.0
    step = 1.0
    while not pred(lo):
        lo -= step
        step *= 2.0
        if lo < -1e8:
            return -math.inf
    hi = lo + 1.0
    step = 1.0
    while pred(hi):
        hi += step
        step *= 2.0
        if hi > 1e8:
            return math.inf
    q = bisect_predicate(pred, lo, hi, tol=tol)
    if pred(q + tol):
        q += tol
    elif not pred(q):
        q -= tol
    # the boundary is often exactly zero; keep the finite side
    if abs(q) <= 2 * tol and pred(0.0) and not pred(tol):
        q = 0.0
    return q


@dataclass(frozen=True)
class GibbsWeights:
    indices: np.ndarray
    probs: np.ndarray
    tail_mass: float
    tail_mass_bound: float
    pressure: float
    s: float
    q: float


def gibbs_weights(spec: SystemSpec, s: float, q: float, cutoff: int) -> GibbsWeights:
    """Bernoulli weights ``p_k = exp(s w_k + q psi_k - P)`` for ``k < cutoff``.

    The remaining mass is evaluated from the family sums; ``tail_mass_bound``
    adds its certified error.
    """
    pv = series_pressure(spec, s, q)
    if not pv.finite:
        raise ValueError("Gibbs weights need a finite pressure")
    lo_k = int(spec.indices[0]) if len(spec.indices) else spec.family.start
    ks = np.arange(lo_k, max(cutoff, lo_k), dtype=np.int64)
    if spec.family is None:
        ks = spec.indices[spec.indices < cutoff]
    w, _, psi, _ = spec.evaluate(ks) if len(ks) else (np.zeros(0), None, np.zeros(0), None)
    p = np.exp(s * w + q * psi - pv.value)
    if spec.family is None and cutoff > spec.indices[-1]:
        tail, tail_err = 0.0, 0.0
    else:
        ms = moment_sums(spec, s, q, start=cutoff)
        tail = ms.values["1"] * math.exp(ms.shift - pv.value) if math.isfinite(ms.shift) else 0.0
        tail_err = ms.errors["1"] * math.exp(ms.shift - pv.value) if math.isfinite(ms.shift) else 0.0
    head = math.fsum(p.tolist())
    mass_err = abs(1.0 - head - tail)
    return GibbsWeights(ks, p, tail, tail + tail_err + mass_err + pv.remainder_bound, pv.value, s, q)


# ------------------------------------------------------------ cylinder mode


def distortion_constant(spec: SystemSpec) -> float:
    """Bounded-distortion constant of the geometric potential (0 if locally constant)."""
    if spec.is_nonlinear:
        return spec.evaluator.distortion_constant()
    return 0.0


def _lc_bracket(spec, s, q, depth, cutoff):
    """Locally constant: Z_n = Z_1^n, so the bracket is [truncated, full] series."""
    pv = series_pressure(spec, s, q)
    ms = moment_sums(spec, s, q)
    keep = spec.indices <= cutoff
    h = s * spec.w_sup[keep] + q * spec.psi[keep]
    if spec.family is not None and spec.family.start <= cutoff:
        ks = np.arange(spec.family.start, cutoff + 1)
        w, _, ps = spec.family.evaluate(ks)
        h = np.concatenate([h, s * w + q * ps])
    lower = float(np.logaddexp.reduce(h)) if len(h) else -math.inf
    upper = pv.value + pv.remainder_bound
    lower = min(lower, pv.value)
    return PressureValue(
        0.5 * (lower + upper) if math.isfinite(upper) else math.inf,
        0.5 * (upper - lower) if math.isfinite(upper) else math.inf,
        mode="cylinder_bracket",
        lower=lower,
        upper=upper,
        depth=depth,
        method="product",
        certificate=ms.divergent,
    )


def _nonlinear_divergence(spec, s, q):
    fam = spec.family
    if fam is not None and not fam.moment_finite(s, q, "1"):
        return fam.divergence_certificate(s, q)
    return None


def _words_bracket(spec, s, q, depth, cutoff, budget):
    ev = spec.evaluator
    if float(cutoff) ** depth > budget:
        raise ValueError(f"combinatorial budget exceeded: {cutoff}^{depth} words > {budget}")
    digits = np.arange(1, cutoff + 1, dtype=np.int64)
    _, _, psi_d, _ = spec.evaluate(digits)
    psi_d = psi_d.astype(float)
    # innermost images of the endpoints x=0 and x=1, accumulated log derivatives and steps
    y0 = np.zeros(1)
    y1 = np.ones(1)
    l0 = np.zeros(1)
    l1 = np.zeros(1)
    sp = np.zeros(1)
    for _ in range(depth):
        d = digits[:, None]
        l0 = (l0[None, :] + ev.log_abs_derivative(d, y0[None, :])).ravel()
        l1 = (l1[None, :] + ev.log_abs_derivative(d, y1[None, :])).ravel()
        y0 = ev.inverse(d, y0[None, :]).ravel()
        y1 = ev.inverse(d, y1[None, :]).ravel()
        sp = (sp[None, :] + psi_d[:, None]).ravel()
    lsup = np.maximum(l0, l1)
    linf = np.minimum(l0, l1)
    if s < 0:
        lsup, linf = linf, lsup
    hs = s * lsup + q * sp
    hi_ = s * linf + q * sp
    log_zsup = float(np.logaddexp.reduce(hs))
    log_zinf = float(np.logaddexp.reduce(hi_))
    # words touching digits past the cutoff: bounded by per-digit sup products
    k = digits.astype(float)
    a_trunc = float(np.logaddexp.reduce(s * ev.log_abs_derivative(k, 0.0) + q * psi_d))
    up, _ = ev.tail_weight_bounds(s, q, cutoff, np.zeros(1), np.zeros(1))
    tail = float(up[0])
    a_full = float(np.logaddexp(a_trunc, math.log(tail))) if tail > 0 else a_trunc
    extra = depth * a_full + math.log1p(-math.exp(depth * (a_trunc - a_full))) if a_full > a_trunc else -math.inf
    log_zsup = float(np.logaddexp(log_zsup, extra))
    return log_zinf / depth, log_zsup / depth


def _transfer_bracket(spec, s, q, depth, cutoff, grid):
    """Two-sided bound from grid enclosures of ``L^n 1`` (Collatz-Wielandt ratios).

    ``U_n`` and ``L_n`` bound the transfer operator iterates cell by cell;
    then ``min L_n/U_{n-1} <= e^P <= max U_n/L_{n-1}``.
    """
    if s < 0:
        raise ValueError("transfer bracket needs s >= 0")
    ev = spec.evaluator
    edges = np.linspace(0.0, 1.0, grid + 1)
    x_lo, x_hi = edges[:-1][:, None], edges[1:][:, None]
    k = np.arange(1, cutoff + 1, dtype=float)[None, :]
    _, _, psi_d, _ = spec.evaluate(np.arange(1, cutoff + 1))
    qpsi = q * psi_d.astype(float)[None, :]
    dsup, dinf = ev.cell_log_derivative_bounds(k, x_lo, x_hi)
    w_up = np.exp(s * dsup + qpsi)
    w_lo = np.exp(s * dinf + qpsi)
    y_lo, y_hi = ev.cell_image(k, x_lo, x_hi)
    j_lo = np.clip(np.floor(y_lo * grid).astype(np.int64), 0, grid - 1)
    j_hi = np.clip(np.ceil(y_hi * grid).astype(np.int64) - 1, 0, grid - 1)
    j_hi = np.maximum(j_hi, j_lo)
    if np.any(j_hi - j_lo > 1):
        raise ValueError("grid too coarse for the branch contraction")
    t_up, t_lo = ev.tail_weight_bounds(s, q, cutoff, edges[:-1], edges[1:])
    t_cells = int(math.ceil(grid / (cutoff + 1.0)))
    U = np.ones(grid)
    L = np.ones(grid)
    lo_b, hi_b = -math.inf, math.inf
    for _ in range(depth):
        u_img = np.maximum(U[j_lo], U[j_hi])
        l_img = np.minimum(L[j_lo], L[j_hi])
        Un = (w_up * u_img).sum(axis=1) + t_up * U[:t_cells].max()
        Ln = (w_lo * l_img).sum(axis=1) + t_lo * L[:t_cells].min()
        lo_b = float(np.log(np.min(Ln / U)))
        hi_b = float(np.log(np.max(Un / L)))
        c = Un.max()
        U, L = Un / c, Ln / c
    return lo_b, hi_b


def cylinder_pressure(
    spec: SystemSpec,
    s: float,
    q: float,
    depth: int = 8,
    branch_cutoff: int = 200,
    method: str = "auto",
    grid: int = 2048,
    budget: int = CYLINDER_BUDGET,
) -> PressureValue:
    """Two-sided bracket for the pressure from depth-``depth`` cylinder data.

    ``method="words"`` enumerates all words over the first ``branch_cutoff``
    digits (sub/super-multiplicative partition sums, limited by ``budget``);
    ``method="transfer"`` propagates grid enclosures of the transfer operator
    iterates; ``"auto"`` uses words when they fit the budget.
    """
    _check_args(s, q)
    if depth < 1 or branch_cutoff < 1:
        raise ValueError("depth and branch_cutoff must be positive")
    if q > 0 and not spec.psi_bounded_above:
        cert = spec.family.divergence_certificate(s, q) if spec.family is not None else None
        if cert is not None and not spec.family.moment_finite(s, q):
            return PressureValue(math.inf, 0.0, "cylinder_bracket", math.inf, math.inf, depth, method, cert)
        raise ValueError("no certified bound for q > 0 with unbounded steps")
    if not spec.is_nonlinear:
        return _lc_bracket(spec, s, q, depth, branch_cutoff)
    cert = _nonlinear_divergence(spec, s, q)
    if cert is not None:
        return PressureValue(math.inf, 0.0, "cylinder_bracket", math.inf, math.inf, depth, method, cert)
    if method == "auto":
        method = "words" if float(branch_cutoff) ** depth <= budget else "transfer"
    if method == "words":
        lo, hi = _words_bracket(spec, s, q, depth, branch_cutoff, budget)
    elif method == "transfer":
        lo, hi = _transfer_bracket(spec, s, q, depth, branch_cutoff, grid)
    else:
        raise ValueError(f"unknown cylinder method {method!r}")
    return PressureValue(0.5 * (lo + hi), 0.5 * (hi - lo), "cylinder_bracket", lo, hi, depth, method)
