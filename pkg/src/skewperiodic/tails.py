"""Analytic branch families used beyond the tabulated prefix of a system.

A family evaluates the per-branch data ``(w_sup, w_inf, psi)`` for any index
``k >= start`` and sums the weighted moments

    sum_{k >= start} psi_k**a * w_k**b * exp(s*w_k + q*psi_k - shift)

either in closed form (geometric weights) or as an explicit partial sum plus a
certified remainder.  ``w_k`` is the log-weight of branch ``k``.  Divergence is
decided analytically, never by watching partial sums grow.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import integrate

# moment name -> (power of psi, power of w)
MOMENTS = {
    "1": (0, 0),
    "psi": (1, 0),
    "phi": (0, 1),
    "psi2": (2, 0),
    "phipsi": (1, 1),
    "phi2": (0, 2),
}


@dataclass(frozen=True)
class TailModel:
    """Bound on branch weights past the tabulated prefix.

    For ``k >= cutoff``: ``exp(w_sup(k)) <= C * rate**k`` (geometric) or
    ``<= C * k**(-rate)`` (power).  ``kind == "none"`` marks a finite system.
    """

    kind: str
    C: float = 0.0
    rate: float = 0.0
    cutoff: int = 0

    def __post_init__(self):
        if self.kind not in ("geometric", "power", "none"):
            raise ValueError(f"tail.kind: unknown kind {self.kind!r}")
        if self.kind == "geometric" and not (0.0 < self.rate < 1.0 and self.C > 0):
            raise ValueError("tail: geometric tail needs 0 < r < 1 and C > 0")
        if self.kind == "power" and not (self.rate > 1.0 and self.C > 0):
            raise ValueError("tail: power tail needs p > 1 and C > 0")

    def bound(self, k):
        k = np.asarray(k, dtype=float)
        if self.kind == "geometric":
            return self.C * self.rate ** k
        if self.kind == "power":
            return self.C * k ** (-self.rate)
        return np.zeros_like(k)


@dataclass
class FamilySums:
    """Moment sums scaled by ``exp(-shift)``; ``errors`` are absolute bounds."""

    values: dict
    errors: dict


def _divergent_sign(moment: str) -> float:
    a, b = MOMENTS[moment]
    # psi -> +inf and w -> -inf along any divergent tail
    return -math.inf if b % 2 == 1 else math.inf


def _poly_mul(p1, p2):
    out = [0.0] * (len(p1) + len(p2) - 1)
    for i, x in enumerate(p1):
        for j, y in enumerate(p2):
            out[i + j] += x * y
    return out


def _poly_pow(p, n):
    out = [1.0]
    for _ in range(n):
        out = _poly_mul(out, p)
    return out


class BranchFamily:
    """Interface for analytic branch families (see module docstring)."""

    start: int
    psi1_shift: int
    psi_bounded_above: bool = False
    psi_growth: float = 1.0

    def evaluate(self, k):
        raise NotImplementedError

    def tail_model(self) -> TailModel:
        raise NotImplementedError

    def moment_finite(self, s: float, q: float, moment: str = "1") -> bool:
        raise NotImplementedError

    def log_first_term(self, s: float, q: float, start: Optional[int] = None) -> float:
        k0 = self.start if start is None else start
        w, _, psi = self.evaluate(np.array([k0]))
        return float(s * w[0] + q * psi[0])

    def sums(self, s, q, shift, moments, start=None) -> FamilySums:
        raise NotImplementedError

    def divergence_certificate(self, s: float, q: float) -> dict:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class GeometricFamily(BranchFamily):
    """``w_k = log_c + k*log_r`` and ``psi_k = slope*k + offset``; exact sums."""

    log_c: float
    log_r: float
    psi_slope: int
    psi_offset: int
    start: int
    psi1_shift: int = 1

    def __post_init__(self):
        if not self.log_r < 0:
            raise ValueError("tail: geometric ratio must lie in (0, 1)")
        if self.psi_slope < 0:
            raise ValueError("tail: psi_slope must be nonnegative")

    @property
    def psi_bounded_above(self):
        return self.psi_slope == 0

    def evaluate(self, k):
        k = np.asarray(k, dtype=np.int64)
        w = self.log_c + k.astype(float) * self.log_r
        return w, w.copy(), self.psi_slope * k + self.psi_offset

    def tail_model(self):
        return TailModel("geometric", C=math.exp(self.log_c), rate=math.exp(self.log_r), cutoff=self.start)

    def _rate(self, s, q):
        return s * self.log_r + q * self.psi_slope

    def moment_finite(self, s, q, moment="1"):
        return self._rate(s, q) < 0.0

    def sums(self, s, q, shift, moments, start=None):
        k0 = self.start if start is None else max(start, self.start)
        c1 = self._rate(s, q)
        vals, errs = {}, {}
        if c1 >= 0.0:
            for m in moments:
                vals[m] = _divergent_sign(m)
                errs[m] = 0.0
            return FamilySums(vals, errs)
        c0 = s * self.log_c + q * self.psi_offset
        base = math.exp(c0 + c1 * k0 - shift)
        z = math.exp(c1)
        om = -math.expm1(c1)
        s0 = 1.0 / om
        s1 = z / om ** 2
        s2 = z * (1.0 + z) / om ** 3
        t = [s0, s1 + k0 * s0, s2 + 2 * k0 * s1 + k0 * k0 * s0]
        psi_poly = [float(self.psi_offset), float(self.psi_slope)]
        w_poly = [self.log_c, self.log_r]
        for m in moments:
            a, b = MOMENTS[m]
            poly = _poly_mul(_poly_pow(psi_poly, a), _poly_pow(w_poly, b))
            v = base * sum(c * t[i] for i, c in enumerate(poly))
            vals[m] = v
            errs[m] = 1e-14 * base * sum(abs(c) * t[i] for i, c in enumerate(poly))
        return FamilySums(vals, errs)

    def divergence_certificate(self, s, q):
        return {"rule": "ratio_test", "ratio": math.exp(min(self._rate(s, q), 700.0))}

    def describe(self):
        return {
            "kind": "geometric",
            "C": math.exp(self.log_c),
            "r": math.exp(self.log_r),
            "cutoff": self.start,
            "psi_slope": self.psi_slope,
            "psi_offset": self.psi_offset,
            "psi1_shift": self.psi1_shift,
        }


def _term_growth_certificate(log_term, q, start):
    """Find an index with term >= 1, showing the terms do not tend to zero."""
    k = max(start, 1)
    for _ in range(2000):
        if log_term(k) >= 0.0:
            return {"rule": "term_growth", "q": q, "index": int(k), "log_term": float(log_term(k))}
        k *= 2
        if k > 1e300:
            break
    return {"rule": "term_growth", "q": q, "index": None}


# symbolic terms  coef * x**alpha * log(x)**j  (times exp(kappa*x))
def _terms_derivative(terms, kappa):
    out = []
    for c, alpha, j in terms:
        if alpha != 0.0:
            out.append((c * alpha, alpha - 1.0, j))
        if j > 0:
            out.append((c * j, alpha - 1.0, j - 1))
        if kappa != 0.0:
            out.append((c * kappa, alpha, j))
    return out


def _terms_eval(terms, x, kappa):
    lx = math.log(x)
    return sum(c * x ** alpha * lx ** j for c, alpha, j in terms) * math.exp(kappa * x)


def _power_log_integral(alpha, j, n):
    """Integral of x**alpha * log(x)**j over [n, inf); requires alpha < -1."""
    g = -alpha - 1.0
    ln = math.log(n)
    acc = 0.0
    fact = 1.0
    for m in range(j + 1):
        acc += fact * ln ** (j - m) / g ** (m + 1)
        fact *= j - m
    return n ** (-g) * acc


@dataclass(frozen=True)
class PowerFamily(BranchFamily):
    """``w_k = log_c - p*log k`` and ``psi_k = slope*k + offset``.

    Sums use an explicit head followed by Euler-Maclaurin with derivatives
    computed symbolically; the remainder bound is the next unused term.
    """

    log_c: float
    p: float
    psi_slope: int
    psi_offset: int
    start: int
    psi1_shift: int = 1

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError("tail: power exponent must exceed 1")
        if self.start < 1:
            raise ValueError("tail: power family must start at k >= 1")

    @property
    def psi_bounded_above(self):
        return self.psi_slope == 0

    def evaluate(self, k):
        k = np.asarray(k, dtype=np.int64)
        w = self.log_c - self.p * np.log(k.astype(float))
        return w, w.copy(), self.psi_slope * k + self.psi_offset

    def tail_model(self):
        return TailModel("power", C=math.exp(self.log_c), rate=self.p, cutoff=self.start)

    def moment_finite(self, s, q, moment="1"):
        kappa = q * self.psi_slope
        if kappa > 0:
            return False
        if kappa < 0:
            return True
        a, _ = MOMENTS[moment]
        deg = a if self.psi_slope != 0 else 0
        return self.p * s - deg > 1.0

    def divergence_certificate(self, s, q):
        kappa = q * self.psi_slope
        if kappa > 0:
            return _term_growth_certificate(
                lambda k: s * (self.log_c - self.p * math.log(k)) + q * (self.psi_slope * k + self.psi_offset),
                q,
                self.start,
            )
        return {"rule": "p_series", "exponent": self.p * s}

    def sums(self, s, q, shift, moments, start=None):
        k0 = self.start if start is None else max(start, self.start)
        beta = self.p * s
        kappa = q * self.psi_slope
        c0 = s * self.log_c + q * self.psi_offset - shift
        n0 = max(k0, 256)
        if kappa < 0 and beta < 0:
            n0 = max(n0, int(math.ceil(4.0 * beta / kappa)) + 1)
        n0 = min(n0, max(k0, 2_000_000))
        vals, errs = {}, {}
        k = np.arange(k0, n0, dtype=np.int64)
        kf = k.astype(float)
        lk = np.log(kf) if kf.size else kf
        head_w = np.exp(c0 - beta * lk + kappa * kf) if kf.size else kf
        psi = self.psi_slope * kf + self.psi_offset
        w = self.log_c - self.p * lk
        for m in moments:
            a, b = MOMENTS[m]
            if not self.moment_finite(s, q, m):
                vals[m] = _divergent_sign(m)
                errs[m] = 0.0
                continue
            head = math.fsum((head_w * psi ** a * w ** b).tolist()) if kf.size else 0.0
            # g(x) = psi(x)**a * w(x)**b as a polynomial in (x, log x)
            terms = []
            psi_poly = _poly_pow([float(self.psi_offset), float(self.psi_slope)], a)
            w_poly = _poly_pow([self.log_c, -self.p], b)
            for i, ci in enumerate(psi_poly):
                for j, cj in enumerate(w_poly):
                    if ci * cj != 0.0:
                        terms.append((math.exp(c0) * ci * cj, i - beta, j))
            tail, err = self._em_tail(terms, kappa, n0)
            vals[m] = head + tail
            errs[m] = err + 1e-15 * abs(head)
        return FamilySums(vals, errs)

    @staticmethod
    def _em_tail(terms, kappa, n0):
        if not terms:
            return 0.0, 0.0
        d1 = _terms_derivative(terms, kappa)
        d2 = _terms_derivative(d1, kappa)
        d3 = _terms_derivative(d2, kappa)
        d5 = _terms_derivative(_terms_derivative(d3, kappa), kappa)
        f0 = _terms_eval(terms, n0, kappa)
        f1 = _terms_eval(d1, n0, kappa)
        f3 = _terms_eval(d3, n0, kappa)
        f5 = _terms_eval(d5, n0, kappa)
        if kappa == 0.0:
            integral = sum(c * _power_log_integral(alpha, j, n0) for c, alpha, j in terms)
            q_err = 0.0
        else:
            span = 60.0 / abs(kappa)

            def fx(u):
                x = math.exp(u)
                return _terms_eval(terms, x, kappa) * x

            lo, hi = math.log(n0), math.log(n0 + span)
            integral, q_err = integrate.quad(fx, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
            # beyond n0 + span the integrand carries a factor below e^-60
            q_err += abs(_terms_eval(terms, n0 + span, kappa)) * 2.0 / abs(kappa)
        total = integral + 0.5 * f0 - f1 / 12.0 + f3 / 720.0
        err = 2.0 * abs(f5) / 30240.0 + q_err + 1e-14 * abs(total)
        return total, err

    def describe(self):
        return {
            "kind": "power",
            "C": math.exp(self.log_c),
            "p": self.p,
            "cutoff": self.start,
            "psi_slope": self.psi_slope,
            "psi_offset": self.psi_offset,
            "psi1_shift": self.psi1_shift,
        }


@dataclass(frozen=True)
class SqrtStepFamily(BranchFamily):
    """Branches ``|J_k| = a/(k(k+1))`` with step ``floor(sqrt k) - 1``.

    The step is not smooth in ``k``, so sums are explicit up to an adaptive
    index and the rest is bounded by an integral envelope using
    ``sqrt(k) - 2 <= psi_k <= sqrt(k)``.
    """

    a: float
    start: int = 1
    psi1_shift: int = 1
    max_terms: int = 1 << 20
    psi_growth: float = 0.5

    def evaluate(self, k):
        k = np.asarray(k, dtype=np.int64)
        kf = k.astype(float)
        w = math.log(self.a) - np.log(kf) - np.log1p(kf)
        return w, w.copy(), np.floor(np.sqrt(kf)).astype(np.int64) - 1

    @cached_property
    def _table(self):
        k = np.arange(self.start, self.start + self.max_terms, dtype=np.int64)
        w, _, psi = self.evaluate(k)
        return w, psi.astype(float)

    def tail_model(self):
        return TailModel("power", C=self.a, rate=2.0, cutoff=self.start)

    def moment_finite(self, s, q, moment="1"):
        if q > 0:
            return False
        if q < 0:
            return True
        a, _ = MOMENTS[moment]
        return 2.0 * s - 0.5 * a > 1.0

    def divergence_certificate(self, s, q):
        if q > 0:
            return _term_growth_certificate(
                lambda k: s * (math.log(self.a) - math.log(k) - math.log1p(k)) + q * (math.isqrt(k) - 1),
                q,
                self.start,
            )
        return {"rule": "p_series", "exponent": 2.0 * s}

    def _envelope(self, s, q, moment, n, shift):
        """Upper bound for the sum of |terms| over k > n (n >= 4)."""
        a_pow, b_pow = MOMENTS[moment]
        coef = math.exp(s * math.log(self.a) - shift) * 2.0 ** max(0.0, -s) * math.exp(-2.0 * q)
        amp = abs(math.log(self.a)) + math.log(2.0)
        gamma = 2.0 * s - 0.5 * a_pow

        def env(x):
            return coef * x ** (-gamma) * (amp + 2.0 * math.log(x)) ** b_pow * math.exp(q * math.sqrt(x))

        if q == 0.0:
            # expand (amp + 2 log x)**b and integrate term by term
            total = 0.0
            for j in range(b_pow + 1):
                c = math.comb(b_pow, j) * amp ** (b_pow - j) * 2.0 ** j
                total += c * _power_log_integral(-gamma, j, n)
            return coef * total, env
        # substitute x = t**2; past t0 + 80/|q| the exponential factor is below e^-80
        t0 = math.sqrt(n)
        t1 = t0 + 80.0 / abs(q)
        g = lambda t: 2.0 * t * env(t * t)
        val, qerr = integrate.quad(
            lambda u: g(math.exp(u)) * math.exp(u), math.log(t0), math.log(t1), epsabs=0.0, epsrel=1e-9, limit=400
        )
        far = g(t1) * 4.0 / abs(q)
        return (val + qerr + far) * (1.0 + 1e-8), env

    def sums(self, s, q, shift, moments, start=None):
        k0 = self.start if start is None else max(start, self.start)
        w_all, psi_all = self._table
        off = k0 - self.start
        vals, errs = {}, {}
        finite = [m for m in moments if self.moment_finite(s, q, m)]
        for m in moments:
            if m not in finite:
                vals[m] = _divergent_sign(m)
                errs[m] = 0.0
        if not finite:
            return FamilySums(vals, errs)
        if q == 0.0 and "1" in finite:
            # (k(k+1))^-s = k^-2s (1 + 1/k)^-s expanded in Hurwitz zeta values
            vals["1"], errs["1"] = self._hurwitz_plain(s, k0, shift)
            finite = [m for m in finite if m != "1"]
            if not finite:
                return FamilySums(vals, errs)
        n = min(4096, self.max_terms - off)
        while True:
            end = off + n
            w = w_all[off:end]
            psi = psi_all[off:end]
            t = np.exp(s * w + q * psi - shift)
            head = float(np.sum(t))
            last = k0 + n - 1
            bound, env = self._envelope(s, q, "1", last, shift)
            decreasing = env(last + 1.0) <= env(float(last))
            if (bound <= 1e-13 * head and decreasing) or end >= self.max_terms:
                break
            n = min(2 * n, self.max_terms - off)
        for m in finite:
            a_pow, b_pow = MOMENTS[m]
            g = psi ** a_pow * w ** b_pow
            tg = t * g
            head_m = float(np.sum(tg))
            bound_m, _ = self._envelope(s, q, m, last, shift)
            sign = -1.0 if b_pow % 2 else 1.0
            vals[m] = head_m + sign * 0.5 * bound_m
            errs[m] = 0.5 * bound_m + 1e-13 * float(np.sum(np.abs(tg)))
        return FamilySums(vals, errs)

    def _hurwitz_plain(self, s, k0, shift):
        from scipy.special import zeta

        total = 0.0
        coef = 1.0
        j = 0
        while True:
            c = coef * zeta(2.0 * s + j, k0)
            total += c
            if abs(c) <= 1e-17 * abs(total) or j > 60:
                break
            j += 1
            coef *= (-s - j + 1.0) / j
        v = math.exp(s * math.log(self.a) - shift) * total
        return v, 1e-14 * abs(v)

    def describe(self):
        return {"kind": "sqrt_step", "a": self.a, "cutoff": self.start, "psi1_shift": self.psi1_shift}


@dataclass(frozen=True)
class GaussEnvelopeFamily(BranchFamily):
    """Cylinder-wise envelopes of the Gauss branches ``x -> 1/(x+k)``.

    ``w_sup = -2 log k`` and ``w_inf = -2 log(k+1)``.  Only convergence
    questions are answered here; pressures come from the transfer bracket.
    """

    start: int = 1
    psi1_shift: int = 1

    def evaluate(self, k):
        k = np.asarray(k, dtype=np.int64)
        kf = k.astype(float)
        return -2.0 * np.log(kf), -2.0 * np.log1p(kf), k - 2

    def tail_model(self):
        return TailModel("power", C=1.0, rate=2.0, cutoff=self.start)

    def moment_finite(self, s, q, moment="1"):
        if q > 0:
            return False
        if q < 0:
            return True
        a, _ = MOMENTS[moment]
        return 2.0 * s - a > 1.0

    def divergence_certificate(self, s, q):
        if q > 0:
            return _term_growth_certificate(
                lambda k: -2.0 * s * math.log(k + 1.0) + q * (k - 2), q, self.start
            )
        return {"rule": "p_series", "exponent": 2.0 * s}

    def sums(self, s, q, shift, moments, start=None):
        raise NotImplementedError("nonlinear branches have no exact series; use the cylinder bracket")

    def describe(self):
        return {"kind": "gauss", "cutoff": self.start}
