"""Spectral radius of infinite nonnegative Hessenberg matrices.

The matrix has first row ``a_{j-M}`` and row ``i >= 1`` equal to ``a_{j-i+1}``
(zero for negative indices).  Reading ``a_k`` as branch weights with step
``k - 1`` and reflection step ``k + M`` turns ``log rho`` into the one-sided
skew pressure at ``s = 1``; the truncated principal submatrices give an
independent oracle from below.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import ArpackNoConvergence, eigs

from .systems import BranchData, SystemSpec, validate
from .tails import GeometricFamily, TailModel
from .variational import SkewPressureResult, skew_pressure_N

__all__ = [
    "HessenbergSpec",
    "TruncatedRadius",
    "induced_system",
    "spectral_radius_variational",
    "spectral_radius_truncated",
    "truncated_bracket",
    "compare",
]

MAX_ITER = 100_000
DENSE_LIMIT = 10_000


@dataclass(frozen=True)
class HessenbergSpec:
    """Sequence ``a`` (tabulated prefix ``a_0..a_{n-1}``) with optional geometric
    continuation ``a_k = C r^k`` for ``k >= len(a)``, and first-row shift ``M``."""

    a: tuple
    M: int = 0
    tail: TailModel = TailModel("none")

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.ndim != 1 or len(a) == 0:
            raise ValueError("a must be a nonempty sequence")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ValueError("entries a_i must be finite and nonnegative")
        if not a[0] > 0:
            raise ValueError("a_0 must be positive (irreducibility)")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.tail.kind not in ("none", "geometric"):
            raise ValueError("only geometric continuations are supported")
        if self.tail.kind == "geometric":
            if not 0 < self.tail.rate < 1 or self.tail.C <= 0:
                raise ValueError("geometric tail needs C > 0 and 0 < r < 1")
            if self.tail.cutoff != len(a):
                raise ValueError("geometric tail must start right after the tabulated prefix")
        elif len(a) < 3 or not np.any(a[2:] > 0):
            raise ValueError("some a_k with k >= 2 must be positive (sup psi > 0)")

    @classmethod
    def geometric(cls, lam: float, M: int = 0, prefix: int = 64) -> "HessenbergSpec":
        """``a_k = lam^k`` for all ``k >= 0``."""
        if not 0.0 < lam < 1.0:
            raise ValueError("lambda must lie in (0, 1)")
        a = tuple(lam ** k for k in range(prefix))
        return cls(a, M, TailModel("geometric", C=1.0, rate=lam, cutoff=prefix))

    def entries(self, n: int) -> np.ndarray:
        """``a_0..a_{n-1}``, continuing with the geometric tail when present."""
        a = np.zeros(n)
        m = min(n, len(self.a))
        a[:m] = self.a[:m]
        if n > len(self.a) and self.tail.kind == "geometric":
            k = np.arange(len(self.a), n, dtype=float)
            a[len(self.a):] = self.tail.C * np.exp(k * math.log(self.tail.rate))
        return a

    def effective_length(self, rel: float = 1e-18) -> int:
        """Number of leading entries after which the remaining mass is negligible."""
        if self.tail.kind == "none":
            nz = np.nonzero(np.asarray(self.a) > 0)[0]
            return int(nz[-1]) + 1
        total = float(np.sum(self.a)) + self.tail.C * self.tail.rate ** len(self.a) / (1 - self.tail.rate)
        n = len(self.a)
        while self.tail.C * self.tail.rate ** n / (1 - self.tail.rate) > rel * total:
            n += 1
        return n


def induced_system(h: HessenbergSpec) -> SystemSpec:
    """Branch ``k`` with weight ``a_k``, step ``k - 1`` and reflection step ``k + M``."""
    br = [
        BranchData(k, math.log(v), math.log(v), k - 1, k + h.M)
        for k, v in enumerate(h.a)
        if v > 0
    ]
    fam = None
    tm = TailModel("none")
    if h.tail.kind == "geometric":
        fam = GeometricFamily(
            log_c=math.log(h.tail.C),
            log_r=math.log(h.tail.rate),
            psi_slope=1,
            psi_offset=-1,
            start=len(h.a),
            psi1_shift=h.M + 1,
        )
        tm = fam.tail_model()
    spec = SystemSpec("hessenberg", tuple(br), tm, h.M + 1, family=fam, params=(h.M,))
    return validate(spec, mode="hessenberg", check_regular=False)


def spectral_radius_variational(h: HessenbergSpec, detail: bool = False):
    """``log rho`` as the infimum over ``q <= 0`` of ``log sum a_k e^{q(k-1)}``."""
    res: SkewPressureResult = skew_pressure_N(induced_system(h), 1.0)
    return res if detail else res.value


def _balance_exponent(a: np.ndarray) -> float:
    # exponent c <= 0 minimising sum a_d e^{c(d-1)}; the similarity
    # diag(e^{c i}) keeps the spectrum and tames the non-normality that
    # otherwise ruins power iteration when the minimiser is interior
    d = np.arange(len(a)) - 1.0
    mask = a > 0
    la, d = np.log(a[mask]), d[mask]
    f = lambda c: np.logaddexp.reduce(la + c * d)
    res = minimize_scalar(f, bounds=(-50.0, 0.0), method="bounded", options={"xatol": 1e-12})
    return float(res.x) if f(res.x) < f(0.0) else 0.0


def _band_matrix(h: HessenbergSpec, k: int, c: Optional[float] = None):
    """Sparse ``k x k`` block, conjugated by ``diag(e^{c i})``."""
    L = min(h.effective_length(), k + h.M + 1)
    a = h.entries(L)
    if c is None:
        c = _balance_exponent(a)
    diags, offsets = [], []
    # rows i >= 1: entry a_d at column j = i + d - 1, scaled by e^{c(d-1)}
    for d in range(L):
        off = d - 1
        if a[d] == 0.0 or off >= k:
            continue
        vals = np.full(k - abs(off), a[d] * math.exp(c * off))
        if off >= 0:
            vals[0] = 0.0  # row 0 is filled separately
        diags.append(vals)
        offsets.append(off)
    H = sparse.diags(diags, offsets, shape=(k, k), format="lil")
    row0 = np.zeros(k)
    for j in range(k):
        d = j - h.M
        if 0 <= d < L:
            row0[j] = a[d] * math.exp(c * j)
    H[0, :] = row0
    return H.tocsr()


def _perron_guess(H) -> np.ndarray:
    # near-critical sequences have a spectral gap of order 1/k^2, so plain
    # power iteration from the ones vector is hopeless; Arnoldi supplies a
    # start vector and the power iteration below certifies the bracket
    k = H.shape[0]
    if k <= 64:
        return np.ones(k)
    try:
        _, vec = eigs(H, k=1, which="LR", v0=np.ones(k), tol=1e-13, maxiter=20 * k)
    except ArpackNoConvergence:
        return np.ones(k)
    v = np.abs(vec[:, 0].real)
    return np.maximum(v / v.max(), 1e-300)


@dataclass(frozen=True)
class TruncatedRadius:
    k: int
    log_rho: float
    log_lower: float
    log_upper: float
    iterations: int


def truncated_bracket(
    h: HessenbergSpec, k: int, tol: float = 1e-11, start: Optional[np.ndarray] = None
) -> tuple:
    """Power iteration on the ``k x k`` principal submatrix.

    Returns ``(TruncatedRadius, eigenvector)``.  The bracket is the
    Collatz-Wielandt pair ``min (Hv)_i/v_i <= rho_k <= max (Hv)_i/v_i``.
    """
    if k < 2:
        raise ValueError("k must be at least 2")
    if k > DENSE_LIMIT:
        raise ValueError(f"k must not exceed {DENSE_LIMIT}")
    H = _band_matrix(h, k)
    if start is None:
        start = _perron_guess(H)
    v = np.asarray(start, float).copy()
    if len(v) != k or np.any(v <= 0):
        raise ValueError("start vector must be positive with length k")
    v /= v.max()
    # periodic blocks (e.g. only steps of one parity) carry -rho in the
    # spectrum and make the plain iteration oscillate; after a stall the
    # iteration switches to H + sigma I, which is primitive with the same
    # Perron vector
    sigma, it = 0.0, 0
    stall = MAX_ITER // 10
    lo = hi = 0.0
    while it < MAX_ITER:
        it += 1
        w = H @ v + sigma * v
        ratio = w / v
        lo, hi = ratio.min(), ratio.max()
        if hi - lo <= tol * (lo - sigma):
            lo, hi = lo - sigma, hi - sigma
            r = TruncatedRadius(k, math.log(0.5 * (lo + hi)), math.log(lo), math.log(hi), it)
            return r, w / w.max()
        v = w / w.max()
        # guard against underflow in far coordinates
        np.maximum(v, 1e-300, out=v)
        if it == stall and sigma == 0.0:
            sigma = 0.5 * (lo + hi)
    raise RuntimeError(f"power iteration did not converge in {MAX_ITER} iterations (k={k})")


def spectral_radius_truncated(h: HessenbergSpec, k: int, tol: float = 1e-11) -> float:
    """Log of the leading eigenvalue of the top-left ``k x k`` block."""
    return truncated_bracket(h, k, tol)[0].log_rho


def compare(h: HessenbergSpec, k_list: Sequence[int], tol: float = 1e-11) -> list:
    """Gap between the variational value and truncated oracles, one row per ``k``."""
    var = spectral_radius_variational(h)
    rows = []
    for k in sorted(k_list):
        r, _ = truncated_bracket(h, k, tol)
        rows.append(
            {
                "k": k,
                "truncated": r.log_rho,
                "truncated_lower": r.log_lower,
                "truncated_upper": r.log_upper,
                "iterations": r.iterations,
                "variational": var,
                "gap": abs(var - r.log_rho),
            }
        )
    return rows
