"""Seeded symbolic simulation of the Z- and N-extension level processes.

Only digits are simulated.  The level of the free walk is the partial sum of
``psi`` over the digits; the reflected walk uses ``psi1`` whenever it sits on
level 0.  Digits are i.i.d. under a Bernoulli Gibbs weight vector; for the
Gauss system at ``s = 1`` they are the continued-fraction digits of a point
drawn exactly from the Gauss measure.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import mpmath
import numba
import numpy as np

from .pressure import GibbsWeights, gibbs_weights, moment_sums
from .systems import DigitSequence, SystemSpec
from .tails import GeometricFamily, PowerFamily, SqrtStepFamily

__all__ = [
    "DigitSource",
    "LevelTrace",
    "LemmaCheck",
    "RunSummary",
    "RecurrenceSummary",
    "digit_source",
    "sample_digits",
    "sample_gauss_digits",
    "run_walk",
    "check_lemma",
    "step_gap_norm",
    "recurrence_stats",
    "thread_count",
]

TAIL_MASS_TOL = 1e-12
GAUSS_MAX_STEPS = 20_000


def thread_count() -> int:
    env = os.environ.get("SKEWPERIODIC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


# ------------------------------------------------------------------ digits


@dataclass(frozen=True)
class DigitSource:
    """Weights for the tabulated head plus the family that generates the tail.

    ``kind`` is ``"bernoulli"`` for i.i.d. digits or ``"gauss_measure"`` for
    continued-fraction digits of a Gauss-distributed point.
    """

    kind: str
    weights: Optional[GibbsWeights] = None
    family: Optional[object] = None
    s: float = 0.0
    q: float = 0.0


def digit_source(spec: SystemSpec, s: float, q: float = 0.0) -> DigitSource:
    if spec.is_nonlinear:
        if spec.name == "gauss" and s == 1.0 and q == 0.0:
            return DigitSource("gauss_measure", s=1.0, q=0.0)
        raise ValueError("unsampleable: nonlinear Gibbs measures are only available for Gauss at s=1, q=0")
    cutoff = spec.family.start if spec.family is not None else int(spec.indices[-1]) + 1
    gw = gibbs_weights(spec, s, q, cutoff)
    return DigitSource("bernoulli", gw, spec.family, s, q)


def _log_floor_pareto_mass(k: np.ndarray, start: int, beta: float) -> np.ndarray:
    # log P(floor(X) = k) for X with density prop. to x^-beta on [start, inf)
    kf = k.astype(float)
    a = 1.0 - beta
    return a * np.log(kf / start) + np.log(-np.expm1(a * np.log1p(1.0 / kf)))


def _sample_tail(src: DigitSource, m: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draws from the tail part of the weights, by rejection."""
    fam, s, q = src.family, src.s, src.q
    start = fam.start
    if isinstance(fam, GeometricFamily):
        ratio = s * fam.log_r + q * fam.psi_slope
        p = -math.expm1(ratio)
        return start + rng.geometric(p, size=m).astype(np.int64) - 1
    if isinstance(fam, PowerFamily):
        beta, log_c = fam.p * s, fam.log_c
    elif isinstance(fam, SqrtStepFamily):
        beta, log_c = 2.0 * s, math.log(fam.a)
    else:
        raise ValueError(f"unsampleable tail for family {type(fam).__name__}")
    if not beta > 1.0 or q > 0:
        raise ValueError("unsampleable tail: proposal exponent must exceed 1 with q <= 0")
    # target <= C^s k^-beta e^{q psi_k}; floor-Pareto mass >= (beta-1) start^(beta-1) (k+1)^-beta;
    # psi is nondecreasing so e^{q psi_k} <= e^{q psi_start} for q <= 0
    _, _, psi0 = fam.evaluate(np.array([start]))
    log_bound = (
        s * log_c + beta * math.log1p(1.0 / start) + q * float(psi0[0])
        - math.log(beta - 1.0) - (beta - 1.0) * math.log(start)
    )
    out = np.empty(0, dtype=np.int64)
    while len(out) < m:
        need = max(16, int(1.5 * (m - len(out))))
        u = rng.random(need)
        x = start * u ** (-1.0 / (beta - 1.0))
        x = np.minimum(x, 9.0e18)
        k = np.floor(x).astype(np.int64)
        wk, _, pk = fam.evaluate(k)
        log_acc = s * wk + q * pk - _log_floor_pareto_mass(k, start, beta) - log_bound
        if np.any(log_acc > 1e-12):
            raise AssertionError("rejection bound violated")
        acc = np.log(rng.random(need)) < log_acc
        out = np.concatenate([out, k[acc]])
    return out[:m]


def sample_digits(source: Union[DigitSource, GibbsWeights], n: int, seed) -> DigitSequence:
    """``n`` digits from ``source``; identical output for identical seed."""
    rng = np.random.default_rng(seed)
    if isinstance(source, GibbsWeights):
        source = DigitSource("bernoulli", source, None, source.s, source.q)
    if source.kind == "gauss_measure":
        return DigitSequence(sample_gauss_digits(n, rng), _seed_repr(seed))
    gw = source.weights
    if source.family is None and gw.tail_mass_bound >= TAIL_MASS_TOL:
        raise ValueError("unsampleable: tail mass is not negligible and no tail sampler is available")
    cdf = np.cumsum(gw.probs)
    head_total = cdf[-1]
    use_tail = source.family is not None and gw.tail_mass > 0
    total = head_total + (gw.tail_mass if use_tail else 0.0)
    u = rng.random(n) * total
    idx = np.searchsorted(cdf, u, side="right")
    digits = np.empty(n, dtype=np.int64)
    in_head = idx < len(cdf)
    digits[in_head] = gw.indices[idx[in_head]]
    m = int((~in_head).sum())
    if m:
        digits[~in_head] = _sample_tail(source, m, rng)
    return DigitSequence(digits, _seed_repr(seed))


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return int(seed.generate_state(1)[0])
    return seed


def _cf_digits(p: int, q: int, limit: int) -> list:
    out = []
    # x = p/q in (0,1); Gauss digit is floor(1/x)
    while p and len(out) < limit:
        a, r = divmod(q, p)
        out.append(a)
        q, p = p, r
    return out


def sample_gauss_digits(n: int, rng: np.random.Generator) -> np.ndarray:
    """Continued-fraction digits of ``x = 2^U - 1`` with ``U`` uniform.

    ``x`` is enclosed between two dyadic rationals and only the digits shared by
    both expansions are kept, so every returned digit is exact.  Precision is
    extended with further random bits until ``n`` digits are certified.
    """
    if n > GAUSS_MAX_STEPS:
        raise ValueError(f"Gauss digit sampling is limited to {GAUSS_MAX_STEPS} steps")
    bits = 4 * n + 64
    U = int.from_bytes(rng.bytes((bits + 7) // 8), "big") >> ((8 * ((bits + 7) // 8)) - bits)
    while True:
        prec = bits + 64
        with mpmath.workprec(prec):
            u_lo = mpmath.mpf(U) / mpmath.mpf(2) ** bits
            u_hi = mpmath.mpf(U + 1) / mpmath.mpf(2) ** bits
            x_lo = mpmath.power(2, u_lo) - 1
            x_hi = mpmath.power(2, u_hi) - 1
            scale = 2 ** prec
            p_lo = int(mpmath.floor(x_lo * scale))
            p_hi = int(mpmath.ceil(x_hi * scale))
        if p_lo <= 0:
            p_lo = 1
        d_lo = _cf_digits(p_lo, scale, n + 1)
        d_hi = _cf_digits(p_hi, scale, n + 1)
        common = 0
        for a, b in zip(d_lo, d_hi):
            if a != b:
                break
            common += 1
        # the last shared digit may still be cut by the enclosure
        if common - 1 >= n:
            digits = np.array(d_lo[:n], dtype=object)
            if any(d > 9_000_000_000_000_000_000 for d in digits):
                raise OverflowError("continued-fraction digit exceeds int64")
            return digits.astype(np.int64)
        extra = bits
        U = (U << extra) | (int.from_bytes(rng.bytes((extra + 7) // 8), "big") >> (8 * ((extra + 7) // 8) - extra))
        bits += extra


# ------------------------------------------------------------------- walks


@numba.njit(cache=True, nogil=True)
def _walk_kernel(psi, psi1):
    n = psi.shape[0]
    z = np.zeros(n + 1, np.int64)
    lev = np.zeros(n + 1, np.int64)
    a = np.zeros(n + 1, np.int64)
    visits = np.zeros(n + 1, np.int64)
    exc = np.zeros(n + 1, np.int64)
    visits[0] = 1
    for i in range(n):
        z[i + 1] = z[i] + psi[i]
        if lev[i] == 0:
            lev[i + 1] = psi1[i]
        else:
            lev[i + 1] = lev[i] + psi[i]
        # boundary correction: a jumps by psi1 - psi exactly when a == -z
        if a[i] == -z[i]:
            a[i + 1] = a[i] + psi1[i] - psi[i]
        else:
            a[i + 1] = a[i]
        visits[i + 1] = visits[i] + (1 if lev[i + 1] == 0 else 0)
        e = -z[i + 1]
        exc[i + 1] = exc[i] if exc[i] > e else e
    return z, lev, a, visits, exc


@dataclass(frozen=True)
class LevelTrace:
    """Level processes for one digit sequence.

    Index ``n`` refers to the state after ``n`` digits.  ``boundary_visits[n]``
    counts times ``0..n`` at which the reflected walk sits on level 0, and
    ``max_excursion[n] = max_{k <= n} -levels_Z[k]``.
    """

    steps: int
    levels_Z: np.ndarray
    levels_N: np.ndarray
    boundary_visits: np.ndarray
    max_excursion: np.ndarray
    levels_N_recursion: np.ndarray = field(repr=False)

    @property
    def terminal_N(self) -> int:
        return int(self.levels_N[-1])

    @property
    def total_boundary_visits(self) -> int:
        return int(self.boundary_visits[-1])


def step_gap_norm(spec: SystemSpec) -> int:
    """``sup_k (psi1_k - psi_k)``."""
    gaps = spec.psi1 - spec.psi
    g = int(gaps.max()) if len(gaps) else 0
    if spec.family is not None:
        g = max(g, int(spec.family.psi1_shift))
    return g


def run_walk(spec: SystemSpec, digits: Union[DigitSequence, np.ndarray]) -> LevelTrace:
    d = digits.digits if isinstance(digits, DigitSequence) else np.asarray(digits, dtype=np.int64)
    _, _, psi, psi1 = spec.evaluate(d) if len(d) else (None, None, np.zeros(0, np.int64), np.zeros(0, np.int64))
    z, lev, a, visits, exc = _walk_kernel(np.ascontiguousarray(psi, np.int64), np.ascontiguousarray(psi1, np.int64))
    rec = z + a
    if not np.array_equal(rec, lev):
        raise AssertionError("state rule and boundary recursion disagree")
    return LevelTrace(len(d), z, lev, visits, exc, rec)


@dataclass(frozen=True)
class LemmaCheck:
    sandwich_violations: int
    visits_violations: int
    visits_strict_violations: int
    nonneg_violations: int
    gap_norm: int

    @property
    def ok(self) -> bool:
        return not (
            self.sandwich_violations or self.visits_violations or self.visits_strict_violations or self.nonneg_violations
        )


def check_lemma(trace: LevelTrace, gap_norm: int) -> LemmaCheck:
    """Count violations of the excursion sandwich and of the local-time bound.

    ``visits_strict`` uses visits at times ``0..n-1`` only, which is the
    sharper form of the bound.
    """
    diff = trace.levels_N - trace.levels_Z
    exc = trace.max_excursion
    sand = int(np.count_nonzero((exc > diff) | (diff > exc + gap_norm)))
    vis = int(np.count_nonzero(exc > gap_norm * trace.boundary_visits))
    prior = np.concatenate([[0], trace.boundary_visits[:-1]])
    vis_strict = int(np.count_nonzero(exc > gap_norm * prior))
    nonneg = int(np.count_nonzero((trace.levels_N < 0) | (trace.levels_N < trace.levels_Z)))
    return LemmaCheck(sand, vis, vis_strict, nonneg, gap_norm)


# ------------------------------------------------------------ recurrence


@dataclass(frozen=True)
class RunSummary:
    run: int
    terminal_N: int
    terminal_Z: int
    revisited: bool
    revisited_second_half: bool
    boundary_visits: int
    max_excursion: int
    lemma_ok: bool
    sandwich_violations: int
    visits_violations: int
    psi_sum: int
    psi_sq_sum: float


@dataclass(frozen=True)
class RecurrenceSummary:
    system: str
    s: float
    runs: int
    steps: int
    seed: int
    revisit_fraction: float
    second_half_revisit_fraction: float
    mean_terminal_N: float
    mean_terminal_Z: float
    empirical_drift: float
    empirical_drift_se: float
    analytic_drift: Optional[float]
    drift_z_score: Optional[float]
    lemma_violations: int
    running_mean_growth: Optional[list]
    label: Optional[str]
    per_run: list = field(repr=False, default_factory=list)

    def to_dict(self, include_runs: bool = False) -> dict:
        d = asdict(self)
        if not include_runs:
            d.pop("per_run")
        return d


def _one_run(spec, src, steps, seq, idx, gap):
    dig = sample_digits(src, steps, seq)
    tr = run_walk(spec, dig)
    chk = check_lemma(tr, gap)
    lev = tr.levels_N
    left = np.flatnonzero(lev[1:] != 0)
    revisit = False
    if len(left):
        first_out = left[0] + 1
        revisit = bool(np.any(lev[first_out:] == 0))
    second = bool(np.any(lev[steps // 2 + 1:] == 0))
    _, _, psi, _ = spec.evaluate(dig.digits)
    return RunSummary(
        run=idx,
        terminal_N=int(lev[-1]),
        terminal_Z=int(tr.levels_Z[-1]),
        revisited=revisit,
        revisited_second_half=second,
        boundary_visits=tr.total_boundary_visits,
        max_excursion=int(tr.max_excursion[-1]),
        lemma_ok=chk.ok,
        sandwich_violations=chk.sandwich_violations,
        visits_violations=chk.visits_violations + chk.visits_strict_violations + chk.nonneg_violations,
        psi_sum=int(psi.sum()),
        psi_sq_sum=float(np.sum(psi.astype(float) ** 2)),
    )


def recurrence_stats(
    spec: SystemSpec,
    s: float,
    runs: int,
    steps: int,
    seed: int,
    label: Optional[str] = None,
    threads: Optional[int] = None,
) -> RecurrenceSummary:
    """Monte-Carlo recurrence statistics of the reflected walk under ``mu_{s phi}``.

    ``revisit_fraction`` is the share of runs that return to level 0 after
    first leaving it; ``second_half_revisit_fraction`` only counts returns
    in the second half of the horizon.  Per-run seeds are spawned from
    ``seed`` so results do not depend on the thread count.
    """
    if runs < 1 or steps < 1:
        raise ValueError("runs and steps must be positive")
    src = digit_source(spec, s)
    gap = step_gap_norm(spec)
    seqs = np.random.SeedSequence(seed).spawn(runs)
    nt = thread_count() if threads is None else threads
    if nt > 1 and runs > 1:
        with ThreadPoolExecutor(max_workers=nt) as ex:
            per = list(ex.map(lambda i: _one_run(spec, src, steps, seqs[i], i, gap), range(runs)))
    else:
        per = [_one_run(spec, src, steps, seqs[i], i, gap) for i in range(runs)]
    total = runs * steps
    mean = sum(r.psi_sum for r in per) / total
    var = max(math.fsum(r.psi_sq_sum for r in per) / total - mean * mean, 0.0)
    se = math.sqrt(var / total)
    analytic = None
    zscore = None
    growth = None
    if src.kind == "bernoulli":
        from .analysis import IndeterminateDrift, drift

        try:
            analytic = drift(spec, s, 0.0)
        except IndeterminateDrift:
            analytic = None
        if analytic is not None and math.isfinite(analytic):
            ms = moment_sums(spec, s, 0.0, ["psi", "psi2"])
            e2, _ = ms.expectation("psi2")
            if math.isfinite(e2):
                se = math.sqrt(max(e2 - analytic * analytic, 0.0) / total)
            zscore = (mean - analytic) / se if se > 0 else (0.0 if mean == analytic else math.inf)
    else:
        analytic = math.inf
    if analytic is not None and not math.isfinite(analytic):
        # no finite target: report how the running mean grows with the horizon
        growth = _running_means(spec, src, steps, seqs, (0.25, 0.5, 1.0))
    return RecurrenceSummary(
        system=spec.descriptor,
        s=s,
        runs=runs,
        steps=steps,
        seed=seed,
        revisit_fraction=sum(r.revisited for r in per) / runs,
        second_half_revisit_fraction=sum(r.revisited_second_half for r in per) / runs,
        mean_terminal_N=sum(r.terminal_N for r in per) / runs,
        mean_terminal_Z=sum(r.terminal_Z for r in per) / runs,
        empirical_drift=mean,
        empirical_drift_se=se,
        analytic_drift=analytic,
        drift_z_score=zscore,
        lemma_violations=sum(r.sandwich_violations + r.visits_violations for r in per),
        running_mean_growth=growth,
        label=label,
        per_run=per,
    )


def _running_means(spec, src, steps, seqs, fracs):
    # replays the first run; digits are deterministic in the seed
    dig = sample_digits(src, steps, seqs[0])
    _, _, psi, _ = spec.evaluate(dig.digits)
    cs = np.cumsum(psi)
    out = []
    for f in fracs:
        m = max(1, int(steps * f))
        out.append({"steps": m, "running_mean": float(cs[m - 1]) / m})
    return out
