"""Base systems: countable full-branch interval maps with step data.

A system is a tabulated prefix of branches plus an optional analytic family
covering every index past the prefix.  Each branch carries a log-weight
(log of the branch length for linear branches, or sup/inf of the log of the
inverse-branch derivative for nonlinear ones), an integer step ``psi >= -1``
and a reflection step ``psi1`` with ``psi <= psi1 <= psi + M``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .tails import (
    BranchFamily,
    GaussEnvelopeFamily,
    GeometricFamily,
    PowerFamily,
    SqrtStepFamily,
    TailModel,
)

__all__ = [
    "BranchData",
    "TailModel",
    "SystemSpec",
    "DigitSequence",
    "GaussBranches",
    "ValidationError",
    "builtin_simple_walk",
    "builtin_lueroth",
    "builtin_gauss",
    "builtin_linearized_gauss",
    "builtin_power_lueroth",
    "load_system",
    "system_from_dict",
    "system_to_dict",
    "resolve_system",
    "BUILTIN_PARAMS",
]

ZETA2 = math.pi ** 2 / 6.0


class ValidationError(ValueError):
    """A system violates one of the standing assumptions; names field and rule."""

    def __init__(self, field_name: str, rule: str):
        super().__init__(f"{field_name}: {rule}")
        self.field = field_name
        self.rule = rule


@dataclass(frozen=True)
class BranchData:
    k: int
    log_weight_sup: float
    log_weight_inf: float
    psi: int
    psi1: int


@dataclass(frozen=True)
class DigitSequence:
    digits: np.ndarray
    seed: int

    def __len__(self):
        return len(self.digits)


class GaussBranches:
    """Inverse branches ``h_k(x) = 1/(x+k)`` of the Gauss map on ``[0, 1]``."""

    name = "gauss"

    def inverse(self, k, x):
        return 1.0 / (np.asarray(x, dtype=float) + k)

    def log_abs_derivative(self, k, x):
        return -2.0 * np.log(np.asarray(x, dtype=float) + k)

    def cylinder(self, k):
        """Endpoints of the cylinder ``h_k([0, 1])``."""
        return 1.0 / (k + 1.0), 1.0 / k

    def cell_log_derivative_bounds(self, k, x_lo, x_hi):
        """sup/inf of ``log|h_k'|`` over ``[x_lo, x_hi]`` (decreasing in x)."""
        return -2.0 * np.log(x_lo + k), -2.0 * np.log(x_hi + k)

    def cell_image(self, k, x_lo, x_hi):
        """Image interval ``h_k([x_lo, x_hi])`` as ``(low, high)``."""
        return 1.0 / (x_hi + k), 1.0 / (x_lo + k)

    def tail_weight_bounds(self, s, q, cutoff, x_lo, x_hi):
        """Bounds on ``sum_{k > cutoff} |h_k'(x)|**s e^{q(k-2)}`` over a cell.

        Returns ``(upper, lower)`` arrays; the images of these branches lie in
        ``[0, 1/(cutoff+1)]``.
        """
        from scipy.special import zeta

        if s < 0:
            raise ValueError("transfer bracket needs s >= 0")
        if q == 0.0:
            upper = zeta(2.0 * s, cutoff + 1.0 + x_lo)
            lower = zeta(2.0 * s, cutoff + 1.0 + x_hi)
            return upper, lower
        if 2.0 * s <= 1.0:
            # dominate (k + x)^(-2s) by (cutoff + 1 + x)^(-2s) and sum the geometric factor
            geo = math.exp(q * (cutoff - 1)) / (-math.expm1(q))
            upper = (cutoff + 1.0 + x_lo) ** (-2.0 * s) * geo
            return upper, np.zeros_like(upper)
        # blocks [b_i, b_{i+1}) of geometrically growing length; inside a block
        # e^{q(k-2)} is bracketed by its endpoint values and the power mass is a
        # difference of Hurwitz zeta values, so both bounds tend to the q = 0 ones
        b = np.unique(np.floor(cutoff + 1.0 + np.concatenate([[0.0], 1.2 ** np.arange(0, 160)])))
        b = b[b < 1e15]
        z_lo = zeta(2.0 * s, b[None, :] + np.asarray(x_lo, float)[:, None])
        z_hi = zeta(2.0 * s, b[None, :] + np.asarray(x_hi, float)[:, None])
        e_start = np.exp(q * (b - 2.0))
        e_end = np.exp(q * (b[1:] - 3.0))
        upper = ((z_lo[:, :-1] - z_lo[:, 1:]) * e_start[None, :-1]).sum(axis=1) + z_lo[:, -1] * e_start[-1]
        lower = ((z_hi[:, :-1] - z_hi[:, 1:]) * e_end[None, :]).sum(axis=1)
        return upper, np.maximum(lower, 0.0)

    def distortion_constant(self):
        """Uniform bound on ``|log|h_w'(x)| - log|h_w'(y)||`` over all words."""
        return 2.0 * math.log(2.0)


@dataclass(frozen=True)
class SystemSpec:
    name: str
    branches: tuple
    tail: TailModel
    M: int
    kind: str = "locally_constant"
    family: Optional[BranchFamily] = None
    evaluator: Optional[object] = None
    params: tuple = ()
    strongly_regular: Optional[bool] = None
    mode: str = "standard"

    def __post_init__(self):
        br = self.branches
        object.__setattr__(self, "_k", np.array([b.k for b in br], dtype=np.int64))
        object.__setattr__(self, "_w_sup", np.array([b.log_weight_sup for b in br], dtype=float))
        object.__setattr__(self, "_w_inf", np.array([b.log_weight_inf for b in br], dtype=float))
        object.__setattr__(self, "_psi", np.array([b.psi for b in br], dtype=np.int64))
        object.__setattr__(self, "_psi1", np.array([b.psi1 for b in br], dtype=np.int64))

    # tabulated prefix as arrays
    @property
    def indices(self) -> np.ndarray:
        return self._k

    @property
    def w_sup(self) -> np.ndarray:
        return self._w_sup

    @property
    def w_inf(self) -> np.ndarray:
        return self._w_inf

    @property
    def psi(self) -> np.ndarray:
        return self._psi

    @property
    def psi1(self) -> np.ndarray:
        return self._psi1

    @property
    def is_finite(self) -> bool:
        return self.family is None

    @property
    def is_nonlinear(self) -> bool:
        return self.kind == "nonlinear"

    @property
    def psi_bounded_above(self) -> bool:
        return self.family is None or self.family.psi_bounded_above

    @property
    def descriptor(self) -> str:
        if self.params:
            return f"{self.name}:" + ",".join(repr(float(p)) if isinstance(p, float) else str(p) for p in self.params)
        return self.name

    def evaluate(self, k):
        """``(w_sup, w_inf, psi, psi1)`` for arbitrary branch indices."""
        k = np.atleast_1d(np.asarray(k, dtype=np.int64))
        w_sup = np.empty(k.shape)
        w_inf = np.empty(k.shape)
        psi = np.empty(k.shape, dtype=np.int64)
        psi1 = np.empty(k.shape, dtype=np.int64)
        if len(self._k):
            idx_c = np.clip(np.searchsorted(self._k, k), 0, len(self._k) - 1)
            in_tab = self._k[idx_c] == k
        else:
            idx_c = np.zeros(k.shape, dtype=np.int64)
            in_tab = np.zeros(k.shape, dtype=bool)
        w_sup[in_tab] = self._w_sup[idx_c[in_tab]]
        w_inf[in_tab] = self._w_inf[idx_c[in_tab]]
        psi[in_tab] = self._psi[idx_c[in_tab]]
        psi1[in_tab] = self._psi1[idx_c[in_tab]]
        rest = ~in_tab
        if rest.any():
            if self.family is None or np.any(k[rest] < self.family.start):
                raise ValueError("branch index not declared by the system")
            ws, wi, ps = self.family.evaluate(k[rest])
            w_sup[rest], w_inf[rest], psi[rest] = ws, wi, ps
            psi1[rest] = ps + self.family.psi1_shift
        return w_sup, w_inf, psi, psi1

    def branch(self, k: int) -> BranchData:
        ws, wi, ps, p1 = self.evaluate([k])
        return BranchData(int(k), float(ws[0]), float(wi[0]), int(ps[0]), int(p1[0]))

    def with_psi1(self, shifts) -> "SystemSpec":
        """Copy with reflection steps ``psi + shift`` on the prefix (and family shift)."""
        shifts = list(shifts)
        new = tuple(replace(b, psi1=b.psi + int(shifts[i % len(shifts)])) for i, b in enumerate(self.branches))
        fam = self.family
        if fam is not None:
            fam = replace(fam, psi1_shift=int(shifts[-1]))
        return replace(self, branches=new, family=fam)


# ----------------------------------------------------------------- validation


def _psi_sup(spec: SystemSpec) -> float:
    top = float(spec.psi.max()) if len(spec.psi) else -math.inf
    if spec.family is not None:
        if not spec.family.psi_bounded_above:
            return math.inf
        _, _, ps = spec.family.evaluate(np.array([spec.family.start]))
        top = max(top, float(ps[0]))
    return top


def _psi_inf(spec: SystemSpec) -> float:
    low = float(spec.psi.min()) if len(spec.psi) else math.inf
    if spec.family is not None:
        sample = spec.family.start + np.unique(np.geomspace(1, 1e6, 64).astype(np.int64)) - 1
        _, _, ps = spec.family.evaluate(sample)
        low = min(low, float(ps.min()))
    return low


def validate(spec: SystemSpec, mode: str = "standard", check_regular: bool = True) -> SystemSpec:
    """Enforce the standing assumptions; returns the system with flags filled in.

    ``mode="hessenberg"`` drops the requirement that weights come from a
    contracting map (branch weights may exceed one) but keeps the step rules.
    """
    if spec.M < 0:
        raise ValidationError("M", "must be a nonnegative integer")
    if spec.kind not in ("locally_constant", "nonlinear"):
        raise ValidationError("kind", f"unknown kind {spec.kind!r}")
    ks = spec.indices
    if len(ks) and (np.any(np.diff(ks) <= 0) or ks[0] < 0):
        raise ValidationError("branches.k", "indices must be nonnegative and strictly increasing")
    if spec.family is not None:
        if spec.tail.kind == "none":
            raise ValidationError("tail", "an infinite branch family needs a tail model")
        if len(ks) and spec.family.start <= ks[-1]:
            raise ValidationError("tail.cutoff", "must exceed every tabulated index")
        if not 0 <= spec.family.psi1_shift <= spec.M:
            raise ValidationError("tail.psi1_shift", "reflection shift must lie in [0, M]")
    elif spec.tail.kind != "none":
        raise ValidationError("tail", "finite system must have tail kind 'none'")
    if len(ks) == 0 and spec.family is None:
        raise ValidationError("branches", "system has no branches")
    if np.any(spec.w_inf > spec.w_sup + 1e-15):
        raise ValidationError("log_weight_inf", "must not exceed log_weight_sup")
    if np.any(spec.psi < -1):
        raise ValidationError("psi", "steps must be >= -1")
    if np.any(spec.psi1 < spec.psi) or np.any(spec.psi1 > spec.psi + spec.M):
        raise ValidationError("psi1", "reflection step must satisfy psi <= psi1 <= psi + M")
    if spec.kind == "locally_constant" and np.any(spec.w_inf != spec.w_sup):
        raise ValidationError("log_weight_inf", "locally constant branches need sup == inf")
    if _psi_inf(spec) != -1:
        raise ValidationError("psi", "standing assumption inf psi = -1 violated")
    if not _psi_sup(spec) > 0:
        raise ValidationError("psi", "standing assumption sup psi > 0 violated")
    if mode == "standard":
        if np.any(spec.w_sup > 0.0):
            raise ValidationError("log_weight_sup", "branches must be contractions (log weight <= 0)")
        if spec.family is not None:
            fam = spec.family
            rng = np.random.default_rng(12345)
            sample = fam.start + rng.integers(0, 10**6, size=100)
            ws, _, _ = fam.evaluate(sample)
            bound = spec.tail.bound(sample)
            if np.any(np.exp(ws) > bound * (1 + 1e-12)):
                raise ValidationError("tail", "declared tail bound is violated by the family")
    regular = spec.strongly_regular
    if check_regular and mode == "standard":
        regular = _probe_regular(spec)
        if not regular:
            raise ValidationError("branches", "system is not strongly regular (no s with 0 < P(s phi) < inf)")
    return replace(spec, strongly_regular=regular, mode=mode)


def _probe_regular(spec: SystemSpec) -> bool:
    from .pressure import base_pressure

    probes = [0.5, 1.0]
    tm = spec.tail
    if tm.kind == "power":
        probes = [1.0 / tm.rate + 0.05, 1.0 / tm.rate + 0.5]
    elif tm.kind == "none":
        probes = [0.0, 1.0]
    for s in probes:
        v = base_pressure(spec, s, 0.0)
        if 0.0 < v < math.inf:
            return True
    return False


# ------------------------------------------------------------------- builtins


def _make(name, branches, tail, M, family=None, kind="locally_constant", evaluator=None, params=()):
    spec = SystemSpec(
        name=name,
        branches=tuple(branches),
        tail=tail,
        M=M,
        kind=kind,
        family=family,
        evaluator=evaluator,
        params=tuple(params),
    )
    return validate(spec)


def builtin_simple_walk(c1: float, c2: float) -> SystemSpec:
    """Two linear branches of lengths ``c1`` (step -1) and ``c2`` (step +1)."""
    if not (0.0 < c1 < 1.0 and 0.0 < c2 < 1.0):
        raise ValueError("simple walk needs c1, c2 in (0, 1)")
    if c1 + c2 > 1.0 + 1e-15:
        raise ValueError("simple walk needs c1 + c2 <= 1")
    br = [
        BranchData(1, math.log(c1), math.log(c1), -1, 0),
        BranchData(2, math.log(c2), math.log(c2), 1, 2),
    ]
    return _make("simplewalk", br, TailModel("none"), 1, params=(c1, c2))


def builtin_lueroth(lam: float, prefix: int = 64) -> SystemSpec:
    """Lueroth-type partition ``J_k = (lam^k, lam^(k-1))`` with step ``k - 2``."""
    if not 0.0 < lam < 1.0:
        raise ValueError("Lueroth parameter must lie in (0, 1)")
    ll, l1 = math.log(lam), math.log1p(-lam)
    br = []
    for k in range(1, prefix + 1):
        w = l1 + (k - 1) * ll
        br.append(BranchData(k, w, w, k - 2, k - 1))
    fam = GeometricFamily(log_c=l1 - ll, log_r=ll, psi_slope=1, psi_offset=-2, start=prefix + 1)
    return _make("lueroth", br, fam.tail_model(), 1, family=fam, params=(lam,))


def builtin_linearized_gauss(prefix: int = 64) -> SystemSpec:
    """Linear branches of length ``1/(k^2 zeta(2))`` with step ``k - 2``."""
    lz = math.log(ZETA2)
    br = []
    for k in range(1, prefix + 1):
        w = -lz - 2.0 * math.log(k)
        br.append(BranchData(k, w, w, k - 2, k - 1))
    fam = PowerFamily(log_c=-lz, p=2.0, psi_slope=1, psi_offset=-2, start=prefix + 1)
    return _make("lingauss", br, fam.tail_model(), 1, family=fam)


def builtin_power_lueroth(a: float, prefix: int = 64) -> SystemSpec:
    """``J_0 = (a, 1)``, ``J_k = (a/(k+1), a/k)``; step ``floor(sqrt k) - 1``."""
    if not 0.0 < a < 1.0:
        raise ValueError("power-Lueroth parameter must lie in (0, 1)")
    w0 = math.log1p(-a)
    br = [BranchData(0, w0, w0, -1, 0)]
    for k in range(1, prefix + 1):
        w = math.log(a) - math.log(k) - math.log(k + 1)
        ps = math.isqrt(k) - 1
        br.append(BranchData(k, w, w, ps, ps + 1))
    fam = SqrtStepFamily(a=a, start=prefix + 1)
    return _make("powerlueroth", br, fam.tail_model(), 1, family=fam, params=(a,))


def builtin_gauss(depth_cap: int = 10, prefix: int = 64) -> SystemSpec:
    """Gauss map branches ``1/(x+k)`` with per-cylinder derivative envelopes."""
    if depth_cap < 1:
        raise ValueError("depth_cap must be >= 1")
    ev = GaussBranches()
    br = []
    for k in range(1, prefix + 1):
        # |h_k'| = (x+k)^-2 is largest at x=0, smallest at x=1
        br.append(BranchData(k, -2.0 * math.log(k), -2.0 * math.log(k + 1), k - 2, k - 1))
    fam = GaussEnvelopeFamily(start=prefix + 1)
    spec = SystemSpec(
        name="gauss",
        branches=tuple(br),
        tail=fam.tail_model(),
        M=1,
        kind="nonlinear",
        family=fam,
        evaluator=ev,
        params=(int(depth_cap),),
    )
    spec = validate(spec, check_regular=False)
    # P(s phi) is finite and positive just above s = 1/2 (distortion-comparable to zeta(2s))
    return replace(spec, strongly_regular=True)


BUILTIN_PARAMS = {
    "simplewalk": ("c1", "c2"),
    "lueroth": ("lambda",),
    "gauss": (),
    "lingauss": (),
    "powerlueroth": ("a",),
}

_ALIASES = {
    "simple_walk": "simplewalk",
    "simple": "simplewalk",
    "luroth": "lueroth",
    "linearized_gauss": "lingauss",
    "linearised_gauss": "lingauss",
    "power_lueroth": "powerlueroth",
}


def builtin(name: str, params=()) -> SystemSpec:
    name = _ALIASES.get(name, name)
    p = [float(x) for x in params]
    if name == "simplewalk":
        if len(p) != 2:
            raise ValueError("simplewalk takes two parameters c1,c2")
        return builtin_simple_walk(*p)
    if name == "lueroth":
        if len(p) != 1:
            raise ValueError("lueroth takes one parameter lambda")
        return builtin_lueroth(p[0])
    if name == "gauss":
        return builtin_gauss(int(p[0]) if p else 10)
    if name == "lingauss":
        return builtin_linearized_gauss()
    if name == "powerlueroth":
        if len(p) != 1:
            raise ValueError("powerlueroth takes one parameter a")
        return builtin_power_lueroth(p[0])
    raise ValueError(f"unknown builtin system {name!r}")


def resolve_system(address: str) -> SystemSpec:
    """Resolve ``name[:p1[,p2]]`` or ``file:PATH``."""
    if address.startswith("file:"):
        return load_system(address[5:])
    name, _, rest = address.partition(":")
    params = [x for x in rest.split(",") if x.strip()] if rest else []
    return builtin(name.strip().lower(), params)


# ------------------------------------------------------------------ file I/O


def _family_from_tail(t: dict, M: int) -> Optional[BranchFamily]:
    kind = t.get("kind")
    if kind == "none":
        return None
    for key in ("C", "cutoff"):
        if key not in t:
            raise ValidationError(f"tail.{key}", "required for an infinite family")
    slope = int(t.get("psi_slope", 1))
    offset = int(t.get("psi_offset", -1))
    shift = int(t.get("psi1_shift", min(1, M)))
    C = float(t["C"])
    if C <= 0:
        raise ValidationError("tail.C", "must be positive")
    if kind == "geometric":
        if "r" not in t:
            raise ValidationError("tail.r", "required for a geometric tail")
        r = float(t["r"])
        if not 0 < r < 1:
            raise ValidationError("tail.r", "must lie in (0, 1)")
        return GeometricFamily(math.log(C), math.log(r), slope, offset, int(t["cutoff"]), shift)
    if kind == "power":
        if "p" not in t:
            raise ValidationError("tail.p", "required for a power tail")
        p = float(t["p"])
        if p <= 1:
            raise ValidationError("tail.p", "must exceed 1")
        return PowerFamily(math.log(C), p, slope, offset, int(t["cutoff"]), shift)
    raise ValidationError("tail.kind", f"unknown tail kind {kind!r}")


def system_from_dict(data: dict, mode: str = "standard") -> SystemSpec:
    if not isinstance(data, dict):
        raise ValidationError("<root>", "system file must hold a JSON object")
    kind = data.get("kind", "locally_constant")
    if kind == "nonlinear_builtin":
        return builtin(str(data.get("name", "")), data.get("params", []))
    if kind != "locally_constant":
        raise ValidationError("kind", "must be 'locally_constant' or 'nonlinear_builtin'")
    if "incidence" in data or "transitions" in data:
        raise ValidationError("incidence", "only full-shift systems are supported")
    for key in ("name", "branches", "M"):
        if key not in data:
            raise ValidationError(key, "missing required field")
    M = data["M"]
    if not isinstance(M, int) or isinstance(M, bool):
        raise ValidationError("M", "must be a nonnegative integer")
    branches = []
    for i, b in enumerate(data["branches"]):
        try:
            ws = float(b["log_weight_sup"])
            wi = float(b.get("log_weight_inf", ws))
            branches.append(BranchData(int(b["k"]), ws, wi, int(b["psi"]), int(b["psi1"])))
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"branches[{i}]", f"malformed branch entry ({exc})") from None
    if "tail" not in data:
        raise ValidationError("tail", "missing tail (use {\"kind\": \"none\"} for finite systems)")
    tail = data["tail"]
    if not isinstance(tail, dict):
        raise ValidationError("tail", "must be an object")
    family = _family_from_tail(tail, M)
    tm = TailModel("none") if family is None else family.tail_model()
    spec = SystemSpec(str(data["name"]), tuple(branches), tm, M, family=family)
    return validate(spec, mode=mode)


def load_system(path) -> SystemSpec:
    """Load and validate a JSON system file."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError("<file>", f"JSON parse error: {exc}") from None
    return system_from_dict(data)


def system_to_dict(spec: SystemSpec) -> dict:
    if spec.is_nonlinear:
        return {"name": spec.name, "kind": "nonlinear_builtin", "params": list(spec.params)}
    tail = {"kind": "none"} if spec.family is None else spec.family.describe()
    if tail.get("kind") not in ("none", "geometric", "power"):
        raise ValueError("this branch family has no file representation")
    return {
        "name": spec.name,
        "kind": "locally_constant",
        "M": spec.M,
        "branches": [
            {
                "k": b.k,
                "log_weight_sup": b.log_weight_sup,
                "log_weight_inf": b.log_weight_inf,
                "psi": b.psi,
                "psi1": b.psi1,
            }
            for b in spec.branches
        ],
        "tail": tail,
    }
