"""Command-line interface.

Exit codes: 0 success, 1 usage or validation error, 2 certified-infinite or
unresolved result (the report is still printed).
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from multiprocessing import get_context
from typing import Optional

from . import __version__
from .analysis import IndeterminateDrift, classify_trichotomy, phase_transition
from .hessenberg import HessenbergSpec, compare, spectral_radius_truncated, spectral_radius_variational
from .pressure import cylinder_pressure, series_pressure
from .reports import dumps_csv, dumps_json, to_plain
from .systems import BUILTIN_PARAMS, _ALIASES, ValidationError, builtin, resolve_system
from .tails import TailModel
from .variational import critical_exponent, critical_exponents
from .walksim import recurrence_stats, thread_count

EXIT_OK, EXIT_USAGE, EXIT_INFINITE = 0, 1, 2

SPECTRUM_COLUMNS = ["param", "delta0", "deltaZ", "deltaN", "dimT_plus", "dimT_minus", "label", "alpha_max", "tol"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _report(command, spec_desc, params, results, tolerances, t0, seed=None):
    rep = {
        "command": command,
        "system": spec_desc,
        "parameters": params,
        "results": results,
        "tolerances": tolerances,
        "wall_clock_s": round(time.perf_counter() - t0, 6),
    }
    if seed is not None:
        rep["seed"] = seed
    return rep


def _emit(rep, fmt, out):
    if fmt == "csv":
        flat = _flatten(rep["results"])
        flat.update({f"tol.{k}": v for k, v in _flatten(rep["tolerances"]).items()})
        cols = sorted(flat)
        out.write(dumps_csv([flat], cols))
    else:
        out.write(dumps_json(rep))


def _flatten(d, prefix=""):
    out = {}
    for k, v in to_plain(d).items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list):
            out[key] = json.dumps(v, sort_keys=True)
        else:
            out[key] = v
    return out


# ------------------------------------------------------------------ commands


def cmd_pressure(a, out):
    t0 = time.perf_counter()
    spec = resolve_system(a.system)
    if spec.is_nonlinear or a.depth is not None:
        pv = cylinder_pressure(
            spec, a.s, a.q, depth=a.depth or 8, branch_cutoff=a.cutoff, method=a.method, grid=a.grid
        )
    else:
        pv = series_pressure(spec, a.s, a.q)
    tol = {"remainder_bound": pv.remainder_bound}
    if pv.mode == "cylinder_bracket":
        tol["bracket_width"] = pv.upper - pv.lower
    rep = _report("pressure", spec.descriptor, {"s": a.s, "q": a.q, "depth": a.depth}, pv.to_dict(), tol, t0)
    _emit(rep, a.format, out)
    return EXIT_OK if pv.finite else EXIT_INFINITE


def cmd_delta(a, out):
    t0 = time.perf_counter()
    spec = resolve_system(a.system)
    if a.extension == "all":
        ce = critical_exponents(spec, a.tol)
        res, tol = ce.to_dict(), {"tol": ce.tol}
    else:
        v = critical_exponent(spec, a.extension, a.tol)
        res, tol = {f"delta_{a.extension}": v}, {"tol": a.tol if not spec.is_nonlinear else max(a.tol, 1e-7)}
    rep = _report("delta", spec.descriptor, {"extension": a.extension}, res, tol, t0)
    _emit(rep, a.format, out)
    finite = all(isinstance(x, float) and math.isfinite(x) for x in res.values() if isinstance(x, float))
    return EXIT_OK if finite else EXIT_INFINITE


def cmd_classify(a, out):
    t0 = time.perf_counter()
    spec = resolve_system(a.system)
    r = classify_trichotomy(spec, a.tol)
    tol = {"delta_tol": r.tol, "alpha_error": r.evidence.get("alpha_error"), "alpha_band": 1e-9}
    rep = _report("classify", spec.descriptor, {}, r.to_dict(), tol, t0)
    _emit(rep, a.format, out)
    return EXIT_OK


def cmd_phase(a, out):
    t0 = time.perf_counter()
    spec = resolve_system(a.system)
    try:
        r = phase_transition(spec)
    except (IndeterminateDrift, ValueError) as exc:
        rep = _report("phase", spec.descriptor, {}, {"error": str(exc)}, {}, t0)
        _emit(rep, a.format, out)
        return EXIT_INFINITE
    rep = _report("phase", spec.descriptor, {}, r.to_dict(), {"s0_tol": 1e-12, "cov_tol": r.tol}, t0)
    _emit(rep, a.format, out)
    return EXIT_OK


def _hessenberg_spec(a) -> HessenbergSpec:
    if (a.geometric is None) == (a.array is None):
        raise UsageError("give exactly one of --geometric or --array")
    if a.geometric is not None:
        return HessenbergSpec.geometric(a.geometric, M=a.M)
    try:
        arr = json.loads(a.array)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--array is not valid JSON: {exc}") from None
    tail = TailModel("none")
    if a.tail_r is not None:
        tail = TailModel("geometric", C=a.tail_C, rate=a.tail_r, cutoff=len(arr))
    return HessenbergSpec(tuple(float(x) for x in arr), a.M, tail)


def cmd_hessenberg(a, out):
    t0 = time.perf_counter()
    h = _hessenberg_spec(a)
    var = spectral_radius_variational(h, detail=True)
    res = {"log_rho_variational": var.value, "case_selected": var.case_selected, "minimizer_q": var.minimizer_q}
    if a.compare:
        ks = [int(k) for k in a.compare.split(",") if k.strip()]
        res["compare"] = compare(h, ks, a.tol)
    if a.k is not None:
        res["log_rho_truncated"] = spectral_radius_truncated(h, a.k, a.tol)
    params = {"M": a.M, "geometric": a.geometric, "array": a.array, "k": a.k, "compare": a.compare}
    rep = _report("hessenberg", "hessenberg", params, res, {"power_iteration_rel_tol": a.tol}, t0)
    _emit(rep, a.format, out)
    return EXIT_OK if math.isfinite(var.value) else EXIT_INFINITE


def cmd_simulate(a, out):
    t0 = time.perf_counter()
    spec = resolve_system(a.system)
    s = a.s if a.s is not None else critical_exponent(spec, "base0")
    r = recurrence_stats(spec, s, a.runs, a.steps, a.seed, label=a.label)
    res = r.to_dict(include_runs=a.per_run)
    res["lemma_checks_pass"] = r.lemma_violations == 0
    tol = {"empirical_drift_se": r.empirical_drift_se}
    rep = _report("simulate", spec.descriptor, {"s": s, "runs": a.runs, "steps": a.steps}, res, tol, t0, a.seed)
    _emit(rep, a.format, out)
    return EXIT_OK


def _parse_range(text):
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError("--range must be LO:HI:STEP") from None
    if step <= 0 or hi < lo:
        raise UsageError("--range needs STEP > 0 and HI >= LO")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + i * step, 12) for i in range(n + 1)]


def _spectrum_point(name, names, fixed, param, value, tol):
    vals = dict(fixed)
    vals[param] = value
    spec = builtin(name, [vals[n] for n in names])
    r = classify_trichotomy(spec, tol)
    return {
        "param": value,
        "delta0": r.delta0,
        "deltaZ": r.deltaZ,
        "deltaN": r.deltaN,
        "dimT_plus": r.dimT_plus_N,
        "dimT_minus": r.dimT_minus_Z,
        "label": r.label + (" (numerical)" if r.numerical_boundary else ""),
        "alpha_max": r.alpha_max,
        "tol": r.tol,
    }


def cmd_spectrum(a, out):
    t0 = time.perf_counter()
    name = _ALIASES.get(a.system, a.system)
    if name not in BUILTIN_PARAMS:
        raise UsageError(f"spectrum sweeps builtin systems only; got {a.system!r}")
    names = list(BUILTIN_PARAMS[name])
    param = {"lam": "lambda", "l": "lambda"}.get(a.param, a.param)
    if param not in names:
        raise UsageError(f"{name} has parameters {names}, not {a.param!r}")
    fixed = {}
    for item in a.fixed or []:
        k, _, v = item.partition("=")
        if k not in names or not v:
            raise UsageError(f"bad --fixed entry {item!r}")
        fixed[k] = float(v)
    missing = [n for n in names if n != param and n not in fixed]
    if missing:
        raise UsageError(f"missing --fixed values for {missing}")
    grid = _parse_range(a.range)
    nt = thread_count()
    args = [(name, names, fixed, param, v, a.tol) for v in grid]
    if nt > 1 and len(grid) > 8:
        with ProcessPoolExecutor(max_workers=nt, mp_context=get_context("spawn")) as ex:
            rows = list(ex.map(_spectrum_star, args))
    else:
        rows = [_spectrum_point(*x) for x in args]
    if a.format == "json":
        rep = _report("spectrum", name, {"param": param, "range": a.range, "fixed": fixed}, rows, {"tol": a.tol}, t0)
        out.write(dumps_json(rep))
    else:
        out.write(dumps_csv(rows, SPECTRUM_COLUMNS))
    return EXIT_OK


def _spectrum_star(x):
    return _spectrum_point(*x)


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="skewperiodic", description="Pressure, dimension and recurrence tools for skew-periodic extensions.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, fmt=("json", "csv")):
        sp.add_argument("--format", choices=fmt, default=fmt[0])

    sp = sub.add_parser("pressure", help="P(s phi + q psi) with remainder or cylinder bracket")
    sp.add_argument("--system", required=True)
    sp.add_argument("--s", type=float, required=True)
    sp.add_argument("--q", type=float, default=0.0)
    sp.add_argument("--depth", type=int)
    sp.add_argument("--cutoff", type=int, default=200)
    sp.add_argument("--grid", type=int, default=2048)
    sp.add_argument("--method", choices=("auto", "words", "transfer"), default="auto")
    common(sp)
    sp.set_defaults(func=cmd_pressure)

    sp = sub.add_parser("delta", help="critical exponents")
    sp.add_argument("--system", required=True)
    sp.add_argument("--extension", choices=("base0", "Z", "N", "all"), default="all")
    sp.add_argument("--tol", type=float, default=1e-10)
    common(sp)
    sp.set_defaults(func=cmd_delta)

    sp = sub.add_parser("classify", help="lean / balanced / black-hole classification")
    sp.add_argument("--system", required=True)
    sp.add_argument("--tol", type=float, default=1e-10)
    common(sp)
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("phase", help="phase-transition test at the zero of the drift")
    sp.add_argument("--system", required=True)
    common(sp)
    sp.set_defaults(func=cmd_phase)

    sp = sub.add_parser("hessenberg", help="spectral radius of a Hessenberg matrix")
    sp.add_argument("--geometric", type=float, metavar="LAMBDA")
    sp.add_argument("--array", metavar="JSON")
    sp.add_argument("--tail-C", dest="tail_C", type=float, default=1.0)
    sp.add_argument("--tail-r", dest="tail_r", type=float)
    sp.add_argument("--M", type=int, default=0)
    sp.add_argument("--k", type=int)
    sp.add_argument("--compare", metavar="K1,K2,...")
    sp.add_argument("--tol", type=float, default=1e-11)
    common(sp)
    sp.set_defaults(func=cmd_hessenberg)

    sp = sub.add_parser("simulate", help="seeded simulation of the level processes")
    sp.add_argument("--system", required=True)
    sp.add_argument("--s", type=float, help="defaults to delta0")
    sp.add_argument("--runs", type=int, default=100)
    sp.add_argument("--steps", type=int, default=10_000)
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--label")
    sp.add_argument("--per-run", dest="per_run", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("spectrum", help="dimension spectrum over a parameter sweep")
    sp.add_argument("--system", required=True)
    sp.add_argument("--param", required=True)
    sp.add_argument("--range", required=True, metavar="LO:HI:STEP")
    sp.add_argument("--fixed", action="append", metavar="NAME=VALUE")
    sp.add_argument("--tol", type=float, default=1e-10)
    common(sp, fmt=("csv", "json"))
    sp.set_defaults(func=cmd_spectrum)
    return p


def main(argv: Optional[list] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (UsageError, ValidationError, ValueError) as exc:
        print(f"skewperiodic {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RuntimeError as exc:
        # iterative solvers that failed to resolve the value
        print(f"skewperiodic {args.command}: unresolved: {exc}", file=sys.stderr)
        return EXIT_INFINITE


if __name__ == "__main__":
    sys.exit(main())
