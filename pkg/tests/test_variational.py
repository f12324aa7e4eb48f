import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skewperiodic._numerics import golden_section_min
from skewperiodic.analysis import drift
from skewperiodic.pressure import cylinder_pressure, series_pressure
from skewperiodic.systems import (
    builtin_gauss,
    builtin_linearized_gauss,
    builtin_lueroth,
    builtin_power_lueroth,
    builtin_simple_walk,
)
from skewperiodic.variational import (
    critical_exponent,
    critical_exponents,
    q_of_s,
    root_in_s,
    skew_pressure_N,
    skew_pressure_Z,
)

from conftest import random_finite_system


@pytest.mark.parametrize("c1, c2", [(0.25, 0.5), (0.5, 0.25), (0.3, 0.3), (0.1, 0.6)])
@pytest.mark.parametrize("s", [-1.5, -0.2, 0.0, 0.4, 1.0, 2.0])
def test_simple_walk_skew_Z_closed_form(c1, c2, s):
    want = math.log(2.0) + 0.5 * s * math.log(c1 * c2)
    assert skew_pressure_Z(builtin_simple_walk(c1, c2), s).value == pytest.approx(want, abs=1e-12)


def test_simple_walk_case_selection():
    sw = builtin_simple_walk(0.25, 0.5)
    assert skew_pressure_N(sw, 1.0).case_selected == "Z"
    assert skew_pressure_N(sw, -1.0).case_selected == "base"
    r0 = skew_pressure_N(sw, 0.0)
    assert r0.case_selected == "both" and r0.minimizer_q == 0.0


@pytest.mark.parametrize("lam", [0.3, 0.6, 0.75, 0.9])
@pytest.mark.parametrize("s", [0.6, 1.0, 1.4])
def test_lueroth_minimiser(lam, s):
    z = skew_pressure_Z(builtin_lueroth(lam), s)
    assert z.flag == "interior"
    # e^{q0} = lam^{-s}/2
    assert z.minimizer_q == pytest.approx(-s * math.log(lam) - math.log(2), abs=1e-10)
    want = s * math.log1p(-lam) + math.log(4.0) + s * math.log(lam)
    assert z.value == pytest.approx(want, abs=1e-12)


@pytest.mark.parametrize("lam", [0.2, 0.4, 0.6, 0.8])
def test_lueroth_delta_Z(lam):
    want = -math.log(4.0) / math.log(lam * (1 - lam))
    assert critical_exponent(builtin_lueroth(lam), "Z") == pytest.approx(want, abs=1e-10)


def test_base_critical_exponents_of_partitions():
    for spec in (builtin_lueroth(0.4), builtin_linearized_gauss(), builtin_power_lueroth(0.05)):
        assert critical_exponent(spec, "base0") == pytest.approx(1.0, abs=1e-10)


def test_interior_minimiser_has_zero_drift():
    for spec, s in ((builtin_lueroth(0.7), 1.1), (builtin_linearized_gauss(), 0.9), (builtin_simple_walk(0.2, 0.5), 0.5)):
        z = skew_pressure_Z(spec, s)
        assert z.flag == "interior"
        assert abs(drift(spec, s, z.minimizer_q)) < 1e-6


def test_linearised_gauss_wall_pinned():
    G = builtin_linearized_gauss()
    assert q_of_s(G, 2.0) is None
    z = skew_pressure_Z(G, 2.0)
    assert z.minimizer_q == 0.0
    assert z.value == pytest.approx(series_pressure(G, 2.0, 0.0).value, abs=1e-12)
    ce = critical_exponents(G)
    assert ce.delta0 == pytest.approx(1.0, abs=1e-10)
    assert ce.deltaZ < 1.0 and ce.deltaN == pytest.approx(ce.deltaZ, abs=1e-9)


def test_power_lueroth_no_gap_in_delta():
    ce = critical_exponents(builtin_power_lueroth(0.05))
    assert ce.deltaZ == pytest.approx(1.0, abs=1e-8)
    assert ce.deltaN == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("spec", [builtin_simple_walk(0.25, 0.5), builtin_lueroth(0.4), builtin_lueroth(0.7)],
                         ids=lambda s: s.descriptor)
def test_exchange_identity(spec):
    # inf over q of the roots s(q) equals the root of the infimum pressure
    q_star, s_min = golden_section_min(lambda q: root_in_s(spec, q), -3.0, 3.0, tol=1e-9)
    assert s_min == pytest.approx(critical_exponent(spec, "Z"), abs=1e-6)


def test_gauss_skew_pressure_interior():
    G = builtin_gauss()
    z = skew_pressure_Z(G, 0.9)
    assert z.flag == "interior" and -1.0 < z.minimizer_q < 0.0
    base = cylinder_pressure(G, 0.9, 0.0, depth=8, branch_cutoff=200, grid=1024, method="transfer")
    assert z.value < base.lower


def test_nan_rejected():
    with pytest.raises(ValueError):
        skew_pressure_Z(builtin_lueroth(0.5), float("nan"))
    with pytest.raises(ValueError):
        critical_exponent(builtin_lueroth(0.5), "X")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), s=st.floats(-1.0, 2.5))
def test_variational_ordering(seed, s):
    spec = random_finite_system(np.random.default_rng(seed))
    pz = skew_pressure_Z(spec, s).value
    pn = skew_pressure_N(spec, s).value
    pb = series_pressure(spec, s, 0.0).value
    assert pz <= pn + 1e-12 <= pb + 2e-12


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_delta_identities(seed):
    spec = random_finite_system(np.random.default_rng(seed))
    ce = critical_exponents(spec)
    a = drift(spec, ce.delta0, 0.0)
    assert ce.deltaZ <= ce.deltaN + 1e-9 <= ce.delta0 + 2e-9
    if abs(a) > 1e-9:
        assert ce.deltaN == pytest.approx(ce.deltaZ if a >= 0 else ce.delta0, abs=1e-6)
