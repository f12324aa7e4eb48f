import math

import mpmath
import numpy as np
import pytest

from skewperiodic.analysis import (
    IndeterminateDrift,
    asymptotic_covariance,
    classify_trichotomy,
    dimension_gap_Z,
    drift,
    drift_value,
    phase_transition,
)
from skewperiodic.pressure import series_pressure
from skewperiodic.systems import (
    builtin_gauss,
    builtin_linearized_gauss,
    builtin_lueroth,
    builtin_power_lueroth,
    builtin_simple_walk,
)
from skewperiodic.variational import skew_pressure_N


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.7, 0.95])
def test_lueroth_drift(lam):
    assert drift(builtin_lueroth(lam), 1.0, 0.0) == pytest.approx((2 * lam - 1) / (1 - lam), abs=1e-12)


@pytest.mark.parametrize("s", [1.1, 1.5, 2.0, 3.0])
def test_linearised_gauss_drift(s):
    want = float(mpmath.zeta(2 * s - 1) / mpmath.zeta(2 * s) - 2)
    assert drift(builtin_linearized_gauss(), s, 0.0) == pytest.approx(want, abs=1e-10)


def test_infinite_drifts_are_certified():
    for spec in (builtin_gauss(), builtin_linearized_gauss()):
        dv = drift_value(spec, 1.0, 0.0)
        assert dv.value == math.inf
        assert dv.certificate["rule"] == "lower_envelope_divergence"


def test_divergent_pressure_gives_indeterminate_drift():
    with pytest.raises(IndeterminateDrift):
        drift(builtin_lueroth(0.5), 1.0, 0.7)


@pytest.mark.parametrize("spec", [builtin_lueroth(0.35), builtin_power_lueroth(0.05), builtin_simple_walk(0.2, 0.6)],
                         ids=lambda s: s.descriptor)
def test_drift_is_q_derivative(spec):
    s, q, h = 1.0, -0.4, 1e-5
    fd = (series_pressure(spec, s, q + h).value - series_pressure(spec, s, q - h).value) / (2 * h)
    rem = series_pressure(spec, s, q).remainder_bound
    assert abs(fd - drift(spec, s, q)) <= max(1e-6, 10 * rem)


@pytest.mark.parametrize("lam", [0.3, 0.6, 0.8])
def test_lueroth_covariance_at_s0(lam):
    s0 = -math.log(2) / math.log(lam)
    L = builtin_lueroth(lam)
    assert asymptotic_covariance(L, s0, 0.0, "phi", "psi") == pytest.approx(2 * math.log(lam), abs=1e-10)
    # geometric digit law with mean 2: variance of k is 2
    assert asymptotic_covariance(L, s0, 0.0, "psi", "psi") == pytest.approx(2.0, abs=1e-10)


def test_simple_walk_covariances():
    assert asymptotic_covariance(builtin_simple_walk(0.3, 0.3), 0.7, 0.0, "phi", "psi") == pytest.approx(0.0, abs=1e-15)
    c1, c2 = 0.2, 0.5
    cov = asymptotic_covariance(builtin_simple_walk(c1, c2), 0.0, 0.0, "phi", "psi")
    assert cov == pytest.approx(0.5 * (math.log(c2) - math.log(c1)), abs=1e-14)


def test_array_covariance_finite_system():
    sw = builtin_simple_walk(0.2, 0.5)
    f = np.array([1.0, 3.0])
    assert asymptotic_covariance(sw, 0.0, 0.0, f, f) == pytest.approx(1.0)
    assert asymptotic_covariance(sw, 0.0, 0.0, f, "psi") == pytest.approx(1.0)
    with pytest.raises(ValueError):
        asymptotic_covariance(sw, 0.0, 0.0, np.array([1.0, math.inf]), f)
    with pytest.raises(ValueError):
        asymptotic_covariance(builtin_lueroth(0.5), 1.0, 0.0, np.ones(64), np.ones(64))


def test_linearised_gauss_psi_variance_infinite():
    assert asymptotic_covariance(builtin_linearized_gauss(), 1.3, 0.0, "psi", "psi") == math.inf


def test_dimension_gap_examples():
    g = dimension_gap_Z(builtin_lueroth(0.75))
    assert g.gap is True and g.alpha_max == pytest.approx(2.0, abs=1e-12)
    g = dimension_gap_Z(builtin_lueroth(0.3))
    assert g.gap is True and g.witness_q is not None
    assert series_pressure(builtin_lueroth(0.3), 1.0, g.witness_q).value < math.inf
    g = dimension_gap_Z(builtin_power_lueroth(0.05))
    assert g.gap is False and g.certificate["rule"] == "all_positive_q_divergent"
    g = dimension_gap_Z(builtin_lueroth(0.5))
    assert g.gap is None and g.boundary_case


def test_gauss_dimension_gap():
    g = dimension_gap_Z(builtin_gauss())
    assert g.gap is True and g.alpha_max == math.inf


def test_classify_simple_walk_lean():
    r = classify_trichotomy(builtin_simple_walk(0.5, 0.25))
    assert r.label == "lean"
    assert r.gap_Z and not r.gap_N
    assert r.dimT_minus_N == 0.0
    assert r.dimT_plus_N == r.dimT_plus_Z == pytest.approx(r.deltaZ)


def test_classify_lueroth_half_balanced():
    r = classify_trichotomy(builtin_lueroth(0.5))
    assert r.label == "balanced" and r.numerical_boundary
    assert set(r.neighbor_labels) == {"lean", "black_hole"}
    assert r.deltaN == pytest.approx(1.0, abs=1e-10)
    assert r.dimT_plus_Z == pytest.approx(1.0, abs=1e-10)


def test_classify_lueroth_black_hole():
    lam = 0.75
    r = classify_trichotomy(builtin_lueroth(lam))
    assert r.label == "black_hole" and r.gap_N
    assert r.deltaN == pytest.approx(-math.log(4) / math.log(lam * (1 - lam)), abs=1e-10)
    assert r.dimT_plus_N == pytest.approx(1.0, abs=1e-10)
    assert r.deltaN == pytest.approx(r.deltaN_formula, abs=1e-6)


def test_classify_power_lueroth_balanced_without_boundary():
    r = classify_trichotomy(builtin_power_lueroth(0.05))
    assert r.label == "balanced" and not r.numerical_boundary
    assert r.evidence["finite_for_some_positive_q"] is False


@pytest.mark.parametrize("spec", [builtin_lueroth(0.3), builtin_lueroth(0.7), builtin_simple_walk(0.5, 0.25)],
                         ids=lambda s: s.descriptor)
def test_label_independent_of_reflection_rule(spec):
    labels = {classify_trichotomy(spec.with_psi1([shift])).label for shift in range(spec.M + 1)}
    assert len(labels) == 1


def test_phase_simple_walk_equal_contractions_is_straight():
    ph = phase_transition(builtin_simple_walk(0.3, 0.3))
    assert ph.degenerate and not ph.has_transition
    assert ph.second_derivative_jump == 0.0


def test_phase_simple_walk_unequal():
    ph = phase_transition(builtin_simple_walk(0.2, 0.5))
    assert ph.s0 == pytest.approx(0.0, abs=1e-12)
    assert ph.has_transition


def test_phase_first_derivative_continuous_at_s0():
    L = builtin_lueroth(0.6)
    ph = phase_transition(L)
    p = lambda s: skew_pressure_N(L, s).value
    h = 1e-3
    # second-order one-sided differences, error O(h^2)
    left = (3 * p(ph.s0) - 4 * p(ph.s0 - h) + p(ph.s0 - 2 * h)) / (2 * h)
    right = (-3 * p(ph.s0) + 4 * p(ph.s0 + h) - p(ph.s0 + 2 * h)) / (2 * h)
    assert abs(left - right) < 1e-5


def test_phase_linearised_gauss_wall_pinned():
    ph = phase_transition(builtin_linearized_gauss())
    assert ph.hypothesis == "wall_pinned"
    assert ph.cov_psi_psi == math.inf and ph.second_derivative_jump == 0.0


def test_phase_gauss_reported_not_asserted():
    ph = phase_transition(builtin_gauss())
    assert ph.asserted is False
    assert ph.s0 > 1.0
