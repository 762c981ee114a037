import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize_scalar

from nlspread.fields import PeriodicField, evaluate_fourier
from nlspread.speed import (LambdaCurve, SpeedError, convexity_violations, curve_for,
                            derivative_diagnostics, lambda_of_mu, spreading_speed)

from conftest import khat_oracle, medium


def test_homogeneous_speed_matches_quadrature_minimum(kernel, cell):
    a = PeriodicField.constant(cell, 1.0)
    opt = minimize_scalar(lambda m: khat_oracle(m) / m, bounds=(0.2, 5.0), method="bounded",
                          options={"xatol": 1e-9})
    res = spreading_speed(kernel, 1, a)
    assert res.c_star == pytest.approx(opt.fun, abs=1e-6)
    assert res.mu_star == pytest.approx(opt.x, abs=1e-3)
    assert res.bracket[0] < res.mu_star < res.bracket[1]
    assert res.convexity_violations == 0


def test_homogeneous_speed_is_direction_free(kernel, small_cell):
    a = PeriodicField.constant(small_cell, 0.7)
    assert spreading_speed(kernel, 1, a).c_star == pytest.approx(
        spreading_speed(kernel, -1, a).c_star, abs=1e-9)


def test_reflection_swaps_directions(kernel, small_cell):
    a = medium("c", small_cell).a0
    plus = spreading_speed(kernel, 1, a).c_star
    assert spreading_speed(kernel, -1, a.reflected()).c_star == pytest.approx(plus, abs=1e-9)


@given(m1=st.floats(0.05, 3.0), m2=st.floats(0.05, 3.0), w=st.floats(0.0, 1.0))
def test_lambda_is_convex_in_mu(kernel, small_cell, m1, m2, w):
    curve = curve_for(kernel, 1, medium("b", small_cell).a0)
    mix = w * m1 + (1 - w) * m2
    assert curve(mix) <= w * curve(m1) + (1 - w) * curve(m2) + 1e-8


def test_derivative_below_quotient_and_optimality(kernel, small_cell):
    a = medium("c", small_cell).a0
    res = spreading_speed(kernel, 1, a)
    rep = derivative_diagnostics(kernel, 1, a, res)
    assert rep.derivative_violations == 0
    assert min(m for _, m in rep.margins) > 0
    assert rep.optimality_gap < 1e-4
    assert rep.convexity_violations == 0


def test_warm_start_does_not_change_values(kernel, small_cell):
    a = medium("c", small_cell).a0
    cold = LambdaCurve(kernel, 1, a, warm=False)
    warm = LambdaCurve(kernel, 1, a, warm=True)
    warm.many([0.5, 1.0])
    for mu in (0.7, 1.3, 2.2):
        assert warm(mu) == pytest.approx(cold(mu), abs=1e-8)


def test_memoization_is_shared(kernel, small_cell):
    a = medium("b", small_cell).a0
    assert curve_for(kernel, 1, a) is curve_for(kernel, 1, a)
    assert lambda_of_mu(kernel, 1, a, 0.3) == curve_for(kernel, 1, a)(0.3)
    with pytest.raises(SpeedError):
        lambda_of_mu(kernel, 1, a, -1.0)


def test_stable_zero_state_has_no_speed(kernel, small_cell):
    a = PeriodicField.constant(small_cell, -0.1)
    with pytest.raises(SpeedError, match="not linearly unstable"):
        spreading_speed(kernel, 1, a)


def test_convexity_counter():
    line = [(m, 2.0 * m + 1.0, 0.0) for m in np.linspace(0, 1, 6)]
    assert convexity_violations(line) == 0
    bumped = list(line)
    bumped[3] = (bumped[3][0], bumped[3][1] + 0.1, 0.0)
    assert convexity_violations(bumped) == 1


def test_minimizer_beats_every_sample(kernel, small_cell):
    a = medium("b", small_cell).a0
    curve = curve_for(kernel, 1, a)
    res = spreading_speed(kernel, 1, a, curve)
    lo, hi = res.bracket
    assert all(res.c_star <= lam / mu + 1e-12 for mu, lam, _ in curve.samples() if lo <= mu <= hi)


@given(bump=st.floats(0.0, 0.4))
def test_speed_grows_with_the_growth_rate(kernel, small_cell, bump):
    a = medium("b", small_cell).a0
    more = a + evaluate_fourier([(0, 1, 1.0, 0.5)], small_cell, 1.0) * bump     # nonnegative
    assert spreading_speed(kernel, 1, a).c_star <= spreading_speed(kernel, 1, more).c_star + 1e-8
