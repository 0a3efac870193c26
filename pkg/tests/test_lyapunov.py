import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from _oracles import random_affine_model, random_polynomial_V
from apsde import (
    Box,
    InvalidInputError,
    LyapunovFunction,
    NumericError,
    QuasiPeriodicSignal,
    RateFunction,
    l2_bound_certificate,
    lv_pair,
    lv_shifted,
    lv_single,
    v_epsilon,
    verify_dissipativity,
    verify_positivity,
    verify_quadratic_bounds,
)
from apsde.lyapunov import lyapunov_from_json
from apsde.registry import antidissipative_model, example1_model, example3_model, ou_model, zero_model


def test_finite_difference_derivatives_match_analytic():
    rng = np.random.default_rng(0)
    V = random_polynomial_V(rng, 3)
    fd = LyapunovFunction.from_value(V.value, 3)
    t = rng.uniform(-3, 3, 20)
    x = rng.uniform(-1, 1, (20, 3))
    assert_allclose(fd.time_derivative(t, x), V.time_derivative(t, x), rtol=1e-6, atol=1e-6)
    assert_allclose(fd.gradient(t, x), V.gradient(t, x), rtol=1e-6, atol=1e-6)
    assert_allclose(fd.hessian(t, x), V.hessian(t, x), rtol=1e-4, atol=1e-4)


def test_generators_agree_between_derivative_modes():
    rng = np.random.default_rng(1)
    model = random_affine_model(rng, 2, 2)
    V = random_polynomial_V(rng, 2)
    fd = LyapunovFunction.from_value(V.value, 2)
    x, y = rng.uniform(-1, 1, (2, 2))
    assert lv_pair(fd, model, 0.3, x, y) == pytest.approx(lv_pair(V, model, 0.3, x, y), rel=1e-4, abs=1e-4)
    assert lv_single(fd, model, 0.3, x) == pytest.approx(lv_single(V, model, 0.3, x), rel=1e-4, abs=1e-4)


def test_ou_generator_closed_form():
    # V = x^2, dX = -X dt + dW: LV = -2 x^2 + 1; pair: -2 (x - y)^2
    V, model = LyapunovFunction.norm2(1), ou_model(1.0, 1.0)
    x = np.linspace(-2, 2, 9)[:, None]
    assert_allclose(lv_single(V, model, 0.0, x), -2 * x[:, 0] ** 2 + 1)
    assert_allclose(lv_pair(V, model, 0.0, x, 0.5 * x), -2 * (0.5 * x[:, 0]) ** 2)


def test_pinned_example_values():
    V = LyapunovFunction.norm2(2)
    assert lv_pair(V, example3_model(), 0.0, np.array([1.0, 1.0]), np.zeros(2)) == pytest.approx(-4.0, abs=1e-12)
    exp = -(1 + math.sin(math.sqrt(2) * math.pi / 2) ** 2 + 2)
    assert lv_single(V, example3_model(), math.pi / 2, np.array([1.0, 0.0])) == pytest.approx(exp, abs=1e-12)
    V1 = LyapunovFunction.norm2(1)
    got = lv_shifted(V1, example1_model(), 1.0, 0.5, 0.0, np.array([1.0]), np.array([0.0]))
    assert got == pytest.approx(-3.8024730814756955, abs=1e-12)


def test_time_dependent_quadratic_has_time_derivative_term():
    s = QuasiPeriodicSignal.sine(0.5, 1.0) + 2.0
    V = LyapunovFunction.quadratic(np.eye(1), s)
    got = lv_single(V, zero_model(1, 1), 0.7, np.array([2.0]))
    assert got == pytest.approx(0.5 * math.cos(0.7) * 4.0)


def test_generator_dimension_errors():
    with pytest.raises(InvalidInputError):
        lv_single(LyapunovFunction.norm2(2), ou_model(), 0.0, np.zeros(2))


def test_non_finite_generator_raises():
    V = LyapunovFunction(1, lambda t, x: x[..., 0] ** 2, lambda t, x: np.full(x.shape[:-1], np.nan),
                         lambda t, x: 2 * x, lambda t, x: 2 * np.ones(x.shape + (1,)))
    with pytest.raises(NumericError):
        lv_single(V, ou_model(), 0.0, np.array([1.0]))


def test_dissipativity_verifier_pass_and_fail():
    V, box = LyapunovFunction.norm2(1), Box.cube(1, 3.0)
    assert verify_dissipativity(V, ou_model(), RateFunction.linear(2.0), "pair", box, 5000, 0).passed
    assert not verify_dissipativity(V, ou_model(), RateFunction.linear(2.5), "pair", box, 5000, 0).passed
    bad = verify_dissipativity(V, antidissipative_model(), RateFunction.zero(), "pair", box, 5000, 0)
    assert not bad.passed and bad.worst_value > 0
    assert "x" in bad.worst_point and "y" in bad.worst_point


def test_single_mode_respects_radius():
    V, box = LyapunovFunction.norm2(1), Box.cube(1, 3.0)
    # -2 x^2 + 1 <= 0 exactly when |x| >= 1/sqrt(2)
    assert verify_dissipativity(V, ou_model(), None, "single", box, 5000, 0, min_radius=0.75).passed
    assert not verify_dissipativity(V, ou_model(), None, "single", box, 5000, 0, min_radius=0.6).passed


def test_shifted_mode_and_unknown_mode():
    V, box = LyapunovFunction.norm2(1), Box.cube(1, 3.0)
    assert verify_dissipativity(V, ou_model(), None, "shifted", box, 2000, 0).passed
    with pytest.raises(InvalidInputError):
        verify_dissipativity(V, ou_model(), None, "other", box)


def test_positivity_and_quadratic_bounds():
    box = Box.cube(2, 2.0)
    assert verify_positivity(LyapunovFunction.norm2(2), box, 2000).passed
    neg = LyapunovFunction.quadratic(np.diag([1.0, -1.0]))
    assert not verify_positivity(neg, box, 2000).passed
    V = LyapunovFunction.quadratic(np.diag([1.0, 3.0]))
    assert verify_quadratic_bounds(V, 1.0, 3.0, box, 2000).passed
    assert not verify_quadratic_bounds(V, 1.5, 3.0, box, 2000).passed
    with pytest.raises(InvalidInputError):
        verify_quadratic_bounds(V, 2.0, 1.0, box)


def test_rate_function_forms():
    assert RateFunction.linear(2.0)(3.0) == 6.0
    assert RateFunction("power", 1.0, 2.0)(3.0) == 9.0
    tab = RateFunction("table", table=((0.0, 1.0, 2.0), (0.0, 1.0, 3.0)))
    assert tab(1.5) == pytest.approx(2.0) and tab(3.0) == pytest.approx(5.0)
    assert RateFunction.from_json(RateFunction.linear(1.5).to_json()) == RateFunction.linear(1.5)
    assert RateFunction.from_json(2.0) == RateFunction.linear(2.0)
    with pytest.raises(InvalidInputError):
        RateFunction("table", table=((0.0, 1.0, 2.0), (0.0, 2.0, 3.0)))


def test_v_epsilon_and_certificate():
    V = LyapunovFunction.norm2(2)
    assert v_epsilon(V, 0.5, a=1.0)[0] == pytest.approx(0.25)
    assert v_epsilon(V, 0.5)[0] == pytest.approx(0.25)
    assert l2_bound_certificate(V, None, 1.0, 1.0, 1.0, 0.0, 1.0, 2.0) == pytest.approx(6.0)
    with pytest.raises(InvalidInputError):
        l2_bound_certificate(V, None, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0)


def test_lyapunov_json_forms():
    d = 2
    assert lyapunov_from_json("norm2", d)(0.0, np.array([3.0, 4.0])) == 25.0
    doc = LyapunovFunction.quadratic(np.diag([1.0, 2.0]), QuasiPeriodicSignal.constant(2.0)).to_json()
    assert lyapunov_from_json(doc, d)(0.0, np.array([1.0, 1.0])) == pytest.approx(6.0)
    with pytest.raises(InvalidInputError):
        lyapunov_from_json({"quadratic": {"matrix": [[1.0]]}}, d)
