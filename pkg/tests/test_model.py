import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from _oracles import random_affine_model
from apsde import Box, CoefficientField, InvalidInputError, QuasiPeriodicSignal, SdeModel, estimate_lipschitz, shift_model
from apsde.model import FIELD_BUILTINS, model_from_json
from apsde.registry import example1_model, example2_model, example3_model

Sig = QuasiPeriodicSignal

terms = st.lists(
    st.tuples(st.floats(-2, 2), st.floats(0.1, 3), st.floats(-3.2, 3.2)), min_size=0, max_size=3
)
signals = st.builds(lambda ts, c: Sig(tuple(ts), c), terms, st.floats(-2, 2))


@settings(max_examples=60, deadline=None)
@given(signals, signals, st.floats(-20, 20))
def test_signal_algebra_matches_pointwise(p, q, t):
    assert (p + q)(t) == pytest.approx(p(t) + q(t), abs=1e-10)
    assert (p - q)(t) == pytest.approx(p(t) - q(t), abs=1e-10)
    assert (p * q)(t) == pytest.approx(p(t) * q(t), abs=1e-9)
    assert (2.5 * p)(t) == pytest.approx(2.5 * p(t), abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(signals, st.floats(-20, 20), st.floats(-20, 20))
def test_signal_shift_and_bound(p, t, s):
    assert p.shifted(s)(t) == pytest.approx(p(t + s), abs=1e-9)
    assert abs(p(t)) <= p.bound() + 1e-12


def test_signal_derivative_and_vectorised_evaluation():
    p = Sig.sine(2.0, 3.0, 0.4) + Sig.cosine(0.5, math.sqrt(2)) + 1.0
    t = np.linspace(-3, 3, 11)
    eta = 1e-6
    assert_allclose(p.derivative(t), (p(t + eta) - p(t - eta)) / (2 * eta), atol=1e-6)
    assert_allclose(p(t), [p(float(s)) for s in t], rtol=0, atol=1e-14)


def test_squared_sine_collapses_to_cosine_form():
    sq = Sig.sine() * Sig.sine()
    assert sq.offset == pytest.approx(0.5)
    assert len(sq.terms) == 1 and sq.terms[0][1] == pytest.approx(2.0)


def test_signal_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        Sig(((1.0, float("nan"), 0.0),))


def test_signal_json_round_trip():
    p = Sig.sine(1.0, math.sqrt(2), 0.3) + 0.2
    q = Sig.from_json(json.loads(json.dumps(p.to_json())))
    assert q == p
    assert Sig.from_json(3.0)(1.7) == 3.0


def test_affine_field_evaluation_and_partials():
    fld = CoefficientField.affine([Sig.sine(), 2.0], Sig.cosine())
    x = np.array([[1.0, 2.0], [0.5, -1.0]])
    t = np.array([0.3, 1.1])
    assert_allclose(fld(t, x), np.sin(t) * x[:, 0] + 2 * x[:, 1] + np.cos(t))
    assert_allclose(fld.partial(t, x, 0), np.sin(t))
    assert fld.shifted(0.5)(0.0, x[0]) == pytest.approx(fld(0.5, x[0]))


def test_general_field_partial_by_differences():
    fld = FIELD_BUILTINS["sin_state"](amplitude=0.5)
    x = np.array([[0.3], [2.0]])
    assert_allclose(fld.partial(0.0, x, 0), 0.5 * np.cos(x[:, 0]), atol=1e-8)


def test_field_requires_exactly_one_form():
    with pytest.raises(InvalidInputError):
        CoefficientField()


def test_model_validates_shapes():
    with pytest.raises(InvalidInputError):
        SdeModel(2, 1, (CoefficientField.zero(2),), ((CoefficientField.zero(2),),) * 2)
    with pytest.raises(InvalidInputError):
        SdeModel(1, 1, (CoefficientField.zero(1),), ((CoefficientField.zero(1),),), lipschitz_K=-1.0)
    with pytest.raises(InvalidInputError):
        example2_model().drift_at(0.0, np.zeros(3))


def test_affine_matrices_reproduce_coefficients():
    rng = np.random.default_rng(3)
    model = random_affine_model(rng, 3, 2)
    x = rng.normal(size=3)
    F, f0, G, g0 = model.affine_matrices(1.3)
    assert_allclose(model.drift_at(1.3, x), F @ x + f0, atol=1e-12)
    assert_allclose(model.diffusion_at(1.3, x), np.einsum("ilj,j->il", G, x) + g0, atol=1e-12)


def test_shift_model_is_exact_time_shift():
    model = example2_model()
    x = np.array([0.7, -0.2])
    shifted = shift_model(model, 2.5)
    assert_allclose(shifted.drift_at(1.0, x), model.drift_at(3.5, x))
    assert_allclose(shifted.diffusion_at(1.0, x), model.diffusion_at(3.5, x))
    twice = shift_model(shifted, -2.5)
    assert_allclose(twice.diffusion_at(1.0, x), model.diffusion_at(1.0, x), atol=1e-12)


def test_model_json_round_trip():
    for model in (example1_model(), example2_model(), example3_model()):
        again = model_from_json(json.dumps(model.to_json()))
        x = np.array([[0.4] * model.d, [-1.0] * model.d])
        t = np.array([0.2, 7.0])
        assert_allclose(again.drift_at(t, x), model.drift_at(t, x))
        assert_allclose(again.diffusion_at(t, x), model.diffusion_at(t, x))
        assert again.lipschitz_K == model.lipschitz_K


def test_model_json_errors():
    with pytest.raises(InvalidInputError):
        model_from_json("{not json")
    with pytest.raises(InvalidInputError):
        model_from_json({"d": 1, "m": 1, "drift": [{"builtin": "nope"}], "diffusion": [[0]]})
    with pytest.raises(InvalidInputError):
        model_from_json({"d": 1, "drift": []})


def test_box_sampling_respects_bounds():
    box = Box((0.0, 2.0), (-1.0, 0.0), (1.0, 3.0))
    rng = np.random.default_rng(0)
    t, x, y = box.sample_pairs(rng, 2000)
    lo, hi = np.array([-1.0, 0.0]), np.array([1.0, 3.0])
    assert np.all(x >= lo) and np.all(x <= hi)
    # near-diagonal partners may sit just outside the box
    slack = 1e-3 * box.diameter
    assert np.all(y >= lo - slack) and np.all(y <= hi + slack)
    near = np.linalg.norm(x - y, axis=1) <= slack
    assert near.sum() >= 400
    assert np.all((t >= 0) & (t <= 2))
    assert Box.from_json({"t": [0, 1], "half_width": 2}, 3).x_high == (2.0, 2.0, 2.0)


@pytest.mark.parametrize("build", [example1_model, example2_model, example3_model])
def test_declared_constants_hold_for_examples(build):
    model = build()
    rep = estimate_lipschitz(model, Box.cube(model.d, 5.0, (0.0, 100.0)), 20_000, 1)
    assert rep.passed, rep.to_json()
    json.dumps(rep.to_json())


def test_lipschitz_estimate_flags_understated_constant():
    true = example2_model()
    model = SdeModel(true.d, true.m, true.drift, true.diffusion, 0.5, 0.5, "understated")
    assert not estimate_lipschitz(model, Box.cube(2, 5.0), 2000, 0).passed
