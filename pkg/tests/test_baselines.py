import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uniattr.baselines import (
    SaturatedSampleError,
    UniHyper,
    match_baseline,
    matching_cost,
    static_baseline,
    uni_baseline,
    unlearn_direction,
)
from uniattr.models import Gmm3Params, ModelParams, loss_value, model_forward


def test_hyper_defaults_and_validation():
    h = UniHyper()
    assert (h.eta, h.T, h.epsilon, h.mu) == (1.0, 10, 0.25, 0.1)
    for bad in [dict(eta=-1), dict(T=-1), dict(epsilon=0), dict(mu=0), dict(delta0="x"), dict(projection="cube")]:
        with pytest.raises(ValueError):
            UniHyper(**bad)


def test_static_baselines(stripes_eval):
    x = stripes_eval.x[0]
    np.testing.assert_array_equal(static_baseline("black", x).baseline, 0.0)
    blur = static_baseline("blur", x).baseline
    assert blur.shape == x.shape and blur.std() < x.std()
    n1, n2 = static_baseline("noise", x, seed=3), static_baseline("noise", x, seed=3)
    np.testing.assert_array_equal(n1.baseline, n2.baseline)
    assert n1.baseline.min() >= 0 and n1.baseline.max() <= 1
    with pytest.raises(ValueError, match="unknown static baseline"):
        static_baseline("white", x)


def test_unlearning_step_is_unit_norm_and_raises_loss(cnn, stripes_eval):
    x, y = stripes_eval.x[0], int(stripes_eval.y[0])
    u = unlearn_direction(cnn, x, y, eta=1.0)
    assert np.linalg.norm(u.theta - cnn.theta) == pytest.approx(1.0, abs=1e-9)
    assert loss_value(u, x, y) > loss_value(cnn, x, y)
    assert u.meta["unlearn_eta"] == 1.0 and u.meta["loss_increased"]


def test_zero_eta_leaves_weights(cnn, stripes_eval):
    u = unlearn_direction(cnn, stripes_eval.x[1], int(stripes_eval.y[1]), eta=0.0)
    np.testing.assert_array_equal(u.theta, cnn.theta)


def test_saturated_sample_detected():
    # zero weights and biases: every input gives a uniform output, but the loss gradient
    # w.r.t. the weights vanishes only when the input is zero as well
    m = ModelParams("linear", np.zeros(3 * 2 + 2), (3,), 2)
    m = m.with_theta(np.r_[np.zeros(6), 50.0, -50.0])
    with pytest.raises(SaturatedSampleError, match="saturated"):
        unlearn_direction(m, np.zeros(3), 0, 1.0)


def test_step_halving_when_loss_cannot_rise():
    # on a linear model the ascent step always raises the loss; with a huge eta the
    # step is still taken (loss keeps rising), so halving is exercised via max_halvings=0
    m = ModelParams("linear", np.r_[np.ones(6) * 0.1, 0.0, 0.0], (3,), 2)
    u = unlearn_direction(m, np.array([0.3, 0.2, 0.1]), 1, eta=0.5, max_halvings=0)
    assert u.meta["unlearn_eta"] == 0.5


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 199), st.floats(0.05, 2.0), st.sampled_from(["zero", "gaussian"]))
def test_sphere_projection_every_step(cnn, stripes_eval, i, eps, delta0):
    x, y = stripes_eval.x[i], int(stripes_eval.y[i])
    res = uni_baseline(cnn, x, y, UniHyper(epsilon=eps, delta0=delta0), seed=i)
    assert len(res.trace) == 10
    for step in res.trace:
        assert step.delta_norm == pytest.approx(eps, abs=1e-9)
    np.testing.assert_allclose(res.baseline, x + res.delta)


def test_matching_reduces_kl(cnn, stripes_eval):
    x, y = stripes_eval.x[2], int(stripes_eval.y[2])
    unlearned = unlearn_direction(cnn, x, y, 1.0)
    res = match_baseline(cnn, unlearned, x, UniHyper())
    target = model_forward(unlearned, x)
    assert res.final_cost == pytest.approx(matching_cost(cnn, target, x, res.delta), abs=1e-12)
    assert res.final_cost < res.initial_cost
    assert res.unlearned_theta_hash == unlearned.theta_hash()


def test_ball_projection_only_shrinks(cnn, stripes_eval):
    res = uni_baseline(cnn, stripes_eval.x[3], int(stripes_eval.y[3]), UniHyper(projection="ball", epsilon=100.0))
    assert all(s.delta_norm <= 100.0 for s in res.trace)


def test_zero_steps_returns_input(cnn, stripes_eval):
    x = stripes_eval.x[4]
    res = uni_baseline(cnn, x, int(stripes_eval.y[4]), UniHyper(T=0))
    np.testing.assert_array_equal(res.baseline, x)
    assert res.trace == []


def test_gmm_baseline_moves_away_from_other_components(gmm):
    x = np.array([2.0, 5.0])
    res = uni_baseline(gmm, x, 0, UniHyper(epsilon=1.0))
    assert np.linalg.norm(res.delta) == pytest.approx(1.0, abs=1e-12)
    means = Gmm3Params.from_model(gmm).means
    others = np.delete(means, 1, axis=0)
    before = np.linalg.norm(others - x, axis=1).min()
    after = np.linalg.norm(others - res.baseline, axis=1).min()
    assert after > before
