import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import linear_head, quadratic_head
from uniattr.attribution import (
    completeness_gap,
    integrated_gradients,
    path_confidences,
    path_curvature,
    path_point,
    simple_gradients,
    uni_attribute,
)
from uniattr.baselines import UniHyper, static_baseline
from uniattr.models import ModelParams, grad_inputs, score

vals = st.floats(-2, 2, allow_nan=False)


def test_path_point_endpoints_exact():
    xp, x = np.array([0.1, 0.7]), np.array([0.3, 0.2])
    np.testing.assert_array_equal(path_point(xp, x, 0.0), xp)
    np.testing.assert_array_equal(path_point(xp, x, 1.0), x)
    with pytest.raises(ValueError):
        path_point(xp, x, 1.5)
    with pytest.raises(ValueError):
        path_point(xp, np.zeros(3), 0.5)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 6, elements=vals), arrays(np.float64, 6, elements=vals),
       arrays(np.float64, 6, elements=vals), st.sampled_from([1, 15, 30]))
def test_linear_head_is_exact(w, x, xp, B):
    head = linear_head(w, 0.3)
    amap, _ = integrated_gradients(head, None, x, xp, B)
    np.testing.assert_array_equal(amap.scores, (x - xp) * w)
    assert completeness_gap(amap, head, None, x, xp) <= 1e-12


def test_quadratic_right_riemann_error():
    head = quadratic_head()
    for B in (1, 2, 15, 30):
        amap, trace = integrated_gradients(head, None, np.array([1.0]), np.array([0.0]), B)
        assert amap.scores[0] == pytest.approx((B + 1) / B, abs=1e-12)
        assert len(trace.confidences) == B + 1
        tr, _ = integrated_gradients(head, None, np.array([1.0]), np.array([0.0]), B, rule="trapezoid")
        assert tr.scores[0] == pytest.approx(1.0, abs=1e-12)


def test_ig_with_x_equal_baseline_is_zero(cnn, stripes_eval):
    x = stripes_eval.x[0]
    amap, _ = integrated_gradients(cnn, 0, x, x, 15)
    np.testing.assert_array_equal(amap.scores, 0.0)


def test_ig_errors(cnn):
    with pytest.raises(ValueError):
        integrated_gradients(cnn, 0, np.zeros((16, 16)), np.zeros((16, 16)), 0)
    with pytest.raises(IndexError):
        integrated_gradients(cnn, 5, np.zeros((16, 16)), np.zeros((16, 16)), 15)
    with pytest.raises(ValueError):
        integrated_gradients(cnn, 0, np.zeros((16, 16)), np.zeros((16, 16)), 4, rule="simpson")


def test_simple_gradients_match_grad_inputs(cnn, stripes_eval):
    x = stripes_eval.x[5]
    np.testing.assert_array_equal(simple_gradients(cnn, x, 1).scores, grad_inputs(cnn, x, 1))


def test_completeness_improves_with_B(cnn, stripes_eval):
    x = stripes_eval.x[6]
    xp = static_baseline("black", x).baseline
    gaps = [completeness_gap(integrated_gradients(cnn, 0, x, xp, B)[0], cnn, 0, x, xp) for B in (1, 30, 300)]
    assert gaps[2] < gaps[0]


def test_uni_attribute_pipeline(cnn, stripes_eval):
    x, y = stripes_eval.x[7], int(stripes_eval.y[7])
    amap, base, trace = uni_attribute(cnn, x, y, hyper=UniHyper(), B=15)
    assert amap.method == "uni" and amap.target == y and amap.B == 15
    np.testing.assert_array_equal(amap.baseline, base.baseline)
    np.testing.assert_array_equal(trace.alphas, np.arange(16) / 15)
    assert trace.confidences[-1] == pytest.approx(score(cnn, x, y))


def test_curvature_of_quadratic_and_linear():
    assert path_curvature(quadratic_head(), None, np.array([1.0]), np.array([0.0])) == pytest.approx(2.0, abs=1e-9)
    assert path_curvature(quadratic_head(), None, np.array([3.0]), np.array([1.0])) == pytest.approx(2.0, abs=1e-9)
    head = linear_head(np.array([1.0, -2.0]))
    assert path_curvature(head, None, np.array([1.0, 2.0]), np.zeros(2)) == pytest.approx(0.0, abs=1e-12)
    assert path_curvature(head, None, np.zeros(2), np.zeros(2)) == 0.0


def test_linear_model_all_baselines_agree_after_normalising(stripes_eval):
    rng = np.random.default_rng(0)
    m = ModelParams("linear", rng.standard_normal(256 * 2 + 2) * 0.05, (16, 16), 2)
    x = stripes_eval.x[0]
    per_unit = []
    for kind in ("black", "blur", "noise"):
        xp = static_baseline(kind, x, seed=1).baseline
        amap, _ = integrated_gradients(m, 1, x, xp, 15, mode="logit")
        d = x - xp
        mask = np.abs(d) > 1e-6
        per_unit.append((amap.scores[mask] / d[mask], mask))
    w = m.theta[:512].reshape(256, 2)[:, 1]
    for ratio, mask in per_unit:
        np.testing.assert_allclose(ratio, w.reshape(16, 16)[mask], atol=1e-9)


def test_path_confidences_endpoints(gmm):
    x, xp = np.array([2.0, 5.0]), np.array([2.5, 5.5])
    conf = path_confidences(gmm, None, x, xp, 50, mode="total")
    assert len(conf) == 50
    assert conf[0] == score(gmm, xp, None, "total") and conf[-1] == score(gmm, x, None, "total")
