"""Independent reference evaluators for the test suite.

Written directly in numpy with ``np.longdouble`` arithmetic, without the
tape, so finite differences taken through them carry roughly three more
digits than float64 and are a sharper check of tape gradients.
"""

from __future__ import annotations

import itertools

import numpy as np

from uniattr.models import ModelParams, param_layout

LD = np.longdouble


def _unpack(model: ModelParams):
    theta = np.asarray(model.theta, dtype=LD)
    out, i = [], 0
    for _, shape in param_layout(model.arch, model.input_shape, model.num_classes):
        n = int(np.prod(shape))
        out.append(theta[i:i + n].reshape(shape))
        i += n
    return out


def _relu(a, masks, key):
    if key not in masks:
        masks[key] = a > 0
    return np.where(masks[key], a, LD(0))


def _conv(x, w, b):
    # x: (N, C, H, W), w: (O, C, 3, 3), zero padding 1, cross-correlation
    n, c, h, wd = x.shape
    xp = np.zeros((n, c, h + 2, wd + 2), dtype=LD)
    xp[:, :, 1:-1, 1:-1] = x
    out = np.zeros((n, w.shape[0], h, wd), dtype=LD)
    for di, dj in itertools.product(range(3), range(3)):
        patch = xp[:, :, di:di + h, dj:dj + wd]
        out += np.tensordot(patch, w[:, :, di, dj], axes=([1], [1])).transpose(0, 3, 1, 2)
    return out + b[None, :, None, None]


def _pool(a):
    n, c, h, w = a.shape
    return a.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))


def reference_outputs(model: ModelParams, xb, masks=None) -> np.ndarray:
    """Logits (or mixture components) for a batch, in long double.

    ``masks`` maps each ReLU to a boolean activation pattern. Missing entries
    are filled from the current input; passing a filled dict freezes the
    pattern, which makes the network exactly linear between layers.
    """
    masks = {} if masks is None else masks
    xb = np.asarray(xb, dtype=LD)
    n = xb.shape[0]
    p = _unpack(model)
    if model.arch == "linear":
        W, b = p
        return xb.reshape(n, -1) @ W + b
    if model.arch == "mlp":
        W1, b1, W2, b2, W3, b3 = p
        h = _relu(xb.reshape(n, -1) @ W1 + b1, masks, "h1")
        h = _relu(h @ W2 + b2, masks, "h2")
        return h @ W3 + b3
    if model.arch == "small-cnn":
        K1, c1, K2, c2, W, b = p
        a = xb.reshape((n, 1) + model.input_shape)
        a = _pool(_relu(_conv(a, K1, c1), masks, "conv1"))
        a = _pool(_relu(_conv(a, K2, c2), masks, "conv2"))
        return a.reshape(n, -1) @ W + b
    if model.arch == "gmm3":
        means, log_scales = p
        d2 = ((xb[:, None, :] - means[None]) ** 2).sum(-1)
        return np.exp(log_scales)[None] * np.exp(-d2 / (2 * LD(model.sigma) ** 2))
    raise ValueError(model.arch)


def reference_prob(model: ModelParams, xb, c: int, masks=None) -> np.ndarray:
    out = reference_outputs(model, xb, masks)
    if model.arch == "gmm3":
        return out[:, c]
    z = out - out.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e[:, c] / e.sum(axis=1)


def reference_input_grad(model: ModelParams, x, c: int, h: float = 1e-5) -> np.ndarray:
    """Central differences of F_c at x over every input coordinate, batched.

    Activation masks are frozen at x, so a step that straddles a ReLU kink
    still differentiates the piece that is active at x.
    """
    x = np.asarray(x, dtype=LD)
    masks: dict = {}
    reference_outputs(model, x[None], masks)
    d = x.size
    eye = np.eye(d, dtype=LD).reshape((d,) + x.shape) * LD(h)
    frozen = {k: np.broadcast_to(v, (d,) + v.shape[1:]) for k, v in masks.items()}
    fp = reference_prob(model, x[None] + eye, c, frozen)
    fm = reference_prob(model, x[None] - eye, c, frozen)
    return ((fp - fm) / (2 * LD(h))).reshape(x.shape)


def grad_error(g_ad, g_ref, rel_tol=1e-6, abs_tol=1e-8) -> tuple[bool, float]:
    """Check each coordinate: relative error where |g| >= abs_tol, absolute error below.

    Returns (ok, worst normalised error); normalised error <= 1 means within tolerance.
    """
    g_ad = np.asarray(g_ad, dtype=LD).ravel()
    g_ref = np.asarray(g_ref, dtype=LD).ravel()
    err = np.abs(g_ad - g_ref)
    small = np.abs(g_ref) < abs_tol
    norm = np.where(small, err / abs_tol, err / (rel_tol * np.abs(np.where(small, 1, g_ref))))
    worst = float(norm.max()) if norm.size else 0.0
    return worst <= 1.0, worst


def brute_force_auc(values_by_step) -> float:
    """Trapezoid area of a curve on an even grid over [0, 1], summed by hand."""
    v = [float(a) for a in values_by_step]
    n = len(v) - 1
    return sum((v[j] + v[j + 1]) / 2 for j in range(n)) / n


def spearman_no_ties(a, b) -> float:
    """1 - 6 sum d^2 / (n (n^2 - 1)) for tie-free data."""
    a, b = np.asarray(a), np.asarray(b)
    ra = np.argsort(np.argsort(a))
    rb = np.argsort(np.argsort(b))
    n = len(a)
    return 1.0 - 6.0 * float(np.sum((ra - rb) ** 2)) / (n * (n * n - 1))

