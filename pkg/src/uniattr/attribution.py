"""Gradient and path attributions.

All methods attribute a scalar *head*: a function of a batch of inputs with
per-sample values and input gradients. A head is usually a model paired with a
target class and mode (softmax probability, logit, or mixture total), but any
tape-built scalar function works, which is how closed-form checks are written.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import autodiff as ad
from .baselines import BaselineResult, UniHyper, match_baseline, unlearn_direction
from .models import ModelParams, build_score, unflatten

CHUNK = 256


class ModelHead:
    def __init__(self, model: ModelParams, c: int | None, mode: str = "prob"):
        if mode != "total" and (c is None or not 0 <= c < model.num_classes):
            raise IndexError(f"class index {c} out of range for {model.num_classes} outputs")
        self.model, self.c, self.mode = model, c, mode
        self.input_shape = model.input_shape
        self._params = unflatten(model)

    def _build(self, xv, *ps):
        return build_score(self.model, xv, list(ps), self.c, self.mode)

    def values(self, xb: np.ndarray) -> np.ndarray:
        return ad.forward(self._build, [xb, *self._params])

    def values_and_grads(self, xb: np.ndarray):
        vals, (g,) = ad.value_and_grad(self._build, [xb, *self._params], wrt=(0,))
        return vals, g


class FunctionHead:
    """Head from a tape builder mapping a batch Var (N, *shape) to scores (N,)."""

    def __init__(self, builder: Callable[[ad.Var], ad.Var], input_shape):
        self.builder = builder
        self.input_shape = tuple(input_shape)

    def values(self, xb):
        return ad.forward(self.builder, [xb])

    def values_and_grads(self, xb):
        vals, (g,) = ad.value_and_grad(self.builder, [xb], wrt=(0,))
        return vals, g


def as_head(model, c=None, mode: str = "prob"):
    if isinstance(model, ModelParams):
        return ModelHead(model, c, mode)
    return model


def _chunked(fn, xb):
    if len(xb) <= CHUNK:
        return fn(xb)
    parts = [fn(xb[i:i + CHUNK]) for i in range(0, len(xb), CHUNK)]
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate(p) for p in zip(*parts))
    return np.concatenate(parts)


def head_values(head, xb) -> np.ndarray:
    return _chunked(head.values, np.asarray(xb, dtype=np.float64))


def head_values_and_grads(head, xb):
    return _chunked(head.values_and_grads, np.asarray(xb, dtype=np.float64))


@dataclass
class AttributionMap:
    scores: np.ndarray
    target: int | None
    method: str
    baseline: np.ndarray | None = None
    B: int = 0


@dataclass
class PathTrace:
    alphas: np.ndarray
    confidences: np.ndarray
    baseline: np.ndarray
    x: np.ndarray


def path_point(x_prime, x, alpha: float) -> np.ndarray:
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    x_prime, x = np.asarray(x_prime, dtype=np.float64), np.asarray(x, dtype=np.float64)
    if x_prime.shape != x.shape:
        raise ValueError(f"shape mismatch {x_prime.shape} vs {x.shape}")
    if alpha == 0.0:
        return x_prime.copy()
    if alpha == 1.0:
        return x.copy()
    return (1.0 - alpha) * x_prime + alpha * x


def _path(x_prime, x, alphas):
    a = alphas.reshape((-1,) + (1,) * x.ndim)
    pts = x_prime[None] + a * (x - x_prime)[None]
    # endpoints exactly
    pts[alphas == 0.0] = x_prime
    pts[alphas == 1.0] = x
    return pts


def simple_gradients(model, x, c=None, mode: str = "prob") -> AttributionMap:
    head = as_head(model, c, mode)
    x = np.asarray(x, dtype=np.float64)
    _, g = head.values_and_grads(x[None])
    return AttributionMap(g[0], c, "sg")


def integrated_gradients(model, c, x, x_prime, B: int = 15, mode: str = "prob", rule: str = "right",
                         method: str = "ig") -> tuple[AttributionMap, PathTrace]:
    """Riemann-sum integrated gradients along the straight line x' -> x.

    ``rule="right"`` sums gradients at k/B for k = 1..B; ``"trapezoid"``
    averages both endpoint rules. Path confidences are recorded at k = 0..B.
    """
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    x, x_prime = np.asarray(x, dtype=np.float64), np.asarray(x_prime, dtype=np.float64)
    if x.shape != x_prime.shape:
        raise ValueError(f"shape mismatch {x_prime.shape} vs {x.shape}")
    head = as_head(model, c, mode)
    alphas = np.arange(B + 1) / B
    vals, grads = head_values_and_grads(head, _path(x_prime, x, alphas))
    # Sum deviations from the gradient at x, so that a constant integrand
    # (linear head) reproduces w exactly instead of (B * w) / B.
    ref = grads[-1]
    dev = grads - ref
    if rule == "right":
        avg = ref + dev[1:].sum(axis=0) / B
    elif rule == "trapezoid":
        avg = ref + (dev[1:-1].sum(axis=0) + 0.5 * dev[0]) / B
    else:
        raise ValueError(f"unknown Riemann rule {rule!r}")
    scores = (x - x_prime) * avg
    amap = AttributionMap(scores, c, method, baseline=x_prime, B=B)
    return amap, PathTrace(alphas, vals, x_prime, x)


def uni_attribute(model: ModelParams, x, y, c=None, hyper: UniHyper = UniHyper(), B: int = 15,
                  mode: str = "prob", seed: int = 0) -> tuple[AttributionMap, BaselineResult, PathTrace]:
    """Unlearn the sample, match a baseline to the unlearned output, integrate from it."""
    c = y if c is None else c
    unlearned = unlearn_direction(model, x, y, hyper.eta, hyper.max_halvings)
    base = match_baseline(model, unlearned, x, hyper, seed=seed)
    amap, trace = integrated_gradients(model, c, x, base.baseline, B, mode=mode, method="uni")
    return amap, base, trace


def completeness_gap(amap: AttributionMap, model, c, x, x_prime, mode: str = "prob") -> float:
    head = as_head(model, c, mode)
    v = head_values(head, np.stack([np.asarray(x, float), np.asarray(x_prime, float)]))
    return float(abs(amap.scores.sum() - (v[0] - v[1])))


def path_curvature(model, c, x, x_prime, n_grid: int = 1000, mode: str = "prob") -> float:
    """Largest second derivative of F_c per unit length along the segment.

    The directional derivative h'(a) = (x - x') . grad F(x' + a (x - x')) is
    evaluated on ``n_grid`` points and differenced once; dividing by
    ||x - x'||^2 makes the estimate independent of path length, so that
    ``M * ||x - x'||^2 / (2B)`` bounds the right-Riemann completeness error.
    """
    x, x_prime = np.asarray(x, dtype=np.float64), np.asarray(x_prime, dtype=np.float64)
    d = x - x_prime
    dist2 = float(np.sum(d * d))
    if dist2 == 0.0:
        return 0.0
    head = as_head(model, c, mode)
    alphas = np.linspace(0.0, 1.0, n_grid)
    _, grads = head_values_and_grads(head, _path(x_prime, x, alphas))
    hprime = grads.reshape(n_grid, -1) @ d.reshape(-1)
    h2 = np.abs(np.diff(hprime)) / (alphas[1] - alphas[0])
    return float(h2.max() / dist2)


def path_confidences(model, c, x, x_prime, n: int, mode: str = "prob") -> np.ndarray:
    head = as_head(model, c, mode)
    alphas = np.linspace(0.0, 1.0, n)
    return head_values(head, _path(np.asarray(x_prime, float), np.asarray(x, float), alphas))
