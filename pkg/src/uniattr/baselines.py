"""Baselines for path attribution.

Static baselines (black, blur, noise) and the unlearned, activation-matched
baseline: take one normalised gradient-ascent step on the sample's loss in
weight space, then search an l2-sphere around the input for the point whose
base-model output matches the unlearned model's output at the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from . import autodiff as ad
from .models import ModelParams, build_outputs, grad_params, loss_value, outputs, unflatten, _softmax

STATIC_KINDS = ("black", "blur", "noise")
MIN_GRAD_NORM = 1e-12


class SaturatedSampleError(RuntimeError):
    pass


@dataclass(frozen=True)
class UniHyper:
    eta: float = 1.0
    T: int = 10
    epsilon: float = 0.25
    mu: float = 0.1
    delta0: str = "zero"  # or "gaussian"
    projection: str = "sphere"  # "ball" only shrinks
    max_halvings: int = 5
    delta0_scale: float = 1e-3

    def __post_init__(self):
        # eta = 0 and T = 0 are accepted as degenerate settings.
        if self.eta < 0 or self.T < 0:
            raise ValueError("eta and T must be non-negative")
        if self.epsilon <= 0 or self.mu <= 0:
            raise ValueError("epsilon and mu must be positive")
        if self.delta0 not in ("zero", "gaussian"):
            raise ValueError(f"unknown delta0 {self.delta0!r}")
        if self.projection not in ("sphere", "ball"):
            raise ValueError(f"unknown projection {self.projection!r}")


@dataclass
class TraceStep:
    t: int
    cost: float
    delta_norm: float
    note: str = ""


@dataclass
class BaselineResult:
    baseline: np.ndarray
    delta: np.ndarray
    kind: str
    trace: list[TraceStep] = field(default_factory=list)
    unlearned_theta_hash: str | None = None
    initial_cost: float | None = None
    final_cost: float | None = None
    eta_used: float | None = None


def static_baseline(kind: str, x, seed: int = 0, blur_sigma: float = 2.0, noise_sigma: float = 0.2) -> BaselineResult:
    x = np.asarray(x, dtype=np.float64)
    if kind == "black":
        b = np.zeros_like(x)
    elif kind == "blur":
        b = gaussian_filter(x, blur_sigma, mode="nearest")
    elif kind == "noise":
        rng = np.random.default_rng(seed)
        b = np.clip(x + noise_sigma * rng.standard_normal(x.shape), 0.0, 1.0)
    else:
        raise ValueError(f"unknown static baseline {kind!r}; expected one of {STATIC_KINDS}")
    return BaselineResult(b, b - x, kind)


def unlearn_direction(model: ModelParams, x, y, eta: float, max_halvings: int = 5) -> ModelParams:
    """theta + eta * g / ||g|| with g the loss gradient at (x, y).

    If the step fails to raise the loss, eta is halved (at most
    ``max_halvings`` times). The returned model's ``meta`` records the step
    actually taken.
    """
    g = grad_params(model, x, y)
    norm = float(np.linalg.norm(g))
    if norm <= MIN_GRAD_NORM:
        raise SaturatedSampleError(f"sample already fully unlearnable / saturated (||grad|| = {norm:.3g})")
    direction = g / norm
    before = loss_value(model, x, y)
    step = eta
    for attempt in range(max_halvings + 1):
        unlearned = model.with_theta(model.theta + step * direction)
        after = loss_value(unlearned, x, y)
        if eta == 0 or after > before:
            break
        if attempt < max_halvings:
            step /= 2
    unlearned.meta.update(unlearn_eta=step, loss_before=before, loss_after=after, loss_increased=after > before)
    return unlearned


def _matching_builder(model: ModelParams, x: np.ndarray, target: np.ndarray):
    classifier = model.arch != "gmm3"
    nz = target > 0
    const = float(np.sum(target[nz] * np.log(target[nz])))

    def build(delta, *params):
        out = build_outputs(model, ad.add(delta, x[None]), list(params))
        if classifier:
            return ad.sum_(ad.log_softmax(out) * -target) + const
        # components are unnormalised: generalised KL
        return ad.sum_(ad.log(out) * -target) + ad.sum_(out) + (const - float(target.sum()))

    return build


def _target_output(model: ModelParams, x: np.ndarray) -> np.ndarray:
    out = outputs(model, x)
    return _softmax(out) if model.arch != "gmm3" else out


def matching_cost(model: ModelParams, target: np.ndarray, x, delta) -> float:
    build = _matching_builder(model, np.asarray(x, dtype=np.float64), target)
    return float(ad.forward(build, [np.asarray(delta)[None], *unflatten(model)]))


def match_baseline(model: ModelParams, unlearned: ModelParams, x, hyper: UniHyper, seed: int = 0) -> BaselineResult:
    """Projected descent on KL(F(x; unlearned) || F(x + delta; model)) over the eps-sphere."""
    x = np.asarray(x, dtype=np.float64)
    target = _target_output(unlearned, x)
    build = _matching_builder(model, x, target)
    params = unflatten(model)
    if hyper.delta0 == "gaussian":
        delta = hyper.delta0_scale * np.random.default_rng(seed).standard_normal(x.shape)
    else:
        delta = np.zeros_like(x)
    trace: list[TraceStep] = []
    initial = None
    for t in range(hyper.T):
        cost, (g,) = ad.value_and_grad(build, [delta[None], *params], wrt=(0,))
        cost = float(cost)
        if not np.isfinite(cost):
            raise FloatingPointError(f"matching cost is not finite at step {t}")
        if initial is None:
            initial = cost
        delta = delta - hyper.mu * g[0]
        norm = float(np.linalg.norm(delta))
        note = ""
        if norm == 0.0:
            note = "zero perturbation; rescale skipped"
        elif hyper.projection == "sphere" or norm > hyper.epsilon:
            delta = hyper.epsilon * delta / norm
        trace.append(TraceStep(t, cost, float(np.linalg.norm(delta)), note))
    final = matching_cost(model, target, x, delta)
    if initial is None:
        initial = final
    return BaselineResult(
        baseline=x + delta,
        delta=delta,
        kind="uni",
        trace=trace,
        unlearned_theta_hash=unlearned.theta_hash(),
        initial_cost=initial,
        final_cost=final,
        eta_used=unlearned.meta.get("unlearn_eta"),
    )


def uni_baseline(model: ModelParams, x, y, hyper: UniHyper = UniHyper(), seed: int = 0) -> BaselineResult:
    unlearned = unlearn_direction(model, x, y, hyper.eta, hyper.max_halvings)
    return match_baseline(model, unlearned, x, hyper, seed=seed)
