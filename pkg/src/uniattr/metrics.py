"""Attribution evaluation: faithfulness, monotonicity, stability and robustness."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.stats import rankdata

from .attribution import (
    AttributionMap,
    PathTrace,
    as_head,
    head_values,
    integrated_gradients,
    path_curvature,
)
from .models import ModelParams, predict

DEGENERATE_VAR = 1e-15


@dataclass
class MetricReport:
    metric: str
    values: list[float]
    mean: float
    std: float
    config: dict = field(default_factory=dict)
    flags: list[bool] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, metric, values, config=None, flags=None, details=None) -> MetricReport:
        v = np.asarray(values, dtype=np.float64)
        mean = float(v.mean()) if v.size else 0.0
        std = float(v.std()) if v.size else 0.0
        return cls(metric, [float(a) for a in v], mean, std, dict(config or {}),
                   list(flags or []), dict(details or {}))


@dataclass
class AttackResult:
    perturbed: np.ndarray
    delta: np.ndarray
    label_preserved: bool
    disagreement: float
    pre: AttributionMap
    post: AttributionMap
    steps_taken: int = 0
    reverted: int = 0
    stopped_early: bool = False


# --------------------------------------------------------------------------
# correlations


def correlation(a, b, kind: str = "pearson") -> tuple[float, bool]:
    """Correlation and a degenerate flag (zero-variance input gives 0.0, True)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ValueError("correlation needs at least 2 points")
    if kind == "spearman":
        a, b = rankdata(a), rankdata(b)
    elif kind != "pearson":
        raise ValueError(f"unknown correlation {kind!r}")
    da, db = a - a.mean(), b - b.mean()
    va, vb = np.mean(da * da), np.mean(db * db)
    if va < DEGENERATE_VAR or vb < DEGENERATE_VAR:
        return 0.0, True
    r = float(np.sum(da * db) / np.sqrt(np.sum(da * da) * np.sum(db * db)))
    return min(1.0, max(-1.0, r)), False


def pearson(a, b) -> float:
    return correlation(a, b, "pearson")[0]


def spearman(a, b) -> float:
    """Pearson correlation of average ranks."""
    return correlation(a, b, "spearman")[0]


# --------------------------------------------------------------------------
# faithfulness


def _subset_size(d: int, fraction: float) -> int:
    return max(1, int(np.floor(fraction * d + 0.5)))


def mufidelity_terms(model, amap: AttributionMap, x, c, subset_fraction: float = 0.25, n_subsets: int = 128,
                     fill=None, seed: int = 0, mode: str = "prob", exhaustive: bool = False):
    """Attribution sums and confidence drops over pixel subsets.

    Returns ``(sums, drops)``: for each subset S, the summed attribution over S
    and F_c(x) - F_c(x with S replaced by ``fill``).
    """
    if not 0.0 < subset_fraction < 1.0:
        raise ValueError("subset_fraction must lie in (0, 1)")
    x = np.asarray(x, dtype=np.float64)
    fill = np.zeros_like(x) if fill is None else np.broadcast_to(np.asarray(fill, dtype=np.float64), x.shape)
    d = x.size
    k = _subset_size(d, subset_fraction)
    if exhaustive:
        subsets = [np.array(s) for s in itertools.combinations(range(d), k)]
    else:
        if n_subsets < 10:
            raise ValueError("n_subsets must be at least 10")
        rng = np.random.default_rng(seed)
        subsets = [rng.choice(d, size=k, replace=False) for _ in range(n_subsets)]
    flat_scores = np.asarray(amap.scores, dtype=np.float64).ravel()
    masked = np.repeat(x.reshape(1, -1), len(subsets), axis=0)
    for row, s in zip(masked, subsets):
        row[s] = fill.ravel()[s]
    head = as_head(model, c, mode)
    vals = head_values(head, np.concatenate([x.reshape(1, -1), masked]).reshape((-1,) + x.shape))
    sums = np.array([flat_scores[s].sum() for s in subsets])
    drops = vals[0] - vals[1:]
    return sums, drops


def mufidelity(model, amap: AttributionMap, x, c, subset_fraction: float = 0.25, n_subsets: int = 128,
               fill=None, seed: int = 0, mode: str = "prob", exhaustive: bool = False) -> float:
    """Absolute Pearson correlation between subset attribution mass and confidence drop."""
    sums, drops = mufidelity_terms(model, amap, x, c, subset_fraction, n_subsets, fill, seed, mode, exhaustive)
    return abs(pearson(sums, drops))


def saliency_order(scores) -> np.ndarray:
    """Flat pixel indices by descending score, ties by ascending index."""
    return np.argsort(-np.asarray(scores, dtype=np.float64).ravel(), kind="stable")


def deletion_insertion(model, amap: AttributionMap, x, c, step_fraction: float = 0.1, mode: str = "deletion",
                       fill=None, target_mode: str = "prob") -> tuple[np.ndarray, float]:
    if mode not in ("deletion", "insertion"):
        raise ValueError(f"unknown mode {mode!r}")
    x = np.asarray(x, dtype=np.float64)
    fill = np.zeros_like(x) if fill is None else np.broadcast_to(np.asarray(fill, dtype=np.float64), x.shape)
    n_steps = int(round(1.0 / step_fraction))
    d = x.size
    order = saliency_order(amap.scores)
    src, dst = (fill.ravel(), x.ravel()) if mode == "deletion" else (x.ravel(), fill.ravel())
    frames = []
    for j in range(n_steps + 1):
        img = dst.copy()
        idx = order[: int(round(j * d / n_steps))]
        img[idx] = src[idx]
        frames.append(img.reshape(x.shape))
    curve = head_values(as_head(model, c, target_mode), np.stack(frames))
    return curve, float(np.trapezoid(curve, dx=1.0 / n_steps))


# --------------------------------------------------------------------------
# path behaviour


def path_monotonicity(trace: PathTrace) -> float:
    conf = np.asarray(trace.confidences, dtype=np.float64)
    if conf.size < 3:
        raise ValueError("path monotonicity needs at least 3 path points")
    return spearman(np.arange(conf.size), conf)


def riemann_stability(model, c, x, x_prime, B_list: Sequence[int] = (1, 15, 30), B_oracle: int = 2000,
                      mode: str = "prob", n_grid: int = 1000) -> MetricReport:
    """Right-Riemann attribution error per B against a trapezoid reference at B_oracle.

    Also reports the completeness gap at each B and the curvature bound
    M * ||x - x'||^2 / (2B).
    """
    x, x_prime = np.asarray(x, float), np.asarray(x_prime, float)
    ref, _ = integrated_gradients(model, c, x, x_prime, B_oracle, mode=mode, rule="trapezoid")
    head = as_head(model, c, mode)
    fx, fxp = head_values(head, np.stack([x, x_prime]))
    ref_norm = float(np.linalg.norm(ref.scores))
    curv = path_curvature(model, c, x, x_prime, n_grid, mode)
    dist2 = float(np.sum((x - x_prime) ** 2))
    errors, gaps, bounds = [], [], []
    for B in B_list:
        amap, _ = integrated_gradients(model, c, x, x_prime, B, mode=mode)
        diff = float(np.linalg.norm(amap.scores - ref.scores))
        errors.append(diff / ref_norm if ref_norm > 0 else diff)
        gaps.append(abs(float(amap.scores.sum()) - (fx - fxp)))
        bounds.append(curv * dist2 / (2 * B))
    return MetricReport.from_values(
        "riemann_stability", errors,
        config={"B_list": list(B_list), "B_oracle": B_oracle, "n_grid": n_grid},
        details={"gap": gaps, "bound": bounds, "curvature": curv, "distance": float(np.sqrt(dist2))},
    )


# --------------------------------------------------------------------------
# robustness


def topk_intersection(a: AttributionMap, b: AttributionMap, k: int) -> float:
    sa, sb = np.asarray(a.scores), np.asarray(b.scores)
    if sa.shape != sb.shape:
        raise ValueError(f"shape mismatch {sa.shape} vs {sb.shape}")
    if not 1 <= k <= sa.size:
        raise ValueError(f"k must lie in [1, {sa.size}], got {k}")
    top_a = set(saliency_order(sa)[:k].tolist())
    top_b = set(saliency_order(sb)[:k].tolist())
    return len(top_a & top_b) / k


def spsa_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, scale: float, samples: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Simultaneous-perturbation estimate of grad fn with Rademacher probes."""
    g = np.zeros_like(x)
    for _ in range(samples):
        probe = rng.choice([-1.0, 1.0], size=x.shape)
        g += (fn(x + scale * probe) - fn(x - scale * probe)) / (2 * scale) * probe
    return g / samples


def project_linf(x: np.ndarray, candidate: np.ndarray, eps: float, pixel_range=(0.0, 1.0)) -> np.ndarray:
    """Point within ``eps`` of x (as recomputed in floating point) and inside the pixel range."""
    p = np.clip(np.clip(candidate, x - eps, x + eps), pixel_range[0], pixel_range[1])
    # x +/- eps can round outward; step the offending entries back towards x one ulp at a time
    for _ in range(4):
        over = np.abs(p - x) > eps
        if not over.any():
            break
        p[over] = np.nextafter(p[over], x[over])
    return p


def fragility_attack(model: ModelParams, method: Callable[[np.ndarray], AttributionMap], x, c: int,
                     eps_f: float = 8 / 255, n_steps: int = 10, spsa_samples: int = 4,
                     spsa_scale: float | None = None, seed: int = 0, single_step: bool = False,
                     pixel_range=(0.0, 1.0)) -> AttackResult:
    """Label-preserving l-inf sign-gradient attack on attribution agreement.

    The objective is 1 - spearman(A(x), A(x + delta)). It is rank-based and
    depends on input gradients, so its gradient is estimated with SPSA probes
    through the full attribution method. Each step moves by eps_f / n_steps
    along the sign of the estimate, is clipped to the budget and pixel range,
    and is undone if the predicted class changes.
    """
    x = np.asarray(x, dtype=np.float64)
    if predict(model, x) != c:
        raise ValueError(f"model does not predict class {c} at the clean input")
    pre = method(x)
    delta = np.zeros_like(x)
    if eps_f == 0:
        return AttackResult(x.copy(), delta, True, 0.0, pre, pre)
    steps = 1 if single_step else n_steps
    step = eps_f / steps
    scale = step if spsa_scale is None else spsa_scale
    rng = np.random.default_rng(seed)
    point = x.copy()

    def disagreement(v):
        return 1.0 - spearman(pre.scores, method(v).scores)

    reverted, taken, stopped = 0, 0, False
    for _ in range(steps):
        g = spsa_gradient(disagreement, point, scale, spsa_samples, rng)
        if not np.all(np.isfinite(g)):
            stopped = True
            break
        cand = project_linf(x, point + step * np.sign(g), eps_f, pixel_range)
        if predict(model, cand) != c:
            reverted += 1
            continue
        point = cand
        taken += 1
    post = method(point)
    return AttackResult(
        perturbed=point,
        delta=point - x,
        label_preserved=bool(predict(model, point) == c),
        disagreement=1.0 - spearman(pre.scores, post.scores),
        pre=pre,
        post=post,
        steps_taken=taken,
        reverted=reverted,
        stopped_early=stopped,
    )
