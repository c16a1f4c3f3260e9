"""Two self-contained demonstrations.

``demo_gmm`` fits the three-component mixture, unlearns one data point and
compares the matched baseline's path with random baselines at the same
distance. ``bias_showcase`` contrasts static-baseline IG with the unlearned
baseline on corrupted images.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .attribution import integrated_gradients, path_confidences, path_curvature, uni_attribute
from .baselines import UniHyper, match_baseline, static_baseline, unlearn_direction
from .config import ExperimentConfig, GmmDemoSpec
from .experiments import eval_data, obtain_model, sample_seed
from .metrics import spearman
from .models import Gmm3Params, fit_gmm, grad_params, predict, score

MONOTONE_TOL = 1e-9
DARK_LEVEL = 0.2
SHOWCASE_PAIRS = (("brighten", "black"), ("blur", "blur"), ("noise", "noise"))


@dataclass
class DemoReport:
    fitted: Gmm3Params
    unlearned: Gmm3Params
    figure_unlearned: Gmm3Params  # un-normalised ascent step, contour only
    x: np.ndarray
    uni_baseline: np.ndarray
    random_baseline: np.ndarray
    alphas: np.ndarray
    uni_path: np.ndarray
    random_path: np.ndarray
    uni_monotonicity: float
    random_monotonicity: float
    uni_curvature: float
    random_curvature: float
    random_draws: dict
    grid_x: np.ndarray
    grid_y: np.ndarray
    grid_f: np.ndarray
    grid_f_unlearned: np.ndarray
    notes: list[str] = field(default_factory=list)


def _random_baseline(spec: GmmDemoSpec, x, radius, rng) -> np.ndarray:
    if spec.random_mode == "equal-distance":
        u = rng.standard_normal(2)
        return x + radius * u / np.linalg.norm(u)
    x0, x1, y0, y1 = spec.contour_range
    return np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])


def _grid(model, spec: GmmDemoSpec):
    x0, x1, y0, y1 = spec.contour_range
    gx = np.linspace(x0, x1, spec.contour_steps)
    gy = np.linspace(y0, y1, spec.contour_steps)
    pts = np.stack(np.meshgrid(gx, gy, indexing="xy"), axis=-1).reshape(-1, 2)
    f = score(model, pts, None, mode="total")
    return gx, gy, np.asarray(f).reshape(len(gy), len(gx))


def demo_gmm(cfg: ExperimentConfig | None = None, seed: int | None = None) -> DemoReport:
    cfg = cfg or ExperimentConfig()
    spec = cfg.gmm_demo
    seed = cfg.seed if seed is None else seed
    points = np.asarray(spec.points, dtype=np.float64)
    fitted = fit_gmm(points, sigma=spec.sigma, seed=seed)
    model = fitted.to_model()
    x = points[spec.unlearn_index]
    hyper = UniHyper(eta=spec.eta, T=spec.T, epsilon=spec.epsilon, mu=spec.mu)
    unlearned = unlearn_direction(model, x, 0, hyper.eta, hyper.max_halvings)
    base = match_baseline(model, unlearned, x, hyper, seed=seed)
    x_uni = base.baseline
    radius = float(np.linalg.norm(x_uni - x))

    n, ng = spec.n_alpha, spec.n_curvature_grid
    alphas = np.linspace(0.0, 1.0, n)
    uni_path = path_confidences(model, None, x, x_uni, n, mode="total")
    uni_rho = spearman(np.arange(n), uni_path)
    uni_curv = path_curvature(model, None, x, x_uni, ng, mode="total")

    rng = np.random.default_rng(sample_seed(seed, 0))
    rhos, curvs, baselines = [], [], []
    for _ in range(spec.n_random):
        xr = _random_baseline(spec, x, radius, rng)
        baselines.append(xr)
        rhos.append(spearman(np.arange(n), path_confidences(model, None, x, xr, n, mode="total")))
        curvs.append(path_curvature(model, None, x, xr, ng, mode="total"))
    rhos, curvs = np.array(rhos), np.array(curvs)

    fig_theta = model.theta + spec.eta * grad_params(model, x, 0)
    figure_model = model.with_theta(fig_theta)
    gx, gy, gf = _grid(model, spec)
    _, _, gfu = _grid(figure_model, spec)
    return DemoReport(
        fitted=fitted,
        unlearned=Gmm3Params.from_model(unlearned),
        figure_unlearned=Gmm3Params.from_model(figure_model),
        x=x,
        uni_baseline=x_uni,
        random_baseline=baselines[0],
        alphas=alphas,
        uni_path=uni_path,
        random_path=path_confidences(model, None, x, baselines[0], n, mode="total"),
        uni_monotonicity=uni_rho,
        random_monotonicity=float(rhos[0]),
        uni_curvature=uni_curv,
        random_curvature=float(curvs[0]),
        random_draws={
            "mode": spec.random_mode,
            "radius": radius,
            "n": spec.n_random,
            "monotonicity": rhos,
            "curvature": curvs,
            "fraction_nonmonotone": float(np.mean(rhos < 1.0 - MONOTONE_TOL)),
            "fraction_uni_curvature_lower": float(np.mean(uni_curv < curvs)),
        },
        grid_x=gx,
        grid_y=gy,
        grid_f=gf,
        grid_f_unlearned=gfu,
        notes=[
            f"random baselines: {spec.random_mode}, radius {radius:.6g} = ||x_uni - x||",
            "quantitative results use the normalised unlearning step; figure_unlearned is the raw ascent step",
            f"sigma {spec.sigma}, {n}-point alpha grid, {ng}-point curvature grid",
        ],
    )


def write_demo(report: DemoReport, out_dir) -> None:
    out = Path(out_dir)
    io.write_json(out / "demo_report.json", report)
    rows = []
    for j, yv in enumerate(report.grid_y):
        for i, xv in enumerate(report.grid_x):
            rows.append([float(xv), float(yv), float(report.grid_f[j, i]), float(report.grid_f_unlearned[j, i])])
    io.write_csv(out / "contour.csv", ["x", "y", "F", "F_unlearned"], rows)
    io.render_line_plot(
        {"uni": (report.alphas, report.uni_path), "random": (report.alphas, report.random_path)},
        out / "paths.svg", title="mixture density along the path", xlabel="alpha", ylabel="F",
    )


# --------------------------------------------------------------------------
# static-baseline bias


def neighbor_roughness(scores, image, same_tol: float = 0.1) -> float:
    """Mean |A_i - A_j| over 4-neighbour pairs with similar input values, on a max-abs normalised map."""
    a = np.asarray(scores, dtype=np.float64)
    m = float(np.abs(a).max())
    if m == 0.0:
        return 0.0
    a = a / m
    diffs = []
    for axis in (0, 1):
        da = np.abs(np.diff(a, axis=axis))
        same = np.abs(np.diff(image, axis=axis)) < same_tol
        diffs.append(da[same])
    d = np.concatenate(diffs)
    return float(d.mean()) if d.size else 0.0


def dark_mass(scores, image, level: float = DARK_LEVEL) -> float:
    """Share of total |attribution| that falls on pixels darker than ``level``."""
    a = np.abs(np.asarray(scores, dtype=np.float64))
    total = float(a.sum())
    return float(a[image < level].sum() / total) if total > 0 else 0.0


def bias_showcase(cfg: ExperimentConfig, n_samples: int = 8) -> dict:
    out = cfg.output_dir() / "bias_showcase"
    model = obtain_model(cfg, train_if_missing=False)
    summary = {}
    for corruption, kind in SHOWCASE_PAIRS:
        data = eval_data(cfg, n=n_samples, corruption=corruption)
        targets = np.asarray(predict(model, data.x))
        rough_static, rough_uni, dark_static, dark_uni = [], [], [], []
        for i, (x, c) in enumerate(zip(data.x, targets)):
            seed = sample_seed(cfg.seed, i)
            base = static_baseline(kind, x, seed=seed)
            static_map, _ = integrated_gradients(model, int(c), x, base.baseline, cfg.B, cfg.target_mode,
                                                 method=f"ig-{kind}")
            uni_map, _, _ = uni_attribute(model, x, int(c), int(c), cfg.uni, cfg.B, cfg.target_mode, seed)
            rough_static.append(neighbor_roughness(static_map.scores, x))
            rough_uni.append(neighbor_roughness(uni_map.scores, x))
            dark_static.append(dark_mass(static_map.scores, x))
            dark_uni.append(dark_mass(uni_map.scores, x))
            if i < cfg.n_export:
                stem = out / corruption / f"sample_{i:03d}"
                io.write_pgm(f"{stem}_input.pgm", x)
                io.write_pgm(f"{stem}_ig-{kind}.pgm", static_map.scores, signed=True)
                io.write_pgm(f"{stem}_uni.pgm", uni_map.scores, signed=True)
        summary[corruption] = {
            "static_baseline": kind,
            "roughness_static": float(np.mean(rough_static)),
            "roughness_uni": float(np.mean(rough_uni)),
            "dark_mass_static": float(np.mean(dark_static)),
            "dark_mass_uni": float(np.mean(dark_uni)),
            "n_samples": len(data),
        }
    summary["dark_stripes"] = _dark_stripe_mass(model, cfg, n_samples)
    io.write_json(out / "summary.json", summary)
    return summary


def _dark_stripe_mass(model, cfg: ExperimentConfig, n_samples: int) -> dict:
    """Black-baseline IG vs UNI attribution mass on dark pixels of clean stripe images.

    With a black baseline, x - x' is small wherever x is dark, so dark but
    salient pixels receive little attribution.
    """
    data = eval_data(cfg, n=4 * n_samples, corruption="none")
    stripes = data.x[data.y == 0][:n_samples]
    black, uni = [], []
    for i, x in enumerate(stripes):
        c = int(predict(model, x))
        seed = sample_seed(cfg.seed, i)
        static_map, _ = integrated_gradients(model, c, x, np.zeros_like(x), cfg.B, cfg.target_mode)
        uni_map, _, _ = uni_attribute(model, x, c, c, cfg.uni, cfg.B, cfg.target_mode, seed)
        black.append(dark_mass(static_map.scores, x))
        uni.append(dark_mass(uni_map.scores, x))
    return {"dark_mass_black": float(np.mean(black)), "dark_mass_uni": float(np.mean(uni)), "n_samples": len(stripes)}
