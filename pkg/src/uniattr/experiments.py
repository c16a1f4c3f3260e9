"""Experiment orchestration behind the CLI subcommands.

Every run derives per-sample random streams from ``(seed, sample index)`` so
results do not depend on evaluation order, and every file goes through the
deterministic writers in :mod:`uniattr.io`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .attribution import AttributionMap, PathTrace, integrated_gradients, simple_gradients, uni_attribute
from .baselines import SaturatedSampleError, static_baseline
from .config import ExperimentConfig
from .data import Dataset, gen_dataset
from .metrics import (
    MetricReport,
    deletion_insertion,
    fragility_attack,
    mufidelity,
    path_monotonicity,
    riemann_stability,
    spearman,
    topk_intersection,
)
from .models import ModelParams, accuracy, load_model, predict, save_model, train

log = logging.getLogger(__name__)

EVAL_SEED_OFFSET = 1000


class MissingArtifactError(RuntimeError):
    pass


def sample_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def train_data(cfg: ExperimentConfig) -> Dataset:
    d = cfg.dataset
    return gen_dataset(d.kind, d.n_train, d.side, cfg.seed, d.corruption, d.strength, d.num_classes)


def eval_data(cfg: ExperimentConfig, n: int | None = None, corruption: str | None = None) -> Dataset:
    d = cfg.dataset
    return gen_dataset(d.kind, n or cfg.n_samples, d.side, cfg.seed + EVAL_SEED_OFFSET,
                       d.corruption if corruption is None else corruption, d.strength, d.num_classes)


def model_path(cfg: ExperimentConfig) -> Path:
    return Path(cfg.model.path) if cfg.model.path else cfg.output_dir() / "model.bin"


def fit_model(cfg: ExperimentConfig) -> ModelParams:
    m = cfg.model
    return train(m.arch, train_data(cfg), m.epochs, m.lr, cfg.seed, m.batch_size)


def obtain_model(cfg: ExperimentConfig, train_if_missing: bool = True) -> ModelParams:
    """Load the configured model artifact, training and saving it first if absent."""
    path = model_path(cfg)
    if path.is_file():
        return load_model(path)
    if cfg.model.path or not train_if_missing:
        raise MissingArtifactError(f"missing model artifact: {path}; run `train` first")
    model = fit_model(cfg)
    save_model(model, path)
    return model


@dataclass
class Attribution:
    amap: AttributionMap
    trace: PathTrace | None
    extra: dict


def attribute(model: ModelParams, method: str, x, c: int, cfg: ExperimentConfig, seed: int) -> Attribution:
    """One attribution map for ``method`` on sample ``x``, class ``c``."""
    if method == "sg":
        return Attribution(simple_gradients(model, x, c, cfg.target_mode), None, {})
    if method == "uni":
        amap, base, trace = uni_attribute(model, x, c, c, cfg.uni, cfg.B, cfg.target_mode, seed)
        extra = {"initial_cost": base.initial_cost, "final_cost": base.final_cost, "eta_used": base.eta_used}
        return Attribution(amap, trace, extra)
    if method.startswith("ig-"):
        base = static_baseline(method[3:], x, seed=seed)
        amap, trace = integrated_gradients(model, c, x, base.baseline, cfg.B, mode=cfg.target_mode, method=method)
        return Attribution(amap, trace, {})
    raise ValueError(f"unknown method {method!r}")


def method_fn(model, method, c, cfg, seed):
    return lambda v: attribute(model, method, v, c, cfg, seed).amap


def _targets(model: ModelParams, data: Dataset) -> np.ndarray:
    return np.asarray(predict(model, data.x))


def _report_dict(reports: dict[str, dict[str, MetricReport]]) -> dict:
    return {m: {k: r for k, r in per.items()} for m, per in reports.items()}


def markdown_table(rows: dict[str, dict[str, MetricReport]], columns: list[str]) -> str:
    lines = ["| method | " + " | ".join(columns) + " |", "|---" * (len(columns) + 1) + "|"]
    for method, per in rows.items():
        cells = []
        for col in columns:
            r = per.get(col)
            cells.append("-" if r is None else f"{r.mean:.4f} ± {r.std:.4f}")
        lines.append(f"| {method} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# subcommands


def run_train(cfg: ExperimentConfig) -> dict:
    out = cfg.output_dir()
    model = fit_model(cfg)
    save_model(model, model_path(cfg))
    test = eval_data(cfg)
    summary = {**model.meta, "test_accuracy": accuracy(model, test.x, test.y), "theta_sha256": model.theta_hash()}
    io.write_json(out / "train_report.json", summary)
    log.info("trained %s: test accuracy %.4f", cfg.model.arch, summary["test_accuracy"])
    return summary


def run_attribute(cfg: ExperimentConfig) -> dict:
    out = cfg.output_dir() / "attributions"
    model = obtain_model(cfg)
    data = eval_data(cfg, n=cfg.n_export)
    targets = _targets(model, data)
    summary = {}
    for i, (x, c) in enumerate(zip(data.x, targets)):
        seed = sample_seed(cfg.seed, i)
        series = {}
        for method in cfg.methods:
            res = attribute(model, method, x, int(c), cfg, seed)
            stem = out / method / f"sample_{i:03d}"
            io.export_map_csv(stem.with_suffix(".csv"), res.amap)
            if x.ndim == 2:
                io.write_pgm(stem.with_suffix(".pgm"), res.amap.scores, signed=True)
            entry = {"target": int(c), "sum": float(res.amap.scores.sum()), **res.extra}
            if res.trace is not None:
                io.export_trace_csv(str(stem) + "_path.csv", res.trace)
                series[method] = (res.trace.alphas, res.trace.confidences)
                entry["monotonicity"] = path_monotonicity(res.trace)
            summary.setdefault(method, []).append(entry)
        if series:
            io.render_line_plot(series, out / f"paths_{i:03d}.svg", title=f"path confidence, sample {i}",
                                xlabel="alpha", ylabel="F_c")
    io.write_json(out / "summary.json", summary)
    return summary


def evaluate_methods(model: ModelParams, data: Dataset, fill: np.ndarray, cfg: ExperimentConfig):
    """Per-method MetricReports plus mean deletion/insertion curves."""
    targets = _targets(model, data)
    reports, curves = {}, {}
    for method in cfg.methods:
        values: dict[str, list[float]] = {}
        curve_acc: dict[str, list[np.ndarray]] = {}
        skipped = []
        for i, (x, c) in enumerate(zip(data.x, targets)):
            seed = sample_seed(cfg.seed, i)
            try:
                res = attribute(model, method, x, int(c), cfg, seed)
            except SaturatedSampleError:
                skipped.append(i)
                continue
            for spec in cfg.metrics:
                p = spec.params
                if spec.name == "mufidelity":
                    v = mufidelity(model, res.amap, x, int(c), p.get("subset_fraction", 0.25),
                                   p.get("n_subsets", 128), fill, seed, cfg.target_mode)
                elif spec.name in ("deletion", "insertion"):
                    curve, v = deletion_insertion(model, res.amap, x, int(c), p.get("step_fraction", 0.1),
                                                  spec.name, fill, cfg.target_mode)
                    curve_acc.setdefault(spec.name, []).append(curve)
                elif res.trace is None:
                    continue
                else:
                    v = path_monotonicity(res.trace)
                values.setdefault(spec.name, []).append(v)
        reports[method] = {
            name: MetricReport.from_values(
                name, vals,
                config={"seed": cfg.seed, "n_samples": len(data), "B": cfg.B, **cfg.metric(name).params},
                details={"skipped_saturated": skipped},
            )
            for name, vals in values.items()
        }
        curves[method] = {k: np.mean(v, axis=0) for k, v in curve_acc.items()}
    return reports, curves


def run_evaluate(cfg: ExperimentConfig) -> dict:
    if not cfg.methods:
        raise ValueError("no methods selected")
    out = cfg.output_dir()
    model = obtain_model(cfg)
    fill = train_data(cfg).mean_input()
    data = eval_data(cfg)
    reports, curves = evaluate_methods(model, data, fill, cfg)
    io.write_json(out / "metrics.json", _report_dict(reports))
    columns = [m.name for m in cfg.metrics]
    (out / "metrics.md").write_text(markdown_table(reports, columns))
    for kind in ("deletion", "insertion"):
        methods = [m for m in cfg.methods if kind in curves[m]]
        if not methods:
            continue
        steps = len(curves[methods[0]][kind])
        grid = np.linspace(0.0, 1.0, steps)
        rows = [[float(a)] + [float(curves[m][kind][j]) for m in methods] for j, a in enumerate(grid)]
        io.write_csv(out / f"{kind}_curves.csv", ["fraction", *methods], rows)
    return _report_dict(reports)


def run_attack(cfg: ExperimentConfig, methods=None) -> dict:
    a = cfg.attack
    out = cfg.output_dir()
    model = obtain_model(cfg)
    data = eval_data(cfg, n=a.n_samples)
    targets = _targets(model, data)
    d = int(np.prod(data.x.shape[1:]))
    k = max(1, int(round(a.k_fraction * d)))
    reports, checks = {}, {}
    for method in methods or cfg.methods:
        rho, topk, preserved, within = [], [], [], []
        for i, (x, c) in enumerate(zip(data.x, targets)):
            seed = sample_seed(cfg.seed, i)
            fn = method_fn(model, method, int(c), cfg, seed)
            res = fragility_attack(model, fn, x, int(c), a.eps_f, a.n_steps, a.spsa_samples, seed=seed,
                                   single_step=a.single_step)
            rho.append(spearman(res.pre.scores, res.post.scores))
            topk.append(topk_intersection(res.pre, res.post, k))
            preserved.append(res.label_preserved and predict(model, res.perturbed) == int(c))
            within.append(bool(np.max(np.abs(res.perturbed - x)) <= a.eps_f))
        conf = {"eps_f": a.eps_f, "n_steps": a.n_steps, "spsa_samples": a.spsa_samples, "k": k, "seed": cfg.seed}
        reports[method] = {
            "spearman": MetricReport.from_values("attack_spearman", rho, conf, preserved),
            "topk": MetricReport.from_values("attack_topk", topk, conf, preserved),
        }
        checks[method] = {"label_preserved": preserved, "within_budget": within}
    io.write_json(out / "attack.json", {"reports": reports, "checks": checks})
    (out / "attack.md").write_text(markdown_table(reports, ["spearman", "topk"]))
    return {"reports": reports, "checks": checks}


def run_riemann_study(cfg: ExperimentConfig) -> dict:
    r = cfg.riemann
    out = cfg.output_dir()
    model = obtain_model(cfg)
    data = eval_data(cfg, n=r.n_samples)
    targets = _targets(model, data)
    result = {}
    for method in [m for m in cfg.methods if m != "sg"]:
        rows = []
        for i, (x, c) in enumerate(zip(data.x, targets)):
            seed = sample_seed(cfg.seed, i)
            res = attribute(model, method, x, int(c), cfg, seed)
            rep = riemann_stability(model, int(c), x, res.amap.baseline, r.B_list, r.B_oracle, cfg.target_mode, r.n_grid)
            rows.append(rep)
        errors = np.array([rep.values for rep in rows])
        gaps = np.array([rep.details["gap"] for rep in rows])
        bounds = np.array([rep.details["bound"] for rep in rows])
        result[method] = {
            "B_list": list(r.B_list),
            "mean_error": errors.mean(axis=0),
            "mean_gap": gaps.mean(axis=0),
            "mean_bound": bounds.mean(axis=0),
            "gap_within_bound": bool(np.all(gaps <= bounds + 1e-9)),
            "curvature": [rep.details["curvature"] for rep in rows],
            "mean_curvature": float(np.mean([rep.details["curvature"] for rep in rows])),
        }
    io.write_json(out / "riemann.json", result)
    io.write_csv(out / "riemann.csv", ["method", "B", "mean_error", "mean_gap", "mean_bound"],
                 [[m, B, float(v["mean_error"][j]), float(v["mean_gap"][j]), float(v["mean_bound"][j])]
                  for m, v in result.items() for j, B in enumerate(r.B_list)])
    io.render_line_plot({m: (r.B_list, v["mean_error"]) for m, v in result.items()}, out / "riemann.svg",
                        title="attribution error vs Riemann steps", xlabel="B", ylabel="relative error")
    return result
