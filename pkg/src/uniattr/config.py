"""Experiment configuration: nested dataclasses with a JSON round trip."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import UniHyper
from .data import CORRUPTIONS, DATASET_KINDS
from .io import dumps_json
from .models import ARCHITECTURES

METHODS = ("uni", "ig-black", "ig-blur", "ig-noise", "sg")
METRICS = ("mufidelity", "deletion", "insertion", "monotonicity")
OUTPUT_ROOT_ENV = "UNIATTR_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    kind: str = "stripes-vs-checker"
    n_train: int = 400
    side: int = 16
    num_classes: int = 2
    corruption: str = "none"
    strength: float | None = None


@dataclass(frozen=True)
class ModelSpec:
    arch: str = "small-cnn"
    epochs: int = 8
    lr: float = 0.1
    batch_size: int = 32
    path: str | None = None  # defaults to <out_dir>/model.bin


@dataclass(frozen=True)
class MetricSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AttackSpec:
    eps_f: float = 8 / 255
    n_steps: int = 10
    spsa_samples: int = 4
    n_samples: int = 100
    k_fraction: float = 0.05
    single_step: bool = False


@dataclass(frozen=True)
class RiemannSpec:
    B_list: tuple[int, ...] = (1, 15, 30)
    B_oracle: int = 2000
    n_grid: int = 1000
    n_samples: int = 50


@dataclass(frozen=True)
class GmmDemoSpec:
    points: tuple[tuple[float, float], ...] = ((1.0, 1.0), (2.0, 5.0), (4.0, 3.0))
    unlearn_index: int = 1
    sigma: float = 1.0
    eta: float = 1.0
    epsilon: float = 1.0
    T: int = 10
    mu: float = 0.1
    n_alpha: int = 50
    n_random: int = 100
    n_curvature_grid: int = 1000
    random_mode: str = "equal-distance"  # or "domain-box"
    contour_range: tuple[float, float, float, float] = (-1.0, 6.0, -1.0, 7.0)
    contour_steps: int = 36


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = DatasetSpec()
    model: ModelSpec = ModelSpec()
    methods: tuple[str, ...] = ("uni", "ig-black", "ig-blur", "ig-noise", "sg")
    uni: UniHyper = UniHyper()
    metrics: tuple[MetricSpec, ...] = tuple(MetricSpec(m) for m in METRICS)
    attack: AttackSpec = AttackSpec()
    riemann: RiemannSpec = RiemannSpec()
    gmm_demo: GmmDemoSpec = GmmDemoSpec()
    seed: int = 0
    n_samples: int = 200
    B: int = 15
    target_mode: str = "prob"
    n_export: int = 4
    out_dir: str = ""

    def validate(self) -> ExperimentConfig:
        d = self.dataset
        if d.kind not in DATASET_KINDS:
            raise ConfigError(f"unknown dataset kind {d.kind!r}")
        if d.corruption not in CORRUPTIONS:
            raise ConfigError(f"unknown corruption {d.corruption!r}")
        if self.model.arch not in ARCHITECTURES or self.model.arch == "gmm3":
            raise ConfigError(f"unsupported classifier architecture {self.model.arch!r}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        bad = [m.name for m in self.metrics if m.name not in METRICS]
        if bad:
            raise ConfigError(f"unknown metrics {bad}; expected a subset of {METRICS}")
        if self.n_samples < 1 or self.B < 1:
            raise ConfigError("n_samples and B must be positive")
        if self.gmm_demo.random_mode not in ("equal-distance", "domain-box"):
            raise ConfigError(f"unknown random_mode {self.gmm_demo.random_mode!r}")
        return self

    def output_dir(self) -> Path:
        if self.out_dir:
            return Path(self.out_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / f"seed{self.seed}"

    def metric(self, name: str) -> MetricSpec | None:
        for m in self.metrics:
            if m.name == name:
                return m
        return None


def _tupled(v):
    if isinstance(v, list):
        return tuple(_tupled(a) for a in v)
    return v


def _build(cls, raw):
    if not isinstance(raw, dict):
        raise ConfigError(f"{cls.__name__}: expected an object, got {type(raw).__name__}")
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"{cls.__name__}: unknown keys {unknown}")
    kwargs = {}
    for key, value in raw.items():
        sub = _NESTED.get((cls, key))
        if sub is MetricSpec:
            kwargs[key] = tuple(_build(MetricSpec, m) for m in value)
        elif sub is not None:
            kwargs[key] = _build(sub, value)
        elif key == "params":
            kwargs[key] = dict(value)
        else:
            kwargs[key] = _tupled(value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{cls.__name__}: {exc}") from None


_NESTED = {
    (ExperimentConfig, "dataset"): DatasetSpec,
    (ExperimentConfig, "model"): ModelSpec,
    (ExperimentConfig, "uni"): UniHyper,
    (ExperimentConfig, "metrics"): MetricSpec,
    (ExperimentConfig, "attack"): AttackSpec,
    (ExperimentConfig, "riemann"): RiemannSpec,
    (ExperimentConfig, "gmm_demo"): GmmDemoSpec,
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, raw).validate()


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def save_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(cfg))
    return path
