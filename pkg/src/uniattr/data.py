"""Synthetic labelled datasets with optional common corruptions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

DATASET_KINDS = ("blobs2d", "stripes-vs-checker")
CORRUPTIONS = ("none", "brighten", "blur", "noise")
DEFAULT_STRENGTH = {"brighten": 0.3, "blur": 1.5, "noise": 0.15}


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray
    kind: str
    num_classes: int

    def __len__(self):
        return len(self.y)

    def mean_input(self) -> np.ndarray:
        return self.x.mean(axis=0)


def _balanced_labels(n, k, rng):
    return rng.permutation(np.arange(n) % k)


def _blobs(n, num_classes, rng):
    y = _balanced_labels(n, num_classes, rng)
    if num_classes == 2:
        centers = np.array([[0.3, 0.3], [0.7, 0.7]])
    else:
        ang = 2 * np.pi * np.arange(num_classes) / num_classes
        centers = 0.5 + 0.3 * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    x = centers[y] + 0.07 * rng.standard_normal((n, 2))
    return np.clip(x, 0.0, 1.0), y


def _texture(label, side, rng):
    width = int(rng.integers(1, 3))
    phase = int(rng.integers(0, 2 * width))
    r, c = np.indices((side, side))
    if label == 0:
        coord = r if rng.random() < 0.5 else c
        mask = ((coord + phase) // width) % 2
    else:
        mask = (((r + phase) // width) + ((c + phase) // width)) % 2
    if label == 0:
        # stripes are drawn in a darker tone, so intensity carries class evidence
        lo, hi = rng.uniform(0.0, 0.1), rng.uniform(0.35, 0.6)
    else:
        lo, hi = rng.uniform(0.0, 0.25), rng.uniform(0.6, 1.0)
    img = lo + (hi - lo) * mask
    return img + 0.05 * rng.standard_normal((side, side))


def _stripes_checker(n, side, rng):
    y = _balanced_labels(n, 2, rng)
    x = np.stack([_texture(int(lab), side, rng) for lab in y])
    return np.clip(x, 0.0, 1.0), y


def corrupt(x: np.ndarray, corruption: str, strength: float | None = None, seed: int = 0) -> np.ndarray:
    """Apply one corruption family to a batch of images (N, H, W)."""
    if corruption not in CORRUPTIONS:
        raise ValueError(f"unknown corruption {corruption!r}; expected one of {CORRUPTIONS}")
    if corruption == "none":
        return x
    s = DEFAULT_STRENGTH[corruption] if strength is None else strength
    if corruption == "brighten":
        return np.clip(x + s, 0.0, 1.0)
    if x.ndim != 3:
        raise ValueError(f"{corruption} corruption needs image batches (N, H, W), got {x.shape}")
    if corruption == "blur":
        return np.stack([gaussian_filter(img, s, mode="nearest") for img in x])
    rng = np.random.default_rng(seed)
    return np.clip(x + s * rng.standard_normal(x.shape), 0.0, 1.0)


def gen_dataset(kind: str, n: int, side: int = 16, seed: int = 0, corruption: str = "none",
                strength: float | None = None, num_classes: int = 2) -> Dataset:
    if kind not in DATASET_KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")
    if n < 2:
        raise ValueError("dataset needs at least 2 samples")
    rng = np.random.default_rng(seed)
    if kind == "blobs2d":
        x, y = _blobs(n, num_classes, rng)
    else:
        if num_classes != 2:
            raise ValueError("stripes-vs-checker has exactly 2 classes")
        x, y = _stripes_checker(n, side, rng)
    x = corrupt(x, corruption, strength, seed=seed + 1)
    return Dataset(x, y.astype(int), kind, num_classes)
