"""Model zoo: small classifiers, the three-Gaussian mixture, losses and training.

Every model is a :class:`ModelParams`: an architecture id plus one flat,
read-only float64 parameter vector. Forward passes are built on an
:mod:`uniattr.autodiff` tape so the same code yields input gradients,
parameter gradients and plain values.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from . import autodiff as ad

ARCHITECTURES = ("mlp", "small-cnn", "gmm3", "linear")
_ARCH_BYTE = {"mlp": 1, "small-cnn": 2, "gmm3": 3, "linear": 4}
HIDDEN = 32
CONV_CHANNELS = (8, 16)
PROB_FLOOR = 1e-12


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModelParams:
    arch: str
    theta: np.ndarray
    input_shape: tuple[int, ...]
    num_classes: int
    sigma: float | None = None  # shared component width, gmm3 only
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.arch not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.arch!r}")
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        expected = param_count(self.arch, self.input_shape, self.num_classes)
        if theta.size != expected:
            raise ValueError(f"{self.arch}: theta has {theta.size} entries, expected {expected}")
        theta.flags.writeable = False
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        if self.arch == "gmm3" and (self.sigma is None or self.sigma <= 0):
            raise ValueError("gmm3 requires a positive sigma")

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.arch, self.input_shape, self.num_classes, self.sigma) == (
            other.arch, other.input_shape, other.num_classes, other.sigma
        ) and np.array_equal(self.theta, other.theta)

    def __hash__(self):
        return hash((self.arch, self.input_shape, self.num_classes, self.sigma, self.theta.tobytes()))

    def with_theta(self, theta) -> ModelParams:
        return ModelParams(self.arch, theta, self.input_shape, self.num_classes, self.sigma)

    def theta_hash(self) -> str:
        return hashlib.sha256(self.theta.tobytes()).hexdigest()[:16]


def param_layout(arch: str, input_shape, num_classes: int) -> list[tuple[str, tuple[int, ...]]]:
    d_in = int(np.prod(input_shape))
    if arch == "linear":
        return [("W", (d_in, num_classes)), ("b", (num_classes,))]
    if arch == "mlp":
        return [
            ("W1", (d_in, HIDDEN)), ("b1", (HIDDEN,)),
            ("W2", (HIDDEN, HIDDEN)), ("b2", (HIDDEN,)),
            ("W3", (HIDDEN, num_classes)), ("b3", (num_classes,)),
        ]
    if arch == "small-cnn":
        h, w = input_shape
        c1, c2 = CONV_CHANNELS
        return [
            ("K1", (c1, 1, 3, 3)), ("c1", (c1,)),
            ("K2", (c2, c1, 3, 3)), ("c2", (c2,)),
            ("W", (c2 * (h // 4) * (w // 4), num_classes)), ("b", (num_classes,)),
        ]
    if arch == "gmm3":
        if tuple(input_shape) != (2,) or num_classes != 3:
            raise ValueError("gmm3 takes 2-D points and has 3 components")
        return [("means", (3, 2)), ("log_scales", (3,))]
    raise ValueError(f"unknown architecture {arch!r}")


def param_count(arch, input_shape, num_classes) -> int:
    return sum(int(np.prod(s)) for _, s in param_layout(arch, input_shape, num_classes))


def unflatten(model: ModelParams, theta=None) -> list[np.ndarray]:
    theta = model.theta if theta is None else theta
    out, i = [], 0
    for _, shape in param_layout(model.arch, model.input_shape, model.num_classes):
        n = int(np.prod(shape))
        out.append(np.asarray(theta[i:i + n]).reshape(shape))
        i += n
    return out


def init_params(arch: str, input_shape, num_classes: int, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases."""
    if arch == "gmm3":
        raise ValueError("use Gmm3Params / fit_gmm for the mixture model")
    rng = np.random.default_rng(seed)
    parts = []
    for name, shape in param_layout(arch, input_shape, num_classes):
        if len(shape) == 1:
            parts.append(np.zeros(shape))
            continue
        if len(shape) == 4:
            rf = shape[2] * shape[3]
            fan_in, fan_out = shape[1] * rf, shape[0] * rf
        else:
            fan_in, fan_out = shape
        a = np.sqrt(6.0 / (fan_in + fan_out))
        parts.append(rng.uniform(-a, a, size=shape))
    theta = np.concatenate([p.ravel() for p in parts])
    return ModelParams(arch, theta, tuple(input_shape), num_classes)


# --------------------------------------------------------------------------
# graph builders


def _batch(model: ModelParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == model.input_shape:
        return x[None], True
    if x.shape[1:] == model.input_shape:
        return x, False
    raise ValueError(f"{model.arch}: input shape {x.shape} does not match {model.input_shape}")


def build_outputs(model: ModelParams, x: ad.Var, params: list[ad.Var]) -> ad.Var:
    """Raw head on a batch: logits for classifiers, component values G for gmm3."""
    n = x.shape[0]
    if model.arch == "linear":
        W, b = params
        return ad.reshape(x, (n, -1)) @ W + b
    if model.arch == "mlp":
        W1, b1, W2, b2, W3, b3 = params
        h = ad.relu(ad.reshape(x, (n, -1)) @ W1 + b1)
        h = ad.relu(h @ W2 + b2)
        return h @ W3 + b3
    if model.arch == "small-cnn":
        K1, c1, K2, c2, W, b = params
        h, w = model.input_shape
        a = ad.reshape(x, (n, 1, h, w))
        a = ad.meanpool2d(ad.relu(ad.conv2d(a, K1, c1)))
        a = ad.meanpool2d(ad.relu(ad.conv2d(a, K2, c2)))
        return ad.reshape(a, (n, -1)) @ W + b
    if model.arch == "gmm3":
        means, log_scales = params
        return ad.exp(log_scales) * ad.gaussian_rbf(x, means, model.sigma)
    raise ValueError(model.arch)


def _is_classifier(model: ModelParams) -> bool:
    return model.arch != "gmm3"


def build_score(model: ModelParams, x: ad.Var, params: list[ad.Var], c: int | None, mode: str) -> ad.Var:
    """Per-sample scalar target F_c on a batch, shape (N,).

    mode ``prob``: softmax probability (component value G_c for gmm3);
    ``logit``: pre-softmax logit; ``total``: sum of the raw head outputs
    (the mixture density for gmm3).
    """
    out = build_outputs(model, x, params)
    if mode == "total":
        return ad.sum_(out, axis=1)
    if c is None or not 0 <= c < model.num_classes:
        raise IndexError(f"class index {c} out of range for {model.num_classes} outputs")
    if mode == "logit" or not _is_classifier(model):
        return ad.take(out, c, axis=1)
    if mode == "prob":
        return ad.take(ad.softmax(out), c, axis=1)
    raise ValueError(f"unknown target mode {mode!r}")


def outputs(model: ModelParams, x) -> np.ndarray:
    xb, single = _batch(model, x)
    val = ad.forward(lambda xv, *ps: build_outputs(model, xv, list(ps)), [xb, *unflatten(model)])
    return val[0] if single else val


def _softmax(z: np.ndarray) -> np.ndarray:
    s = z - z.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def model_forward(model: ModelParams, x) -> np.ndarray:
    """Output distribution F(x). For gmm3, component responsibilities G / sum(G)."""
    out = outputs(model, x)
    if _is_classifier(model):
        return _softmax(out)
    return out / out.sum(axis=-1, keepdims=True)


def predict(model: ModelParams, x) -> np.ndarray | int:
    p = model_forward(model, x)
    return p.argmax(axis=-1) if p.ndim > 1 else int(p.argmax())


def score(model: ModelParams, x, c: int | None, mode: str = "prob") -> np.ndarray | float:
    xb, single = _batch(model, x)
    val = ad.forward(lambda xv, *ps: build_score(model, xv, list(ps), c, mode), [xb, *unflatten(model)])
    return float(val[0]) if single else val


def grad_inputs(model: ModelParams, x, c: int | None, mode: str = "prob") -> np.ndarray:
    """Gradient of F_c w.r.t. the input; batched inputs give per-sample gradients."""
    xb, single = _batch(model, x)
    if mode != "total" and not (c is not None and 0 <= c < model.num_classes):
        raise IndexError(f"class index {c} out of range for {model.num_classes} outputs")
    _, (g,) = ad.value_and_grad(
        lambda xv, *ps: build_score(model, xv, list(ps), c, mode), [xb, *unflatten(model)], wrt=(0,)
    )
    return g[0] if single else g


def score_and_grad(model: ModelParams, xb: np.ndarray, c, mode: str = "prob"):
    """Values and per-sample input gradients of F_c on a batch."""
    vals, (g,) = ad.value_and_grad(
        lambda xv, *ps: build_score(model, xv, list(ps), c, mode), [xb, *unflatten(model)], wrt=(0,)
    )
    return vals, g


# --------------------------------------------------------------------------
# losses and divergences


def cross_entropy(p, y: int) -> float:
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= y < p.shape[-1]:
        raise IndexError(f"label {y} out of range")
    return float(-np.log(max(p[y], PROB_FLOOR)))


def kl_divergence(p, q) -> float:
    """KL(p || q) with 0 log 0 = 0 and q floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    q = np.maximum(np.asarray(q, dtype=np.float64), PROB_FLOOR)
    nz = p > 0
    return float(max(np.sum(p[nz] * np.log(p[nz] / q[nz])), 0.0))


def generalized_kl(p, q) -> float:
    """KL for non-negative unnormalised vectors: sum p log(p/q) - p + q."""
    p = np.asarray(p, dtype=np.float64)
    q = np.maximum(np.asarray(q, dtype=np.float64), PROB_FLOOR)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / q[nz])) - p.sum() + q.sum())


def build_loss(model: ModelParams, x: ad.Var, params: list[ad.Var], y) -> ad.Var:
    """Mean training loss on a batch.

    Classifiers: cross-entropy against labels ``y``. gmm3: negative log of the
    mixture total at each point (``y`` ignored).
    """
    out = build_outputs(model, x, params)
    n = x.shape[0]
    if _is_classifier(model):
        y = np.atleast_1d(np.asarray(y, dtype=int))
        if y.shape[0] != n or np.any(y < 0) or np.any(y >= model.num_classes):
            raise IndexError(f"labels {y} invalid for {model.num_classes} classes")
        onehot = np.zeros((n, model.num_classes))
        onehot[np.arange(n), y] = 1.0
        return ad.sum_(ad.log_softmax(out) * (-onehot / n))
    return ad.sum_(ad.log(ad.sum_(out, axis=1))) * (-1.0 / n)


def loss_value(model: ModelParams, x, y) -> float:
    xb, _ = _batch(model, x)
    return float(ad.forward(lambda xv, *ps: build_loss(model, xv, list(ps), y), [xb, *unflatten(model)]))


def grad_params(model: ModelParams, x, y) -> np.ndarray:
    """Flat gradient of the mean loss w.r.t. theta."""
    xb, _ = _batch(model, x)
    parts = unflatten(model)
    _, grads = ad.value_and_grad(
        lambda xv, *ps: build_loss(model, xv, list(ps), y),
        [xb, *parts], wrt=tuple(range(1, len(parts) + 1)),
    )
    return np.concatenate([g.ravel() for g in grads])


def _loss_and_grad(model, xb, y):
    parts = unflatten(model)
    val, grads = ad.value_and_grad(
        lambda xv, *ps: build_loss(model, xv, list(ps), y),
        [xb, *parts], wrt=tuple(range(1, len(parts) + 1)),
    )
    return float(val), np.concatenate([g.ravel() for g in grads])


def accuracy(model: ModelParams, x, y) -> float:
    return float(np.mean(predict(model, x) == np.asarray(y)))


def train(arch: str, dataset, epochs: int, lr: float, seed: int, batch_size: int = 32) -> ModelParams:
    """Minibatch SGD on mean cross-entropy. Deterministic for a fixed seed."""
    x, y = np.asarray(dataset.x, dtype=np.float64), np.asarray(dataset.y, dtype=int)
    if len(x) == 0:
        raise ValueError("train: empty dataset")
    num_classes = int(getattr(dataset, "num_classes", y.max() + 1))
    if np.any(y >= num_classes) or np.any(y < 0):
        raise ValueError("train: labels out of range")
    model = init_params(arch, x.shape[1:], num_classes, seed)
    rng = np.random.default_rng(seed + 1)
    initial = loss_value(model, x, y)
    theta = model.theta.copy()
    losses = [initial]
    for epoch in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            try:
                loss, g = _loss_and_grad(model, x[idx], y[idx])
            except FloatingPointError as exc:
                raise TrainingDivergedError(f"loss diverged at epoch {epoch}; try a smaller learning rate") from exc
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss diverged at epoch {epoch}; try a smaller learning rate")
            theta = theta - lr * g
            if not np.all(np.isfinite(theta)):
                raise TrainingDivergedError(f"parameters diverged at epoch {epoch}; try a smaller learning rate")
            model = model.with_theta(theta)
        try:
            losses.append(loss_value(model, x, y))
        except FloatingPointError as exc:
            raise TrainingDivergedError(f"loss diverged at epoch {epoch}; try a smaller learning rate") from exc
    meta = {
        "arch": arch,
        "seed": seed,
        "epochs": epochs,
        "lr": lr,
        "batch_size": batch_size,
        "initial_loss": initial,
        "final_loss": losses[-1],
        "train_accuracy": accuracy(model, x, y),
    }
    return ModelParams(arch, model.theta, model.input_shape, num_classes, meta=meta)


# --------------------------------------------------------------------------
# three-Gaussian mixture


@dataclass(frozen=True)
class Gmm3Params:
    means: np.ndarray
    scales: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64).reshape(3, 2)
        scales = np.array(self.scales, dtype=np.float64).reshape(3)
        if np.any(scales <= 0):
            raise ValueError("gmm scales must be positive")
        if self.sigma <= 0:
            raise ValueError("gmm sigma must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "scales", scales)

    def to_model(self) -> ModelParams:
        theta = np.concatenate([self.means.ravel(), np.log(self.scales)])
        return ModelParams("gmm3", theta, (2,), 3, sigma=float(self.sigma))

    @classmethod
    def from_model(cls, model: ModelParams) -> Gmm3Params:
        means, log_scales = unflatten(model)
        return cls(means, np.exp(log_scales), model.sigma)


def gmm_forward(params: Gmm3Params, point) -> tuple[np.ndarray, float]:
    d2 = ((np.asarray(point, dtype=np.float64)[None, :] - params.means) ** 2).sum(axis=1)
    comps = params.scales * np.exp(-d2 / (2.0 * params.sigma**2))
    return comps, float(comps.sum())


def _gmm_fit_loss(model: ModelParams, pts: ad.Var, params, target: float, loss: str) -> ad.Var:
    total = ad.sum_(build_outputs(model, pts, params), axis=1)
    if loss == "squared":
        r = total - target
        return ad.sum_(r * r)
    if loss == "nll":
        return ad.sum_(ad.log(total)) * -1.0
    raise ValueError(f"unknown gmm fit loss {loss!r}")


def fit_gmm(points, sigma: float = 1.0, target: float = 1.0, loss: str = "squared",
            lr: float = 0.05, steps: int = 3000, init_scale: float = 0.5, jitter: float = 0.1,
            seed: int = 0) -> Gmm3Params:
    """Full-batch gradient descent of the mixture total towards ``target`` at each point.

    Means start at the points plus seeded jitter, so each component claims one point.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(3, 2)
    rng = np.random.default_rng(seed)
    start = Gmm3Params(pts + jitter * rng.standard_normal((3, 2)), np.full(3, init_scale), sigma)
    model = start.to_model()
    theta = model.theta.copy()
    for step in range(steps):
        parts = unflatten(model)
        try:
            val, grads = ad.value_and_grad(
                lambda pv, *ps: _gmm_fit_loss(model, pv, list(ps), target, loss),
                [pts, *parts], wrt=(1, 2),
            )
        except FloatingPointError as exc:
            raise TrainingDivergedError(f"gmm fit diverged at step {step}; try a smaller learning rate") from exc
        if not np.isfinite(val):
            raise TrainingDivergedError(f"gmm fit diverged at step {step}; try a smaller learning rate")
        theta = theta - lr * np.concatenate([g.ravel() for g in grads])
        if not np.all(np.isfinite(theta)):
            raise TrainingDivergedError(f"gmm fit diverged at step {step}; try a smaller learning rate")
        model = model.with_theta(theta)
    try:
        return Gmm3Params.from_model(model)
    except ValueError as exc:
        raise TrainingDivergedError(f"gmm fit collapsed a component: {exc}") from exc


# --------------------------------------------------------------------------
# serialization


def save_model(model: ModelParams, path) -> Path:
    """Write ``path`` (binary) and ``path.json`` (metadata sidecar)."""
    path = Path(path)
    header = struct.pack("<BI", _ARCH_BYTE[model.arch], len(model.input_shape))
    header += struct.pack(f"<{len(model.input_shape)}I", *model.input_shape)
    header += struct.pack("<IId", model.num_classes, model.theta.size, model.sigma or 0.0)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + model.theta.astype("<f8").tobytes())
    from .io import dumps_json

    sidecar = {"arch": model.arch, "theta_sha256": model.theta_hash(), **model.meta}
    Path(str(path) + ".json").write_text(dumps_json(sidecar))
    return path


def load_model(path) -> ModelParams:
    path = Path(path)
    raw = path.read_bytes()
    arch_byte, ndim = struct.unpack_from("<BI", raw, 0)
    off = 5
    shape = struct.unpack_from(f"<{ndim}I", raw, off)
    off += 4 * ndim
    num_classes, n, sigma = struct.unpack_from("<IId", raw, off)
    off += 16
    theta = np.frombuffer(raw, dtype="<f8", count=n, offset=off).astype(np.float64)
    arch = {v: k for k, v in _ARCH_BYTE.items()}[arch_byte]
    meta = {}
    sidecar = Path(str(path) + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return ModelParams(arch, theta, shape, num_classes, sigma if arch == "gmm3" else None, meta=meta)

