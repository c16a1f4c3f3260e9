"""Deterministic writers: JSON, CSV, 8-bit PGM and SVG line plots.

Floats are always printed with 17 significant digits so that identical
inputs give byte-identical files.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np


def fmt_float(v: float) -> str:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"cannot serialise non-finite float {v}")
    s = format(v, ".17g")
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if obj is True:
        return "true"
    if obj is False:
        return "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, 0)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, 0) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj))
    return path


def write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, (float, np.floating)):
                cells.append(fmt_float(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_pgm(path, image, signed: bool = False) -> Path:
    """8-bit binary PGM. Unsigned images are clamped to [0, 1]; signed maps
    are scaled symmetrically so that zero lands on mid-grey."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 1:
        img = img[None, :]
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {img.shape}")
    if signed:
        m = float(np.abs(img).max())
        img = 0.5 + (0.5 * img / m if m > 0 else 0.0 * img)
    pix = np.round(np.clip(img, 0.0, 1.0) * 255).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    h, w = pix.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + pix.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


# --------------------------------------------------------------------------
# exports


def export_map_csv(path, amap) -> Path:
    scores = np.asarray(amap.scores).ravel()
    return write_csv(path, ["index", "score"], ((i, float(s)) for i, s in enumerate(scores)))


def export_trace_csv(path, trace) -> Path:
    return write_csv(path, ["alpha", "confidence"], zip(map(float, trace.alphas), map(float, trace.confidences)))


def export_baseline_csv(path, result) -> Path:
    flat = np.asarray(result.baseline).ravel()
    return write_csv(path, ["index", "value"], ((i, float(v)) for i, v in enumerate(flat)))


def export_baseline_trace(path, result) -> Path:
    return write_json(path, {
        "kind": result.kind,
        "unlearned_theta_hash": result.unlearned_theta_hash,
        "eta_used": result.eta_used,
        "initial_cost": result.initial_cost,
        "final_cost": result.final_cost,
        "trace": result.trace,
    })


# --------------------------------------------------------------------------
# SVG

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def render_line_plot(series: Mapping[str, tuple[Sequence[float], Sequence[float]]], path, title: str = "",
                     xlabel: str = "", ylabel: str = "", width: int = 640, height: int = 400) -> Path:
    """Self-contained SVG with axes, a legend and one polyline per series."""
    if not series:
        raise ValueError("render_line_plot needs at least one series")
    xs = np.concatenate([np.asarray(s[0], float) for s in series.values()])
    ys = np.concatenate([np.asarray(s[1], float) for s in series.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 == y0:
        y0, y1 = y0 - 0.5, y1 + 0.5
    left, right, top, bottom = 60, 20, 30, 50
    pw, ph = width - left - right, height - top - bottom

    def sx(v):
        return left + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return top + ph - (v - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{sx(fx):.2f}" y="{top + ph + 16}" font-size="11" text-anchor="middle">{fx:.3g}</text>')
        out.append(f'<text x="{left - 6}" y="{sy(fy) + 4:.2f}" font-size="11" text-anchor="end">{fy:.3g}</text>')
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="18" font-size="14" text-anchor="middle">{_esc(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" font-size="12" text-anchor="middle">{_esc(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="14" y="{top + ph / 2:.1f}" font-size="12" text-anchor="middle" '
                   f'transform="rotate(-90 14 {top + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for i, (name, (sxs, sys_)) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{sx(float(a)):.2f},{sy(float(b)):.2f}" for a, b in zip(sxs, sys_))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 16 * i
        out.append(f'<line x1="{left + pw - 120}" y1="{ly}" x2="{left + pw - 100}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 95}" y="{ly + 4}" font-size="11">{_esc(name)}</text>')
    out.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(out) + "\n")
    return path


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
