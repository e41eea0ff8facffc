"""Mask overlays on fUS frames and per-class error maps."""
from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .. import DOWNWARD, UPWARD
from ..io import FusStack, TernaryLabelMap

COLOR_FLOOR = 0.2


def _log_normalized(frame: np.ndarray) -> np.ndarray:
    v = np.log10(frame.astype(np.float64) + 1e-6)
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def overlay_rgb(stack, labels, k: int = 0) -> np.ndarray:
    """uint8 [H, W, 3]: log-scaled grey background, downward red, upward blue.

    Coloured pixels map the normalized log intensity onto [COLOR_FLOOR, 1] so
    that a mask pixel stays visibly coloured even on the darkest background.
    """
    frames = stack.frames if isinstance(stack, FusStack) else np.asarray(stack)
    if not 0 <= k < len(frames):
        raise ValueError(f"frame index {k} outside [0, {len(frames)})")
    lab = labels.labels if isinstance(labels, TernaryLabelMap) else np.asarray(labels)
    if lab.shape != frames.shape[1:]:
        raise ValueError("labels do not match the frame shape")
    g = _log_normalized(frames[k])
    rgb = np.repeat(g[..., None], 3, axis=2)
    down, up = lab == DOWNWARD, lab == UPWARD
    c = COLOR_FLOOR + (1.0 - COLOR_FLOOR) * g
    rgb[down] = 0.0
    rgb[down, 0] = c[down]
    rgb[up] = 0.0
    rgb[up, 2] = c[up]
    return np.round(rgb * 255).astype(np.uint8)


def png_bytes(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb).save(buf, format="PNG", optimize=False)
    return buf.getvalue()


def render_overlay(stack, labels, k: int = 0, path=None) -> np.ndarray:
    rgb = overlay_rgb(stack, labels, k)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(png_bytes(rgb))
    return rgb


def render_error_maps(pred, truth, cls: int) -> tuple[np.ndarray, np.ndarray]:
    """(false positives, false negatives) of class ``cls`` as boolean images."""
    p = pred.labels if isinstance(pred, TernaryLabelMap) else np.asarray(pred)
    t = truth.labels if isinstance(truth, TernaryLabelMap) else np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    fp = (p == cls) & (t != cls)
    fn = (p != cls) & (t == cls)
    return fp, fn
