"""Ternary ground truth from a high-resolution ULM Z-velocity map.

Pipeline: split the velocity map by sign, shrink each direction channel to
the fUS grid, binarize at a coverage threshold, then merge the two masks into
one label per pixel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import BACKGROUND, DOWNWARD, UPWARD
from .io import DirectionMasks, TernaryLabelMap, UlmVelocityMap


@dataclass
class AnnotationParams:
    tau: float = 0.05
    v_eps: float = 0.0
    target_shape: tuple[int, int] = (112, 128)
    tie_break: str = "larger_coverage"  # or "prefer_downward"
    resize: str = "area"  # "area" block mean, or "bilinear" point sampling
    threshold_on: str = "coverage"  # or "velocity": apply tau to |v| before resizing

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.v_eps < 0:
            raise ValueError("v_eps must be >= 0")
        if self.tie_break not in ("larger_coverage", "prefer_downward"):
            raise ValueError(f"unknown tie_break {self.tie_break!r}")
        if self.resize not in ("area", "bilinear"):
            raise ValueError(f"unknown resize mode {self.resize!r}")
        if self.threshold_on not in ("coverage", "velocity"):
            raise ValueError(f"unknown threshold_on {self.threshold_on!r}")
        self.target_shape = tuple(int(s) for s in self.target_shape)


def split_by_direction(V, v_eps: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    values = V.values if isinstance(V, UlmVelocityMap) else np.asarray(V, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("velocity map contains non-finite values")
    down = (values > v_eps).astype(np.uint8)
    up = (values < -v_eps).astype(np.uint8)
    return down, up


def downsample_coverage(channel: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Block-mean shrink of a binary channel to ``target``.

    The source is zero-padded at the bottom/right up to the next multiple of
    the target shape, so every output value is the covered fraction of one
    equally sized block.
    """
    ch = np.asarray(channel, dtype=np.float64)
    H, W = target
    Hs, Ws = ch.shape
    if H < 1 or W < 1 or H > Hs or W > Ws:
        raise ValueError(f"target {target} larger than source {ch.shape}")
    bh, bw = -(-Hs // H), -(-Ws // W)
    padded = np.zeros((H * bh, W * bw))
    padded[:Hs, :Ws] = ch
    return padded.reshape(H, bh, W, bw).mean(axis=(1, 3))


def bilinear_resize(channel: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Point-sampled bilinear resize (no anti-aliasing)."""
    ch = np.asarray(channel, dtype=np.float64)
    H, W = target
    Hs, Ws = ch.shape
    if H > Hs or W > Ws:
        raise ValueError(f"target {target} larger than source {ch.shape}")
    # pixel-centre alignment
    rows = (np.arange(H) + 0.5) * Hs / H - 0.5
    cols = (np.arange(W) + 0.5) * Ws / W - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return ndimage.map_coordinates(ch, [rr, cc], order=1, mode="nearest")


def binarize(coverage: np.ndarray, tau: float) -> np.ndarray:
    return (np.asarray(coverage) >= tau).astype(np.uint8)


def build_ternary(masks: DirectionMasks, coverages: tuple[np.ndarray, np.ndarray],
                  tie_break: str = "larger_coverage") -> TernaryLabelMap:
    down = masks.downward > 0
    up = masks.upward > 0
    cov_d, cov_u = (np.asarray(c, dtype=np.float64) for c in coverages)
    if not (down.shape == up.shape == cov_d.shape == cov_u.shape):
        raise ValueError("masks and coverages must share one shape")
    labels = np.full(down.shape, BACKGROUND, dtype=np.uint8)
    labels[down & ~up] = DOWNWARD
    labels[up & ~down] = UPWARD
    mixed = down & up
    if tie_break == "prefer_downward":
        labels[mixed] = DOWNWARD
    elif tie_break == "larger_coverage":
        labels[mixed & (cov_u > cov_d)] = UPWARD
        labels[mixed & (cov_u <= cov_d)] = DOWNWARD  # exact tie goes downward
    else:
        raise ValueError(f"unknown tie_break {tie_break!r}")
    return TernaryLabelMap(labels)


def annotate(V, params: AnnotationParams | None = None) -> tuple[DirectionMasks, TernaryLabelMap]:
    params = params or AnnotationParams()
    values = V.values if isinstance(V, UlmVelocityMap) else np.asarray(V, dtype=np.float64)
    if params.threshold_on == "velocity":
        # sensitivity variant: tau acts on |v|, resized maps then binarized at > 0
        down_hi, up_hi = split_by_direction(values, max(params.v_eps, params.tau))
    else:
        down_hi, up_hi = split_by_direction(values, params.v_eps)
    resize = downsample_coverage if params.resize == "area" else bilinear_resize
    cov_d = resize(down_hi, params.target_shape)
    cov_u = resize(up_hi, params.target_shape)
    if params.threshold_on == "velocity":
        down, up = (cov_d > 0).astype(np.uint8), (cov_u > 0).astype(np.uint8)
    else:
        down, up = binarize(cov_d, params.tau), binarize(cov_u, params.tau)
    masks = DirectionMasks(down, up, tau=params.tau)
    return masks, build_ternary(masks, (cov_d, cov_u), params.tie_break)
