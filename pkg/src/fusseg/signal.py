"""Per-compartment CBV time series from a stack and a mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import FusStack
from .metrics import pearson


@dataclass(frozen=True)
class Roi:
    r0: int
    r1: int
    c0: int
    c1: int

    def __post_init__(self):
        if not (0 <= self.r0 < self.r1 and 0 <= self.c0 < self.c1):
            raise ValueError(f"empty or negative ROI {self}")

    @classmethod
    def parse(cls, text: str) -> "Roi":
        """Parse ``"r0:r1,c0:c1"``."""
        try:
            rows, cols = text.split(",")
            r0, r1 = (int(v) for v in rows.split(":"))
            c0, c1 = (int(v) for v in cols.split(":"))
        except ValueError as exc:
            raise ValueError(f"ROI must look like r0:r1,c0:c1, got {text!r}") from exc
        return cls(r0, r1, c0, c1)

    @classmethod
    def full(cls, shape) -> "Roi":
        return cls(0, shape[0], 0, shape[1])

    def mask(self, shape) -> np.ndarray:
        H, W = shape
        if self.r1 > H or self.c1 > W:
            raise ValueError(f"ROI {self} exceeds image {shape}")
        m = np.zeros(shape, dtype=bool)
        m[self.r0:self.r1, self.c0:self.c1] = True
        return m


@dataclass
class TimeSeries:
    values: np.ndarray
    frame_period_s: float = 0.4
    label: str = ""

    def __len__(self):
        return len(self.values)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.values)) * self.frame_period_s


def extract_signal(stack, mask, roi: Roi | None = None, label: str = "") -> TimeSeries:
    frames = stack.frames if isinstance(stack, FusStack) else np.asarray(stack)
    period = stack.frame_period_s if isinstance(stack, FusStack) else 0.4
    sel = np.asarray(mask, dtype=bool)
    if sel.shape != frames.shape[1:]:
        raise ValueError(f"mask shape {sel.shape} does not match frames {frames.shape[1:]}")
    if roi is not None:
        sel = sel & roi.mask(sel.shape)
    if not sel.any():
        raise ValueError("mask and ROI select no pixels")
    values = frames[:, sel].astype(np.float64).mean(axis=1)
    return TimeSeries(values, period, label)


def percent_change(series: TimeSeries, baseline_frames: int) -> TimeSeries:
    if baseline_frames < 1:
        raise ValueError("baseline_frames must be >= 1")
    m = float(np.mean(series.values[:baseline_frames]))
    if m == 0:
        raise ValueError("baseline mean is zero")
    return TimeSeries(100.0 * (series.values - m) / m, series.frame_period_s, series.label)


def compare_signals(pred_series, truth_series) -> float:
    a = pred_series.values if isinstance(pred_series, TimeSeries) else pred_series
    b = truth_series.values if isinstance(truth_series, TimeSeries) else truth_series
    if len(a) != len(b):
        raise ValueError("series differ in length")
    return pearson(a, b)
