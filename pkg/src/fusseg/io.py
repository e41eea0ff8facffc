"""Data types and on-disk formats.

Tensors are stored in a minimal container: one line of JSON
(``{"dtype":"f32le","shape":[...],"meta":{...}}``), a newline, then the raw
little-endian float32 payload in row-major order. Ternary label maps are
binary PGM (P5) files with maxval 2.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from . import BACKGROUND, DOWNWARD, UPWARD

_F32LE = np.dtype("<f4")


class FormatError(ValueError):
    """Raised when a file does not follow the expected layout."""


# ---------------------------------------------------------------------------
# domain types


@dataclass
class FusStack:
    frames: np.ndarray  # [T, H, W]
    frame_period_s: float = 0.4
    pixel_size_um: float = 100.0
    condition: str = "rest"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3:
            raise ValueError(f"frames must be [T, H, W], got shape {self.frames.shape}")
        T, H, W = self.frames.shape
        if T < 1 or H < 8 or W < 8:
            raise ValueError(f"stack too small: {self.frames.shape}")
        if not np.all(np.isfinite(self.frames)) or np.any(self.frames < 0):
            raise ValueError("frames must be finite and non-negative")
        if self.condition not in ("rest", "stimulation"):
            raise ValueError(f"unknown condition {self.condition!r}")

    @property
    def shape(self):
        return self.frames.shape

    def __len__(self):
        return self.frames.shape[0]


@dataclass
class UlmVelocityMap:
    values: np.ndarray  # [H_hi, W_hi], signed; positive = downward
    pixel_size_um: float = 10.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("velocity map must be 2-D")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("velocity map contains non-finite values")


@dataclass
class DirectionMasks:
    downward: np.ndarray
    upward: np.ndarray
    tau: float = 0.05

    def __post_init__(self):
        self.downward = np.asarray(self.downward).astype(np.uint8)
        self.upward = np.asarray(self.upward).astype(np.uint8)
        if self.downward.shape != self.upward.shape:
            raise ValueError("downward and upward masks differ in shape")

    @property
    def mixed(self) -> np.ndarray:
        return (self.downward > 0) & (self.upward > 0)

    @property
    def mixed_fraction(self) -> float:
        return float(self.mixed.mean())


@dataclass
class TernaryLabelMap:
    labels: np.ndarray  # [H, W] in {0=b, 1=d, 2=u}

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValueError("label map must be 2-D")
        if labels.size and (labels.min() < 0 or labels.max() > 2):
            raise ValueError("labels must lie in {0, 1, 2}")
        self.labels = labels.astype(np.uint8)

    @property
    def shape(self):
        return self.labels.shape

    def one_hot(self) -> np.ndarray:
        """[3, H, W] float array, exactly one 1 per pixel."""
        return np.stack([(self.labels == c) for c in (BACKGROUND, DOWNWARD, UPWARD)]).astype(np.float64)

    def mask(self, cls: int) -> np.ndarray:
        return self.labels == cls


@dataclass
class SoftSegmentation:
    probs: np.ndarray  # [3, H, W]

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3 or self.probs.shape[0] != 3:
            raise ValueError(f"probs must be [3, H, W], got {self.probs.shape}")
        if np.any(self.probs < -1e-7) or np.any(self.probs > 1 + 1e-7):
            raise ValueError("probabilities outside [0, 1]")
        if np.max(np.abs(self.probs.sum(axis=0) - 1.0)) > 1e-5:
            raise ValueError("probabilities do not sum to 1 per pixel")

    def hard(self) -> TernaryLabelMap:
        # argmax picks the first maximum, giving tie order b < d < u
        return TernaryLabelMap(np.argmax(self.probs, axis=0))


@dataclass
class AugmentSpec:
    enabled: bool = True
    p_hflip: float = 0.5
    p_vflip: float = 0.5
    max_rotation_deg: float = 15.0

    def __post_init__(self):
        for p in (self.p_hflip, self.p_vflip):
            if not 0.0 <= p <= 1.0:
                raise ValueError("flip probabilities must lie in [0, 1]")
        if self.max_rotation_deg < 0:
            raise ValueError("max_rotation_deg must be >= 0")


@dataclass
class FoldSpec:
    K: int = 7
    train_count: int | None = None  # None: every sample not in the test split
    test_count: int | None = None  # None: len(dataset) // K
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("need at least two folds")


LOSS_IDS = ("dice_ce", "cf_b", "cf_v", "cf")
ARCH_IDS = ("unet", "attention_unet", "unetpp", "resunet", "multires_unet")


@dataclass
class RunConfig:
    """Everything needed to reproduce one training run."""

    architecture: str = "attention_unet"
    loss: str = "cf"
    alpha: float | None = None  # None: per-loss default
    beta: float | None = None
    gamma: float | None = None
    frames: int = 100
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 4
    seed: int = 0
    base_width: int = 32
    depth: int = 4
    augment: AugmentSpec = field(default_factory=AugmentSpec)
    folds: FoldSpec = field(default_factory=FoldSpec)
    average_frames: bool = False  # collapse each stack to its temporal mean (n = 1 path)
    exclude_background_box: bool = False
    deterministic: bool = True

    def __post_init__(self):
        if isinstance(self.augment, dict):
            self.augment = AugmentSpec(**self.augment)
        if isinstance(self.folds, dict):
            self.folds = FoldSpec(**self.folds)
        if self.architecture not in ARCH_IDS:
            raise ValueError(f"unknown architecture {self.architecture!r}")
        if self.loss not in LOSS_IDS:
            raise ValueError(f"unknown loss {self.loss!r}")
        for name in ("alpha", "beta", "gamma"):
            w = getattr(self, name)
            if w is not None and not 0.0 <= w <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.frames < 1:
            raise ValueError("frames must be >= 1")
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ValueError("lr must be finite and non-negative")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown RunConfig keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update(kw)
        return RunConfig.from_dict(d)


# ---------------------------------------------------------------------------
# tensor container


def write_tensor(path, data, meta: dict[str, Any] | None = None) -> None:
    arr = np.asarray(data, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("refusing to write non-finite values")
    header = {"dtype": "f32le", "shape": list(arr.shape), "meta": meta or {}}
    line = json.dumps(header, separators=(",", ":"), sort_keys=False)
    with open(path, "wb") as fh:
        fh.write(line.encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(arr, dtype=_F32LE).tobytes(order="C"))


def read_tensor(path) -> tuple[np.ndarray, dict]:
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: malformed header") from exc
    if not isinstance(header, dict) or header.get("dtype") != "f32le":
        raise FormatError(f"{path}: unsupported dtype {header.get('dtype') if isinstance(header, dict) else header!r}")
    shape = header.get("shape")
    if not isinstance(shape, list) or not all(isinstance(s, int) and s >= 0 for s in shape):
        raise FormatError(f"{path}: bad shape {shape!r}")
    payload = blob[nl + 1:]
    expected = int(np.prod(shape, dtype=np.int64)) * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload has {len(payload)} bytes, expected {expected}")
    arr = np.frombuffer(payload, dtype=_F32LE).reshape(shape).astype(np.float32)
    return arr, header.get("meta", {})


# ---------------------------------------------------------------------------
# PGM label maps


def write_pgm(path, image: np.ndarray, maxval: int) -> None:
    img = np.asarray(image)
    if img.ndim != 2:
        raise ValueError("PGM images are 2-D")
    if img.size and (img.min() < 0 or img.max() > maxval):
        raise ValueError(f"pixel values outside [0, {maxval}]")
    H, W = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{W} {H}\n{maxval}\n".encode("ascii"))
        fh.write(img.astype(np.uint8).tobytes(order="C"))


def read_pgm(path) -> tuple[np.ndarray, int]:
    blob = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        # skip whitespace and comments
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos:pos + 1] == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(blob[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (P5)")
    try:
        W, H, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise FormatError(f"{path}: bad PGM header") from exc
    if not 0 < maxval < 256:
        raise FormatError(f"{path}: only 8-bit PGM supported")
    pos += 1  # single whitespace after maxval
    data = blob[pos:pos + W * H]
    if len(data) != W * H:
        raise FormatError(f"{path}: PGM payload truncated")
    img = np.frombuffer(data, dtype=np.uint8).reshape(H, W).copy()
    return img, maxval


def write_label_map(path, labels: TernaryLabelMap) -> None:
    if not isinstance(labels, TernaryLabelMap):
        labels = TernaryLabelMap(labels)
    write_pgm(path, labels.labels, maxval=2)


def read_label_map(path) -> TernaryLabelMap:
    img, _ = read_pgm(path)
    if img.size and img.max() > 2:
        raise FormatError(f"{path}: label value {int(img.max())} outside {{0, 1, 2}}")
    return TernaryLabelMap(img)


def write_mask(path, mask: np.ndarray) -> None:
    write_pgm(path, (np.asarray(mask) > 0).astype(np.uint8), maxval=1)


def read_mask(path) -> np.ndarray:
    img, _ = read_pgm(path)
    return img > 0


# ---------------------------------------------------------------------------
# JSON / CSV helpers


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv_column(path, column: str | int = 0) -> np.ndarray:
    """Read one numeric column of a CSV file with a header row."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        idx = header.index(column) if isinstance(column, str) else column
        return np.array([float(row[idx]) for row in reader if row])
