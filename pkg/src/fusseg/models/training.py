"""Frame-window sampling, augmentation, training loop and inference."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from ..io import AugmentSpec, FusStack, RunConfig, SoftSegmentation, TernaryLabelMap
from ..losses import default_weights, get_loss, one_hot
from .nets import ArchConfig, SegmentationNet, build_model

log = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class FrameWindow:
    n: int
    N: int
    i: int

    def __post_init__(self):
        if not 1 <= self.n <= self.N:
            raise ValueError(f"need 1 <= n <= N, got n={self.n}, N={self.N}")
        if not 0 <= self.i <= self.N - self.n:
            raise ValueError(f"start index {self.i} out of range")

    @property
    def slice(self) -> slice:
        return slice(self.i, self.i + self.n)


def sample_frame_window(N: int, n: int, rng: np.random.Generator) -> FrameWindow:
    if n < 1 or n > N:
        raise ValueError(f"cannot take {n} frames from a stack of {N}")
    i = 0 if n == N else int(rng.integers(0, N - n + 1))
    return FrameWindow(n, N, i)


def apply_transform(frames: np.ndarray, labels: np.ndarray, hflip=False, vflip=False, angle=0.0):
    """Apply one geometric transform to every frame and to the labels.

    Frames are resampled bilinearly and labels by nearest neighbour; regions
    rotated in from outside the image become 0 (background).
    """
    f, lab = frames, labels
    if hflip:
        f, lab = f[..., ::-1], lab[:, ::-1]
    if vflip:
        f, lab = f[..., ::-1, :], lab[::-1, :]
    a = float(angle) % 360.0
    if a != 0.0:
        quarter = a / 90.0
        if quarter == int(quarter) and (int(quarter) % 2 == 0 or lab.shape[0] == lab.shape[1]):
            k = int(quarter)
            f, lab = np.rot90(f, k, axes=(-2, -1)), np.rot90(lab, k)
        else:
            f = ndimage.rotate(f, angle, axes=(-1, -2), reshape=False, order=1, mode="constant", cval=0.0)
            lab = ndimage.rotate(lab, angle, axes=(1, 0), reshape=False, order=0, mode="constant", cval=0)
    return np.ascontiguousarray(f), np.ascontiguousarray(lab)


def augment(frames: np.ndarray, labels, spec: AugmentSpec, rng: np.random.Generator):
    lab = labels.labels if isinstance(labels, TernaryLabelMap) else np.asarray(labels)
    if frames.shape[-2:] != lab.shape:
        raise ValueError("frames and labels differ in spatial shape")
    if not spec.enabled:
        return frames, lab
    hflip = rng.random() < spec.p_hflip
    vflip = rng.random() < spec.p_vflip
    angle = rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg) if spec.max_rotation_deg > 0 else 0.0
    return apply_transform(frames, lab, hflip, vflip, angle)


def _as_pairs(dataset):
    pairs = []
    for item in dataset:
        if hasattr(item, "stack") and hasattr(item, "labels"):
            pairs.append((item.stack, item.labels))
        else:
            stack, labels = item
            pairs.append((stack, labels if isinstance(labels, TernaryLabelMap) else TernaryLabelMap(labels)))
    return pairs


def model_input(stack, cfg: RunConfig, window: FrameWindow | None = None) -> np.ndarray:
    frames = stack.frames if isinstance(stack, FusStack) else np.asarray(stack)
    if cfg.average_frames:
        return frames.mean(axis=0, keepdims=True, dtype=np.float64).astype(np.float32)
    if window is None:
        if len(frames) < cfg.frames:
            raise ValueError(f"stack has {len(frames)} frames, model needs {cfg.frames}")
        window = FrameWindow(cfg.frames, len(frames), 0)
    return frames[window.slice]


@dataclass
class FusSegModel:
    """A trained network with the configuration that produced it."""

    net: SegmentationNet
    arch: ArchConfig
    run: RunConfig
    loss_curve: list[float] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return self.arch.in_channels

    @torch.no_grad()
    def predict_proba(self, stack) -> np.ndarray:
        self.net.eval()
        x = torch.from_numpy(np.ascontiguousarray(model_input(stack, self.run)))[None]
        return self.net(x.float())[0].double().numpy()

    def predict(self, stack) -> tuple[SoftSegmentation, TernaryLabelMap]:
        seg = SoftSegmentation(self.predict_proba(stack))
        return seg, seg.hard()

    def save(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = {"format_version": FORMAT_VERSION, "arch": self.arch.to_dict(),
                    "run_config": self.run.to_dict(), "weights": "weights.pt",
                    "loss_curve": self.loss_curve}
        (d / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        torch.save(self.net.state_dict(), d / "weights.pt")

    @classmethod
    def load(cls, directory) -> "FusSegModel":
        d = Path(directory)
        manifest = json.loads((d / "model.json").read_text())
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {manifest.get('format_version')}")
        arch = ArchConfig(**manifest["arch"])
        net = build_model(arch)
        net.load_state_dict(torch.load(d / manifest["weights"], weights_only=True))
        net.eval()
        return cls(net, arch, RunConfig.from_dict(manifest["run_config"]), manifest.get("loss_curve", []))


def predict(model: FusSegModel, stack, n: int | None = None):
    """Soft and hard segmentation of ``stack`` from its first ``n`` frames."""
    if n is not None and n != model.n_frames and not model.run.average_frames:
        raise ValueError(f"model expects {model.n_frames} frames, got n={n}")
    return model.predict(stack)


def arch_for(cfg: RunConfig) -> ArchConfig:
    return ArchConfig(cfg.architecture, 1 if cfg.average_frames else cfg.frames, cfg.base_width, cfg.depth)


def train(dataset, cfg: RunConfig, device: str = "cpu", progress=None) -> FusSegModel:
    """Fit a fresh network with Adam; returns the model with its per-epoch loss curve.

    Every epoch visits the samples in a seeded random order; each visit draws
    a new frame window and augmentation from a stream keyed by
    (seed, epoch, sample index), so results do not depend on batching order.
    """
    pairs = _as_pairs(dataset)
    if not pairs:
        raise ValueError("empty training set")
    shapes = {tuple(s.frames.shape[1:]) for s, _ in pairs}
    if len(shapes) != 1:
        raise ValueError(f"stacks differ in spatial shape: {sorted(shapes)}")
    for s, lab in pairs:
        if lab.shape != s.frames.shape[1:]:
            raise ValueError("label map does not match stack shape")
    shortest = min(len(s) for s, _ in pairs)
    if not cfg.average_frames and cfg.frames > shortest:
        raise ValueError(f"n={cfg.frames} exceeds the shortest stack ({shortest} frames)")

    if cfg.deterministic:
        torch.use_deterministic_algorithms(True)
    torch.manual_seed(cfg.seed)
    arch = arch_for(cfg)
    net = build_model(arch).to(device)
    opt = torch.optim.Adam(net.parameters(), lr=cfg.lr)
    weights = default_weights(cfg.loss, cfg.alpha, cfg.beta, cfg.gamma)
    loss_fn = get_loss(cfg.loss, weights, include_background=not cfg.exclude_background_box)

    sources = [s.frames.mean(axis=0, keepdims=True) if cfg.average_frames else s.frames for s, _ in pairs]
    curve = []
    for epoch in range(cfg.epochs):
        net.train()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(pairs))
        total, seen = 0.0, 0
        for b0 in range(0, len(order), cfg.batch_size):
            xs, ys = [], []
            for idx in order[b0:b0 + cfg.batch_size]:
                rng = np.random.default_rng([cfg.seed, epoch, int(idx)])
                frames = sources[idx]
                win = sample_frame_window(len(frames), arch.in_channels, rng)
                f, lab = augment(frames[win.slice], pairs[idx][1], cfg.augment, rng)
                xs.append(f)
                ys.append(lab)
            x = torch.from_numpy(np.stack(xs)).float().to(device)
            y = one_hot(torch.from_numpy(np.stack(ys).astype(np.int64))).to(device)
            loss = loss_fn(net(x), y)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(xs)
            seen += len(xs)
        curve.append(total / seen)
        if progress is not None:
            progress(epoch, curve[-1])
        log.debug("epoch %d loss %.5f", epoch, curve[-1])
    net.eval()
    return FusSegModel(net, arch, cfg, curve)
