"""Training objectives on soft segmentations.

Every loss takes ``S`` (probabilities) and ``T`` (one-hot ground truth) as
tensors shaped ``[3, H, W]`` or ``[B, 3, H, W]`` with class order
(background, downward, upward), and returns the batch mean. Everything is
built from differentiable torch primitives so autograd supplies gradients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import BACKGROUND, DOWNWARD, UPWARD

PROB_FLOOR = 1e-7
DICE_EPS = 1e-6
BOX_DELTA = 1e-6


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")


DEFAULT_WEIGHTS = {
    "dice_ce": LossWeights(alpha=0.5, beta=0.5, gamma=0.0),
    "cf_b": LossWeights(alpha=1.0, beta=0.0, gamma=1.0),
    "cf_v": LossWeights(alpha=1.0, beta=1.0, gamma=0.0),
    "cf": LossWeights(alpha=1.0, beta=1.0, gamma=0.5),
}


def default_weights(loss_id: str, alpha=None, beta=None, gamma=None) -> LossWeights:
    if loss_id not in DEFAULT_WEIGHTS:
        raise ValueError(f"unknown loss {loss_id!r}")
    d = DEFAULT_WEIGHTS[loss_id]
    return LossWeights(d.alpha if alpha is None else alpha,
                       d.beta if beta is None else beta,
                       d.gamma if gamma is None else gamma)


def _as_batch(S, T):
    S = torch.as_tensor(S)
    T = torch.as_tensor(T, dtype=S.dtype) if not torch.is_tensor(T) else T.to(S.dtype)
    if S.shape != T.shape:
        raise ValueError(f"shape mismatch: S {tuple(S.shape)} vs T {tuple(T.shape)}")
    if S.dim() == 3:
        S, T = S.unsqueeze(0), T.unsqueeze(0)
    if S.dim() != 4 or S.shape[1] != 3:
        raise ValueError(f"expected [B, 3, H, W], got {tuple(S.shape)}")
    return S, T


def one_hot(labels, dtype=torch.float32) -> torch.Tensor:
    """[H, W] or [B, H, W] integer labels -> [.., 3, H, W] one-hot."""
    lab = torch.as_tensor(np.asarray(labels) if not torch.is_tensor(labels) else labels).long()
    oh = F.one_hot(lab, 3).to(dtype)
    return oh.movedim(-1, -3)


def _reduce(per_sample: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "mean":
        return per_sample.mean()
    if reduction == "none":
        return per_sample
    raise ValueError(f"unknown reduction {reduction!r}")


def ce_loss(S, T, reduction: str = "mean") -> torch.Tensor:
    S, T = _as_batch(S, T)
    logp = torch.log(S.clamp(PROB_FLOOR, 1.0))
    return _reduce(-(T * logp).sum(dim=1).mean(dim=(1, 2)), reduction)


def dice_loss(S, T, reduction: str = "mean") -> torch.Tensor:
    # eps also in the numerator so a class absent from both S and T scores Dice 1
    S, T = _as_batch(S, T)
    inter = (S * T).sum(dim=(2, 3))
    denom = S.sum(dim=(2, 3)) + T.sum(dim=(2, 3))
    dice = (2.0 * inter + DICE_EPS) / (denom + DICE_EPS)
    return _reduce((1.0 - dice).mean(dim=1), reduction)


def dice_ce_loss(S, T, w: LossWeights | None = None, reduction: str = "mean") -> torch.Tensor:
    w = w or DEFAULT_WEIGHTS["dice_ce"]
    return w.alpha * ce_loss(S, T, reduction) + w.beta * dice_loss(S, T, reduction)


def vessel_density_loss(S, T, reduction: str = "mean") -> torch.Tensor:
    S, T = _as_batch(S, T)
    area = S.shape[2] * S.shape[3]
    loss = 0.0
    for c in (DOWNWARD, UPWARD):
        loss = loss + (S[:, c].sum(dim=(1, 2)) - T[:, c].sum(dim=(1, 2))).abs() / area
    return _reduce(loss, reduction)


def box_scales(H: int, W: int) -> list[int]:
    m = min(H, W)
    if m < 2:
        raise ValueError("box counting needs min(H, W) >= 2")
    return [2 ** j for j in range(1, int(math.log2(m)) + 1) if 2 ** j <= m]


def soft_box_count(channel, eps: int) -> torch.Tensor:
    """Sum over an ``eps`` grid of the per-box maximum.

    ``channel`` is ``[H, W]`` or ``[..., H, W]`` with values in [0, 1]; edge
    boxes are truncated. On binary input this is the classical box count.
    """
    if eps < 1:
        raise ValueError("box size must be >= 1")
    x = torch.as_tensor(channel)
    if not x.is_floating_point():
        x = x.to(torch.float64)
    lead = x.shape[:-2]
    H, W = x.shape[-2:]
    x = x.reshape(-1, 1, H, W)
    ph, pw = (-H) % eps, (-W) % eps
    if ph or pw:
        # zeros never exceed a box max since inputs are >= 0
        x = F.pad(x, (0, pw, 0, ph))
    boxes = F.max_pool2d(x, kernel_size=eps, stride=eps)
    return boxes.sum(dim=(1, 2, 3)).reshape(lead)


def box_counting_loss(S, T, include_background: bool = True, reduction: str = "mean") -> torch.Tensor:
    S, T = _as_batch(S, T)
    scales = box_scales(S.shape[2], S.shape[3])
    norm = 1.0 / math.sqrt(sum(e * e for e in scales))
    classes = (BACKGROUND, DOWNWARD, UPWARD) if include_background else (DOWNWARD, UPWARD)
    total = torch.zeros(S.shape[0], dtype=S.dtype, device=S.device)
    for c in classes:
        for e in scales:
            n_s = soft_box_count(S[:, c], e)
            n_t = soft_box_count(T[:, c], e)
            term = math.sqrt(e) * (n_t - n_s).abs() / n_t.clamp_min(BOX_DELTA)
            total = total + torch.where(n_t > 0, term, torch.zeros_like(term)) * norm
    return _reduce(total, reduction)


def cf_loss(S, T, w: LossWeights | None = None, variant: str = "cf",
            include_background: bool = True, reduction: str = "mean") -> torch.Tensor:
    key = variant.lower()
    if key not in ("cf_b", "cf_v", "cf"):
        raise ValueError(f"unknown CF variant {variant!r}")
    w = w or DEFAULT_WEIGHTS[key]
    loss = w.alpha * ce_loss(S, T, reduction)
    if key in ("cf_b", "cf") and w.gamma:
        loss = loss + w.gamma * box_counting_loss(S, T, include_background, reduction)
    if key in ("cf_v", "cf") and w.beta:
        loss = loss + w.beta * vessel_density_loss(S, T, reduction)
    return loss


def get_loss(loss_id: str, w: LossWeights | None = None, include_background: bool = True):
    """Callable ``(S, T, reduction="mean")`` for a loss id."""
    w = w or default_weights(loss_id)
    if loss_id == "dice_ce":
        return lambda S, T, reduction="mean": dice_ce_loss(S, T, w, reduction=reduction)
    if loss_id in ("cf_b", "cf_v", "cf"):
        return lambda S, T, reduction="mean": cf_loss(S, T, w, loss_id, include_background, reduction=reduction)
    raise ValueError(f"unknown loss {loss_id!r}")


def estimate_fractal_dimension(mask) -> float:
    """Box-counting dimension: negated slope of log N(eps) against log eps."""
    m = np.asarray(mask) > 0
    if not m.any():
        raise ValueError("empty mask has no box-counting dimension")
    scales = box_scales(*m.shape)
    x = torch.from_numpy(m.astype(np.float64))
    counts = [float(soft_box_count(x, e)) for e in scales]
    if len(scales) < 2:
        return 0.0
    slope = np.polyfit(np.log(scales), np.log(counts), 1)[0]
    return float(-slope)
