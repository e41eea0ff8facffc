"""UNet-family networks taking stack frames as input channels.

All variants share one wrapper that reflect-pads the input to a multiple of
``2**depth``, runs the backbone, crops back and applies a per-pixel softmax
over the three classes.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

N_CLASSES = 3


@dataclass
class ArchConfig:
    variant: str = "unet"
    in_channels: int = 100
    base_width: int = 32
    depth: int = 4
    out_classes: int = N_CLASSES

    def __post_init__(self):
        if self.variant not in BACKBONES:
            raise ValueError(f"unknown architecture {self.variant!r}; choose from {sorted(BACKBONES)}")
        if self.in_channels < 1:
            raise ValueError("in_channels must be >= 1")
        if self.base_width < 4:
            raise ValueError("base_width must be >= 4")
        if not 2 <= self.depth <= 5:
            raise ValueError("depth must lie in [2, 5]")
        if self.out_classes != N_CLASSES:
            raise ValueError("out_classes is fixed at 3")

    def to_dict(self):
        return asdict(self)


def conv_bn_relu(c_in, c_out, k=3):
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, k, padding=k // 2, bias=False),
        nn.BatchNorm2d(c_out),
        nn.ReLU(inplace=True),
    )


class DoubleConv(nn.Module):
    def __init__(self, c_in, c_out):
        super().__init__()
        self.body = nn.Sequential(conv_bn_relu(c_in, c_out), conv_bn_relu(c_out, c_out))

    def forward(self, x):
        return self.body(x)


class ResidualBlock(nn.Module):
    def __init__(self, c_in, c_out):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(c_in, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
            nn.ReLU(inplace=True),
            nn.Conv2d(c_out, c_out, 3, padding=1, bias=False),
            nn.BatchNorm2d(c_out),
        )
        self.skip = nn.Sequential(nn.Conv2d(c_in, c_out, 1, bias=False), nn.BatchNorm2d(c_out))

    def forward(self, x):
        return F.relu(self.body(x) + self.skip(x))


class MultiResBlock(nn.Module):
    """Chained 3x3 convolutions (3x3, ~5x5, ~7x7 receptive fields) concatenated,
    plus a 1x1 shortcut."""

    def __init__(self, c_in, c_out):
        super().__init__()
        c1 = max(c_out // 6, 1)
        c2 = max(c_out // 3, 1)
        c3 = c_out - c1 - c2
        self.a = conv_bn_relu(c_in, c1)
        self.b = conv_bn_relu(c1, c2)
        self.c = conv_bn_relu(c2, c3)
        self.bn = nn.BatchNorm2d(c_out)
        self.skip = nn.Sequential(nn.Conv2d(c_in, c_out, 1, bias=False), nn.BatchNorm2d(c_out))
        self.out_bn = nn.BatchNorm2d(c_out)

    def forward(self, x):
        a = self.a(x)
        b = self.b(a)
        c = self.c(b)
        y = self.bn(torch.cat([a, b, c], dim=1))
        return self.out_bn(F.relu(y + self.skip(x)))


class ResPath(nn.Module):
    """Residual convolution chain applied on a skip connection."""

    def __init__(self, c, length):
        super().__init__()
        self.convs = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, c, 3, padding=1, bias=False), nn.BatchNorm2d(c)) for _ in range(length))
        self.skips = nn.ModuleList(
            nn.Sequential(nn.Conv2d(c, c, 1, bias=False), nn.BatchNorm2d(c)) for _ in range(length))
        self.bns = nn.ModuleList(nn.BatchNorm2d(c) for _ in range(length))

    def forward(self, x):
        for conv, skip, bn in zip(self.convs, self.skips, self.bns):
            x = bn(F.relu(conv(x) + skip(x)))
        return x


class AttentionGate(nn.Module):
    """Additive attention: the decoder signal ``g`` re-weights skip features ``x``."""

    def __init__(self, c_g, c_x, c_int):
        super().__init__()
        self.wg = nn.Sequential(nn.Conv2d(c_g, c_int, 1, bias=False), nn.BatchNorm2d(c_int))
        self.wx = nn.Sequential(nn.Conv2d(c_x, c_int, 1, bias=False), nn.BatchNorm2d(c_int))
        self.psi = nn.Sequential(nn.Conv2d(c_int, 1, 1), nn.BatchNorm2d(1), nn.Sigmoid())

    def forward(self, g, x):
        a = self.psi(F.relu(self.wg(g) + self.wx(x)))
        return x * a


class EncoderDecoder(nn.Module):
    """Plain UNet; subclasses swap the block type or decorate skips."""

    block = DoubleConv

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        w = [cfg.base_width * 2 ** i for i in range(cfg.depth + 1)]
        self.widths = w
        self.enc = nn.ModuleList([self.block(cfg.in_channels, w[0])] +
                                 [self.block(w[i - 1], w[i]) for i in range(1, cfg.depth + 1)])
        self.up = nn.ModuleList(nn.ConvTranspose2d(w[i + 1], w[i], 2, stride=2) for i in range(cfg.depth))
        self.dec = nn.ModuleList(self.block(2 * w[i], w[i]) for i in range(cfg.depth))
        self.head = nn.Conv2d(w[0], cfg.out_classes, 1)

    def skip(self, level, g, x):
        return x

    def forward(self, x):
        skips = []
        for i, enc in enumerate(self.enc):
            x = enc(x if i == 0 else F.max_pool2d(x, 2))
            skips.append(x)
        x = skips.pop()
        for i in reversed(range(len(self.dec))):
            g = self.up[i](x)
            x = self.dec[i](torch.cat([self.skip(i, g, skips[i]), g], dim=1))
        return self.head(x)


class UNet(EncoderDecoder):
    pass


class AttentionUNet(EncoderDecoder):
    def __init__(self, cfg: ArchConfig):
        super().__init__(cfg)
        w = self.widths
        self.gates = nn.ModuleList(AttentionGate(w[i], w[i], max(w[i] // 2, 1)) for i in range(cfg.depth))

    def skip(self, level, g, x):
        return self.gates[level](g, x)


class ResUNet(EncoderDecoder):
    block = ResidualBlock


class MultiResUNet(EncoderDecoder):
    block = MultiResBlock

    def __init__(self, cfg: ArchConfig):
        super().__init__(cfg)
        self.paths = nn.ModuleList(ResPath(self.widths[i], cfg.depth - i) for i in range(cfg.depth))

    def skip(self, level, g, x):
        return self.paths[level](x)


class NestedUNet(nn.Module):
    """UNet++: node (i, j) fuses all earlier nodes at level i with the
    upsampled node (i+1, j-1)."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        d = cfg.depth
        w = [cfg.base_width * 2 ** i for i in range(d + 1)]
        self.depth = d
        self.nodes = nn.ModuleDict()
        for i in range(d + 1):
            self.nodes[f"{i}_0"] = DoubleConv(cfg.in_channels if i == 0 else w[i - 1], w[i])
        for j in range(1, d + 1):
            for i in range(d + 1 - j):
                self.nodes[f"{i}_{j}"] = DoubleConv(w[i] * j + w[i + 1], w[i])
        self.head = nn.Conv2d(w[0], cfg.out_classes, 1)

    def forward(self, x):
        X = {}
        for i in range(self.depth + 1):
            x = self.nodes[f"{i}_0"](x if i == 0 else F.max_pool2d(x, 2))
            X[i, 0] = x
        for j in range(1, self.depth + 1):
            for i in range(self.depth + 1 - j):
                up = F.interpolate(X[i + 1, j - 1], scale_factor=2, mode="bilinear", align_corners=False)
                X[i, j] = self.nodes[f"{i}_{j}"](torch.cat([X[i, k] for k in range(j)] + [up], dim=1))
        return self.head(X[0, self.depth])


BACKBONES = {
    "unet": UNet,
    "attention_unet": AttentionUNet,
    "unetpp": NestedUNet,
    "resunet": ResUNet,
    "multires_unet": MultiResUNet,
}


class SegmentationNet(nn.Module):
    """``[B, C, H, W]`` frames -> ``[B, 3, H, W]`` class probabilities."""

    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        self.backbone = BACKBONES[cfg.variant](cfg)

    def padding(self, H, W):
        m = 2 ** self.cfg.depth
        ph, pw = (-H) % m, (-W) % m
        return (pw // 2, pw - pw // 2, ph // 2, ph - ph // 2)

    def logits(self, x):
        H, W = x.shape[-2:]
        pad = self.padding(H, W)
        if any(pad):
            mode = "reflect" if max(pad[2:]) < H and max(pad[:2]) < W else "replicate"
            x = F.pad(x, pad, mode=mode)
        out = self.backbone(x)
        return out[..., pad[2]:pad[2] + H, pad[0]:pad[0] + W]

    def forward(self, x):
        return torch.softmax(self.logits(x), dim=1)


def build_model(cfg: ArchConfig) -> SegmentationNet:
    return SegmentationNet(cfg)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
