"""Phantom dataset directories.

Layout, one sub-directory per subject::

    DIR/index.json
    DIR/<subject>/stack.f32     fUS stack [T, H, W]
    DIR/<subject>/ulm.f32       Z-velocity map [H_hi, W_hi]
    DIR/<subject>/labels.pgm    ternary ground truth
    DIR/<subject>/down.pgm, up.pgm
    DIR/<subject>/manifest.json
"""
from __future__ import annotations

from pathlib import Path

from .. import __version__
from ..io import (FusStack, read_json, read_label_map, read_tensor, write_json, write_label_map,
                  write_mask, write_tensor)
from ..phantom import Phantom, PhantomSpec
from .experiments import Sample


def write_phantom(directory, phantom: Phantom, spec: PhantomSpec, index: int, mode: str) -> Path:
    d = Path(directory) / phantom.subject_id
    d.mkdir(parents=True, exist_ok=True)
    st = phantom.stack
    meta = {"subject": phantom.subject_id, "condition": st.condition,
            "frame_period_s": st.frame_period_s, "pixel_size_um": st.pixel_size_um}
    write_tensor(d / "stack.f32", st.frames, meta)
    write_tensor(d / "ulm.f32", phantom.velocity.values,
                 {"subject": phantom.subject_id, "pixel_size_um": phantom.velocity.pixel_size_um})
    write_label_map(d / "labels.pgm", phantom.labels)
    write_mask(d / "down.pgm", phantom.masks.downward)
    write_mask(d / "up.pgm", phantom.masks.upward)
    write_json(d / "manifest.json", {
        "subject": phantom.subject_id, "index": index, "mode": mode, "frames": len(st),
        "spec": spec.to_dict(), "mixed_pixel_fraction": phantom.masks.mixed_fraction,
        "vessels": [{"points": v.points.tolist(), "width": v.width, "velocity": v.velocity}
                    for v in phantom.vessels],
        "fusseg_version": __version__,
    })
    return d


def read_stack(path) -> FusStack:
    frames, meta = read_tensor(path)
    return FusStack(frames, frame_period_s=meta.get("frame_period_s", 0.4),
                    pixel_size_um=meta.get("pixel_size_um", 100.0),
                    condition=meta.get("condition", "rest"))


def load_dataset(directory) -> list[Sample]:
    root = Path(directory)
    subjects = sorted(p.parent for p in root.glob("*/stack.f32"))
    if not subjects:
        raise ValueError(f"no phantom sub-directories with stack.f32 under {root}")
    out = []
    for d in subjects:
        stack = read_stack(d / "stack.f32")
        manifest = read_json(d / "manifest.json") if (d / "manifest.json").exists() else {}
        out.append(Sample(manifest.get("subject", d.name), stack, read_label_map(d / "labels.pgm"),
                          stack.condition))
    return out
