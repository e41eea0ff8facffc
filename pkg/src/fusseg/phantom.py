"""Synthetic paired ULM velocity maps and fUS stacks with known ground truth.

Vessels are straight-segment polylines of constant width that start at the
cortical surface (row 0) and penetrate downward. Each carries one signed
Z-velocity: positive for downward flow (arterioles), negative for upward flow
(venules). Venules are drawn wider than arterioles by default, which is the
structural cue a network can use to tell the two apart in a
direction-insensitive Power-Doppler image.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .annotation import AnnotationParams, annotate, downsample_coverage
from .io import DirectionMasks, FusStack, TernaryLabelMap, UlmVelocityMap

BACKGROUND_FLOOR = 0.01
HRF_TIME_CONSTANT_S = 1.5


@dataclass
class PhantomSpec:
    hi_shape: tuple[int, int] = (1120, 1280)
    shape: tuple[int, int] = (112, 128)
    vessel_count: int = 16
    cortex_rows: tuple[int, int] | None = None  # high-res rows; default top 60 %
    direction_ratio: float = 0.5  # fraction of downward vessels
    width_range: tuple[float, float] = (10.0, 20.0)  # high-res px, downward vessels
    upward_width_scale: float = 1.8
    velocity_range: tuple[float, float] = (0.05, 1.0)
    noise_sigma: float = 0.05
    gain_down: float = 0.10
    gain_up: float = 0.06
    max_cortex_angle_deg: float = 15.0
    max_deep_angle_deg: float = 45.0
    depth_range: tuple[float, float] = (0.45, 0.98)  # vessel end row, fraction of height
    seed: int = 0

    def __post_init__(self):
        self.hi_shape = tuple(int(v) for v in self.hi_shape)
        self.shape = tuple(int(v) for v in self.shape)
        if self.vessel_count < 1:
            raise ValueError("vessel_count must be >= 1")
        if any(h % s for h, s in zip(self.hi_shape, self.shape)):
            raise ValueError("high-res shape must be an integer multiple of the fUS shape")
        lo, hi = self.velocity_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("velocity_range must satisfy 0 < lo <= hi <= 1")
        if not 0.0 <= self.direction_ratio <= 1.0:
            raise ValueError("direction_ratio must lie in [0, 1]")
        if not 0.0 <= self.max_cortex_angle_deg <= 20.0:
            raise ValueError("cortical vessels must stay within 20 degrees of vertical")
        if self.cortex_rows is None:
            self.cortex_rows = (0, int(round(0.6 * self.hi_shape[0])))
        self.cortex_rows = tuple(int(v) for v in self.cortex_rows)

    @property
    def factor(self) -> tuple[int, int]:
        return self.hi_shape[0] // self.shape[0], self.hi_shape[1] // self.shape[1]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StimulusParadigm:
    initial_rest_s: float = 30.0
    cycles: int = 4
    on_s: float = 30.0
    off_s: float = 45.0
    frame_period_s: float = 0.4

    @property
    def duration_s(self) -> float:
        return self.initial_rest_s + self.cycles * (self.on_s + self.off_s)

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s / self.frame_period_s))


@dataclass
class Vessel:
    points: np.ndarray  # [K, 2] (row, col) centreline vertices, high-res pixel units
    width: float
    velocity: float  # signed; > 0 downward

    @property
    def downward(self) -> bool:
        return self.velocity > 0

    def contains(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """True where (rows, cols) lies within width/2 of the centreline."""
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        r2 = (self.width / 2.0) ** 2
        inside = np.zeros(np.broadcast(rows, cols).shape, dtype=bool)
        for (r0, c0), (r1, c1) in zip(self.points[:-1], self.points[1:]):
            dr, dc = r1 - r0, c1 - c0
            seg2 = dr * dr + dc * dc
            t = ((rows - r0) * dr + (cols - c0) * dc) / seg2 if seg2 > 0 else np.zeros_like(rows)
            t = np.clip(t, 0.0, 1.0)
            d2 = (rows - (r0 + t * dr)) ** 2 + (cols - (c0 + t * dc)) ** 2
            inside |= d2 <= r2
        return inside

    def bbox(self, shape) -> tuple[slice, slice]:
        pad = self.width / 2.0 + 1
        r0 = max(int(math.floor(self.points[:, 0].min() - pad)), 0)
        r1 = min(int(math.ceil(self.points[:, 0].max() + pad)) + 1, shape[0])
        c0 = max(int(math.floor(self.points[:, 1].min() - pad)), 0)
        c1 = min(int(math.ceil(self.points[:, 1].max() + pad)) + 1, shape[1])
        return slice(r0, r1), slice(c0, c1)


@dataclass
class Phantom:
    """One synthetic subject: geometry, ULM map, fUS stack and ground truth."""

    subject_id: str
    vessels: list[Vessel]
    velocity: UlmVelocityMap
    stack: FusStack
    masks: DirectionMasks
    labels: TernaryLabelMap
    baseline: np.ndarray = field(repr=False)
    gain: np.ndarray = field(repr=False)
    response: np.ndarray = field(repr=False)


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), *[int(s) for s in stream]])


def generate_vessel_tree(spec: PhantomSpec, index: int = 0) -> list[Vessel]:
    """Draw ``spec.vessel_count`` penetrating vessels, reproducibly from (seed, index)."""
    lo_w, hi_w = spec.width_range
    if lo_w <= 0 or lo_w > hi_w:
        raise ValueError(f"invalid width range {spec.width_range}")
    Hh, Wh = spec.hi_shape
    if hi_w * max(spec.upward_width_scale, 1.0) >= min(Hh, Wh) / 2:
        raise ValueError("vessel width exceeds the grid")

    rng = _rng(spec.seed, index, 0)
    n = spec.vessel_count
    n_down = int(round(spec.direction_ratio * n))
    downward = np.zeros(n, dtype=bool)
    downward[:n_down] = True
    rng.shuffle(downward)

    # each vessel owns one column lane so neighbours cannot cross; the small
    # clearance still lets adjacent lanes share an occasional fUS pixel
    clearance = spec.factor[1] / 4.0
    lane = Wh / n
    widths = rng.uniform(lo_w, hi_w, size=n) * np.where(downward, 1.0, spec.upward_width_scale)
    lane_lo = lane * np.arange(n) + widths / 2 + clearance
    lane_hi = lane * (np.arange(n) + 1) - widths / 2 - clearance
    if np.any(lane_hi < lane_lo):
        raise ValueError("grid too narrow for the requested vessel count and widths")
    cols = rng.uniform(lane_lo, lane_hi)

    ctx_lo, ctx_hi = spec.cortex_rows
    seg_len = Hh / 10.0
    vessels = []
    for k in range(n):
        width = widths[k]
        speed = rng.uniform(*spec.velocity_range)
        end_row = rng.uniform(*spec.depth_range) * (Hh - 1)
        pts = [(0.0, cols[k])]
        r, c = 0.0, cols[k]
        while r < end_row:
            in_cortex = ctx_lo <= r < ctx_hi
            max_ang = spec.max_cortex_angle_deg if in_cortex else spec.max_deep_angle_deg
            ang = math.radians(rng.uniform(-max_ang, max_ang))
            step = min(seg_len, end_row - r)
            if in_cortex:
                step = min(step, ctx_hi - r)  # segments never straddle the cortex boundary
            step = max(step, 1e-6)
            r += step
            c = float(np.clip(c + step * math.tan(ang), lane_lo[k], lane_hi[k]))
            pts.append((r, c))
        vessels.append(Vessel(np.array(pts), float(width), float(speed if downward[k] else -speed)))
    return vessels


def render_ulm_velocity(vessels: list[Vessel], spec: PhantomSpec) -> UlmVelocityMap:
    Hh, Wh = spec.hi_shape
    values = np.zeros((Hh, Wh))
    for v in vessels:  # later vessels overwrite earlier ones
        rs, cs = v.bbox((Hh, Wh))
        rr, cc = np.mgrid[rs, cs]
        inside = v.contains(rr, cc)
        values[rs, cs][inside] = v.velocity
    return UlmVelocityMap(values, pixel_size_um=10.0)


def stimulus_waveform(paradigm: StimulusParadigm | None, T: int) -> np.ndarray:
    """Binary ON/OFF series sampled at k * frame_period_s."""
    if T < 1:
        raise ValueError("T must be >= 1")
    if paradigm is None:
        return np.zeros(T)
    p = paradigm
    t = np.arange(T) * p.frame_period_s
    s = np.zeros(T)
    period = p.on_s + p.off_s
    for j in range(p.cycles):
        start = p.initial_rest_s + j * period
        # small tolerance so 0.4 s multiples land on the intended side of a boundary
        s[(t >= start - 1e-9) & (t < start + p.on_s - 1e-9)] = 1.0
    return s


def hemodynamic_response(stimulus: np.ndarray, frame_period_s: float,
                         tau_s: float = HRF_TIME_CONSTANT_S) -> np.ndarray:
    """Causal exponential smoothing of the stimulus, steady state 1."""
    a = 1.0 - math.exp(-frame_period_s / tau_s)
    r = np.zeros(len(stimulus))
    acc = 0.0
    for k, s in enumerate(stimulus):
        acc += a * (s - acc)
        r[k] = acc
    return r


def coverage_maps(velocity: UlmVelocityMap, shape) -> tuple[np.ndarray, np.ndarray]:
    """Fraction of each fUS pixel covered by downward / upward flow."""
    v = velocity.values
    return downsample_coverage(v > 0, shape), downsample_coverage(v < 0, shape)


def render_fus_stack(vessels: list[Vessel], spec: PhantomSpec, paradigm: StimulusParadigm | None,
                     T: int, index: int = 0, velocity: UlmVelocityMap | None = None,
                     annotation: AnnotationParams | None = None):
    """Render a Power-Doppler stack and its ground-truth direction masks.

    Returns ``(stack, masks, labels, extras)`` where ``extras`` holds the
    noiseless baseline, per-pixel gain and the response waveform.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if velocity is None:
        velocity = render_ulm_velocity(vessels, spec)
    cov_d, cov_u = coverage_maps(velocity, spec.shape)
    cov = cov_d + cov_u
    baseline = cov + BACKGROUND_FLOOR
    gain = np.divide(cov_d * spec.gain_down + cov_u * spec.gain_up, cov,
                     out=np.zeros_like(cov), where=cov > 0)

    frame_period = paradigm.frame_period_s if paradigm else 0.4
    response = hemodynamic_response(stimulus_waveform(paradigm, T), frame_period)
    mode = 1 if paradigm is not None else 0
    frames = baseline[None] * (1.0 + gain[None] * response[:, None, None])
    if spec.noise_sigma > 0:
        noise = _rng(spec.seed, index, 1, mode).normal(0.0, spec.noise_sigma, size=frames.shape)
        frames = frames * (1.0 + noise)
    frames = np.clip(frames, 0.0, None)

    stack = FusStack(frames.astype(np.float32), frame_period_s=frame_period,
                     condition="stimulation" if paradigm is not None else "rest")
    params = annotation or AnnotationParams(target_shape=spec.shape)
    masks, labels = annotate(velocity, params)
    return stack, masks, labels, {"baseline": baseline, "gain": gain, "response": response}


def make_phantom(spec: PhantomSpec, index: int = 0, mode: str = "rest", T: int = 100,
                 paradigm: StimulusParadigm | None = None,
                 annotation: AnnotationParams | None = None) -> Phantom:
    if mode not in ("rest", "stim"):
        raise ValueError(f"mode must be 'rest' or 'stim', got {mode!r}")
    if mode == "stim" and paradigm is None:
        paradigm = StimulusParadigm()
    if mode == "rest":
        paradigm = None
    vessels = generate_vessel_tree(spec, index)
    velocity = render_ulm_velocity(vessels, spec)
    stack, masks, labels, extras = render_fus_stack(vessels, spec, paradigm, T, index=index,
                                                    velocity=velocity, annotation=annotation)
    return Phantom(f"s{spec.seed}-{index}", vessels, velocity, stack, masks, labels, **extras)


def make_dataset(spec: PhantomSpec, count: int, mode: str = "rest", T: int = 100,
                 start: int = 0) -> list[Phantom]:
    """``count`` phantoms with indices ``start .. start+count-1`` (one subject each)."""
    return [make_phantom(spec, i, mode=mode, T=T) for i in range(start, start + count)]
