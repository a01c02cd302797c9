"""Confidence-guided refinement: global gating, local logit-space updates
and convex upsampling back to full resolution.

The pipeline order is one global correction, then a fixed number of local
steps, then upsampling. Flow residuals are computed independently per axis
(two separate 1-D evaluations); a joint two-channel variant is kept behind
the ``coupled`` switch for ablation runs. Confidence and occlusion updates
are accumulated in logit space and clamped back to ``[delta, 1 - delta]``,
which keeps both maps strictly inside (0, 1) no matter how large a residual
gets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.ndimage import convolve as _convolve2d
from scipy.special import expit as _sigmoid
from scipy.special import logit as _logit

from otflow.core import (
    ConfidenceMap,
    CostVolume,
    DimensionMismatch,
    FlowField,
    OcclusionMap,
    RefineState,
    ValueOutOfRange,
    flat_index,
)
from otflow.features import FeatureMap

__all__ = [
    "RefineConfig",
    "Aggregator",
    "UpsampleWeights",
    "IterationExhausted",
    "Residuals",
    "diffuse_aggregate",
    "global_refine",
    "correlation_lookup",
    "compute_local_residuals",
    "apply_residuals",
    "local_refine_step",
    "bilinear_upsample_weights",
    "convex_upsample",
    "run_refinement",
]

# local residual rule: slice radius (quarter-res cells), softmax sharpness
# and the logit step size toward the local evidence
LOCAL_RADIUS = 3
LOCAL_TEMPERATURE = 0.01
LOGIT_STEP_SCALE = 0.5

# spatial falloff of the reference diffusion kernel, in cells
DIFFUSION_SIGMA = 1.0
DIFFUSION_EPS = 1e-8


class IterationExhausted(RuntimeError):
    """A local refinement step was requested past the configured budget."""


@dataclass(frozen=True)
class RefineConfig:
    conf_threshold: float = 0.2
    steps: int = 3
    logit_clamp: float = 1e-6
    diffusion_passes: int = 8
    diffusion_kernel_radius: int = 1

    def __post_init__(self):
        if not (0.0 < self.conf_threshold < 1.0):
            raise ValueOutOfRange("RefineConfig: conf_threshold must be in (0, 1)")
        if self.steps < 0:
            raise ValueOutOfRange("RefineConfig: steps must be >= 0")
        if not (0.0 < self.logit_clamp < 0.5):
            raise ValueOutOfRange("RefineConfig: logit_clamp must be in (0, 0.5)")
        if self.diffusion_passes < 0:
            raise ValueOutOfRange("RefineConfig: diffusion_passes must be >= 0")
        if self.diffusion_kernel_radius < 1:
            raise ValueOutOfRange("RefineConfig: diffusion_kernel_radius must be >= 1")


#: Replacement-flow provider used by :func:`global_refine` for pixels below
#: the confidence threshold. The reference implementation is
#: :func:`diffuse_aggregate`; a learned module can be dropped in instead.
Aggregator = Callable[[FeatureMap, ConfidenceMap, FlowField], FlowField]


def _gaussian_kernel(radius: int, sigma: float) -> np.ndarray:
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    dist2 = coords[:, None] ** 2 + coords[None, :] ** 2
    return np.exp(-dist2 / (2.0 * sigma * sigma))


def diffuse_aggregate(
    g1: FeatureMap, conf: ConfidenceMap, F0: FlowField, cfg: RefineConfig
) -> FlowField:
    """Reference aggregator: confidence-weighted diffusion of the flow.

    Each pass replaces a pixel's flow with the normalized
    confidence-weighted average of its neighborhood (Gaussian spatial
    falloff), then spreads the weighting mass one kernel radius further, so
    reliable flow travels into low-confidence regions across passes. The
    update is written in residual form, which leaves the field untouched
    (bitwise) wherever no weighted evidence exists — an all-zero confidence
    map degenerates to the identity. ``g1`` is part of the aggregator
    interface; the reference propagator is appearance-blind and ignores it.
    """
    if (conf.width, conf.height) != (F0.width, F0.height):
        raise DimensionMismatch("diffuse_aggregate: confidence/flow dims disagree")
    kernel = _gaussian_kernel(cfg.diffusion_kernel_radius, DIFFUSION_SIGMA)
    flow = F0.data.copy()
    weight = conf.data.copy()
    norm = _convolve2d(np.ones_like(weight), kernel, mode="constant", cval=0.0)
    for _ in range(cfg.diffusion_passes):
        den = _convolve2d(weight, kernel, mode="constant", cval=0.0)
        for c in range(2):
            num = _convolve2d(weight * flow[:, :, c], kernel, mode="constant", cval=0.0)
            flow[:, :, c] += (num - den * flow[:, :, c]) / (den + DIFFUSION_EPS)
        weight = den / norm
    return FlowField(F0.width, F0.height, flow, scale=F0.scale)


def global_refine(
    F0: FlowField,
    conf: ConfidenceMap,
    g1: FeatureMap,
    agg: Aggregator,
    cfg: RefineConfig,
) -> FlowField:
    """Gate the initial flow by confidence, filling the rest from ``agg``.

    Pixels at or above the threshold keep their initial flow bit-exactly;
    all others take the aggregator's replacement value.
    """
    if (conf.width, conf.height) != (F0.width, F0.height):
        raise DimensionMismatch("global_refine: confidence/flow dims disagree")
    replacement = agg(g1, conf, F0)
    if (replacement.width, replacement.height) != (F0.width, F0.height):
        raise DimensionMismatch("global_refine: aggregator changed the grid size")
    keep = conf.data >= cfg.conf_threshold
    data = np.where(keep[:, :, None], F0.data, replacement.data)
    return FlowField(F0.width, F0.height, data, scale=F0.scale)


def correlation_lookup(C: CostVolume):
    """Local-correlation accessor: ``fn(u, v)`` returns the (h, w) score
    grid of source pixel ``(u, v)`` over all targets."""

    def fn(u: int, v: int) -> np.ndarray:
        return C.data[flat_index(u, v, C.w)].reshape(C.h, C.w)

    return fn


@dataclass(frozen=True)
class Residuals:
    """Per-pixel residual updates of one local refinement step."""

    du: np.ndarray
    dv: np.ndarray
    dconf: np.ndarray
    docc: np.ndarray

    @staticmethod
    def zeros(width: int, height: int) -> "Residuals":
        z = np.zeros((height, width))
        return Residuals(z, z.copy(), z.copy(), z.copy())


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp((x - x.max()) / LOCAL_TEMPERATURE)
    return e / e.sum()


def compute_local_residuals(
    state: RefineState,
    corr_patch_fn,
    cfg: RefineConfig,
    coupled: bool = False,
) -> Residuals:
    """Deterministic residual rule standing in for a learned local refiner.

    Flow: per axis, a soft-argmax over the 1-D correlation slice of radius
    ``LOCAL_RADIUS`` through the rounded current match, scaled by the
    current confidence. With ``coupled=True`` both components come instead
    from the centroid of one joint 2-D soft-argmax over the window (the
    ablation path). Confidence and occlusion residuals move the current
    logits halfway toward the window's softmax peak mass and toward the
    share of the full row's softmax mass falling inside the window.
    """
    h, w = state.flow.height, state.flow.width
    conf = state.confidence.data
    occ = state.occlusion.data
    fu = state.flow.u
    fv = state.flow.v
    delta = cfg.logit_clamp

    du = np.zeros((h, w))
    dv = np.zeros((h, w))
    dconf = np.zeros((h, w))
    docc = np.zeros((h, w))

    for v in range(h):
        for u in range(w):
            cu = u + fu[v, u]
            cv = v + fv[v, u]
            mu = int(np.clip(round(cu), 0, w - 1))
            mv = int(np.clip(round(cv), 0, h - 1))
            grid = corr_patch_fn(u, v)
            a, b = max(0, mu - LOCAL_RADIUS), min(w - 1, mu + LOCAL_RADIUS)
            c, d = max(0, mv - LOCAL_RADIUS), min(h - 1, mv + LOCAL_RADIUS)

            if coupled:
                win = grid[c : d + 1, a : b + 1]
                p2 = _softmax(win)
                cen_u = float((p2.sum(axis=0) * np.arange(a, b + 1)).sum())
                cen_v = float((p2.sum(axis=1) * np.arange(c, d + 1)).sum())
            else:
                pu = _softmax(grid[mv, a : b + 1])
                cen_u = float((pu * np.arange(a, b + 1)).sum())
                pv = _softmax(grid[c : d + 1, mu])
                cen_v = float((pv * np.arange(c, d + 1)).sum())
            du[v, u] = conf[v, u] * (cen_u - cu)
            dv[v, u] = conf[v, u] * (cen_v - cv)

            win = grid[c : d + 1, a : b + 1]
            peak = float(_softmax(win).max())
            full = _softmax(grid)
            local_mass = float(full[c : d + 1, a : b + 1].sum())
            dconf[v, u] = LOGIT_STEP_SCALE * (
                _logit(np.clip(peak, delta, 1 - delta))
                - _logit(np.clip(conf[v, u], delta, 1 - delta))
            )
            docc[v, u] = LOGIT_STEP_SCALE * (
                _logit(np.clip(local_mass, delta, 1 - delta))
                - _logit(np.clip(occ[v, u], delta, 1 - delta))
            )
    return Residuals(du, dv, dconf, docc)


def apply_residuals(state: RefineState, res: Residuals, cfg: RefineConfig) -> RefineState:
    """Additive flow update plus logit-space confidence/occlusion updates."""
    h, w = state.flow.height, state.flow.width
    if res.du.shape != (h, w):
        raise DimensionMismatch("apply_residuals: residual dims disagree with state")
    delta = cfg.logit_clamp
    flow = state.flow.data + np.stack([res.du, res.dv], axis=2)

    def bump(values: np.ndarray, residual: np.ndarray) -> np.ndarray:
        clamped = np.clip(values, delta, 1.0 - delta)
        return np.clip(_sigmoid(_logit(clamped) + residual), delta, 1.0 - delta)

    return RefineState(
        flow=FlowField(w, h, flow, scale=4),
        confidence=ConfidenceMap(w, h, bump(state.confidence.data, res.dconf), scale=4),
        occlusion=OcclusionMap(w, h, bump(state.occlusion.data, res.docc), scale=4),
        step=state.step + 1,
    )


def local_refine_step(
    state: RefineState,
    corr_patch_fn,
    cfg: RefineConfig,
    coupled: bool = False,
) -> RefineState:
    """One local refinement iteration; raises past the configured budget."""
    if state.step >= cfg.steps:
        raise IterationExhausted(
            f"local_refine_step: step {state.step} >= configured steps {cfg.steps}"
        )
    res = compute_local_residuals(state, corr_patch_fn, cfg, coupled=coupled)
    return apply_residuals(state, res, cfg)


# 3x3 neighbor offsets in weight-slot order k = (dy + 1) * 3 + (dx + 1)
_NEIGHBOR_OFFSETS = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1)]


@dataclass(frozen=True)
class UpsampleWeights:
    """Per full-resolution pixel, convex weights over the 3x3 coarse
    neighborhood of its parent cell (slot order ``(dy+1)*3 + (dx+1)``)."""

    data: np.ndarray

    SUM_TOL = 1e-6

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        self._validate()

    def _validate(self) -> None:
        if self.data.ndim != 3 or self.data.shape[2] != 9:
            raise DimensionMismatch("UpsampleWeights: expected (H, W, 9) array")
        if float(self.data.min(initial=0.0)) < 0.0:
            raise ValueOutOfRange("UpsampleWeights: not convex (negative weight)")
        sums = self.data.sum(axis=2)
        if float(np.abs(sums - 1.0).max(initial=0.0)) > self.SUM_TOL:
            raise ValueOutOfRange("UpsampleWeights: not convex (weights must sum to 1)")


def bilinear_upsample_weights(h: int, w: int) -> UpsampleWeights:
    """Convex 3x3 weights reproducing bilinear 4x upsampling.

    Coarse cell centers sit at full-res coordinate ``4*c + 1.5``; each of
    the 16 sub-positions therefore interpolates between its parent cell and
    one neighbor per axis with offsets in {±0.125, ±0.375}.
    """
    pattern = np.zeros((4, 4, 9))
    for ry in range(4):
        ty = (ry - 1.5) / 4.0
        wy = {-1: max(-ty, 0.0), 0: 1.0 - abs(ty), 1: max(ty, 0.0)}
        for rx in range(4):
            tx = (rx - 1.5) / 4.0
            wx = {-1: max(-tx, 0.0), 0: 1.0 - abs(tx), 1: max(tx, 0.0)}
            for k, (dy, dx) in enumerate(_NEIGHBOR_OFFSETS):
                pattern[ry, rx, k] = wy[dy] * wx[dx]
    return UpsampleWeights(np.tile(pattern, (h, w, 1)))


def convex_upsample(field, weights: UpsampleWeights):
    """Upsample a scale-4 grid to full resolution by convex combination.

    Every output value is a convex combination of the 3x3 coarse
    neighborhood of its parent cell (out-of-grid neighbors clamp to the
    border) and is clipped into that neighborhood's [min, max], making the
    convexity bound exact under float rounding. Flow values are multiplied
    by 4 afterwards to convert quarter-res cell units into full-res pixels.
    """
    if field.scale != 4:
        raise ValueOutOfRange("convex_upsample: input must be at scale 4")
    h, w = field.height, field.width
    big_h, big_w = 4 * h, 4 * w
    if weights.data.shape[:2] != (big_h, big_w):
        raise DimensionMismatch(
            f"convex_upsample: weights are {weights.data.shape[:2]}, "
            f"expected {(big_h, big_w)}"
        )
    coarse = field.data if field.data.ndim == 3 else field.data[:, :, None]
    channels = coarse.shape[2]

    cy = np.arange(big_h) // 4
    cx = np.arange(big_w) // 4
    acc = np.zeros((big_h, big_w, channels))
    lo = np.full((big_h, big_w, channels), np.inf)
    hi = np.full((big_h, big_w, channels), -np.inf)
    for k, (dy, dx) in enumerate(_NEIGHBOR_OFFSETS):
        iy = np.clip(cy + dy, 0, h - 1)
        ix = np.clip(cx + dx, 0, w - 1)
        vals = coarse[np.ix_(iy, ix)]
        acc += weights.data[:, :, k : k + 1] * vals
        np.minimum(lo, vals, out=lo)
        np.maximum(hi, vals, out=hi)
    out = np.clip(acc, lo, hi)

    if isinstance(field, FlowField):
        return FlowField(big_w, big_h, out * 4.0, scale=1)
    if isinstance(field, ConfidenceMap):
        return ConfidenceMap(big_w, big_h, out[:, :, 0], scale=1)
    if isinstance(field, OcclusionMap):
        return OcclusionMap(big_w, big_h, out[:, :, 0], scale=1)
    raise TypeError(f"convex_upsample: unsupported field type {type(field)!r}")


def run_refinement(
    F0: FlowField,
    conf0: ConfidenceMap,
    occ0: OcclusionMap,
    g1: FeatureMap,
    C: CostVolume,
    cfg: RefineConfig,
    aggregator: Aggregator | None = None,
    coupled: bool = False,
):
    """Full refinement: global gate, ``cfg.steps`` local steps, upsample.

    Returns ``(flow, confidence, occlusion)`` at scale 1. The default
    aggregator is :func:`diffuse_aggregate` with this config; all maps are
    upsampled with the reference bilinear weights.
    """
    if aggregator is None:
        def aggregator(g, c, f):
            return diffuse_aggregate(g, c, f, cfg)

    flow = global_refine(F0, conf0, g1, aggregator, cfg)
    state = RefineState(flow=flow, confidence=conf0, occlusion=occ0, step=0)
    corr_fn = correlation_lookup(C)
    for _ in range(cfg.steps):
        state = local_refine_step(state, corr_fn, cfg, coupled=coupled)

    weights = bilinear_upsample_weights(F0.height, F0.width)
    return (
        convex_upsample(state.flow, weights),
        convex_upsample(state.confidence, weights),
        convex_upsample(state.occlusion, weights),
    )
