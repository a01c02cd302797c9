"""Ground-truth construction and the three-part training objective.

Occlusion ground truth comes from a forward-backward consistency check
(non-occluded iff the round-trip error stays strictly below the threshold,
2 px by convention); confidence ground truth is the indicator of endpoint
error strictly below 4 px at full resolution. The losses evaluate the
published objective: L1 occlusion over all steps, confidence L1 masked to
non-occluded pixels at step 0 only, and smooth-L1 flow at step 0 (masked)
followed by plain L1 over all pixels for later steps, combined with weights
(1, 0.1, 0.1).

All reductions use numpy's pairwise summation, so results are reproducible
across platforms. No gradients are computed here; derivative behaviour is
pinned by finite-difference tests instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from otflow.core import (
    ConfidenceMap,
    DimensionMismatch,
    EmptyMaskError,
    FlowField,
    OcclusionMap,
    ValueOutOfRange,
)

__all__ = [
    "LossWeights",
    "LossReport",
    "gt_occlusion",
    "gt_confidence",
    "loss_occlusion",
    "loss_confidence",
    "loss_flow",
    "total_loss",
    "OCC_THRESHOLD_PX",
    "CONF_THRESHOLD_PX",
]

OCC_THRESHOLD_PX = 2.0
CONF_THRESHOLD_PX = 4.0
SMOOTH_L1_BETA = 1.0


@dataclass(frozen=True)
class LossWeights:
    lambda_F: float = 1.0
    lambda_conf: float = 0.1
    lambda_occ: float = 0.1

    def __post_init__(self):
        if min(self.lambda_F, self.lambda_conf, self.lambda_occ) < 0.0:
            raise ValueOutOfRange("LossWeights: weights must be >= 0")


@dataclass(frozen=True)
class LossReport:
    flow_loss: float
    conf_loss: float
    occ_loss: float
    total: float
    per_term: dict = field(default_factory=dict)


def _bilinear_sample_flow(flow: FlowField, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a flow field at continuous, in-bounds positions."""
    h, w = flow.height, flow.width
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    d = flow.data
    top = d[y0, x0] * (1 - fx) + d[y0, x1] * fx
    bot = d[y1, x0] * (1 - fx) + d[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def gt_occlusion(F_fwd: FlowField, F_bwd: FlowField, thresh_px: float = OCC_THRESHOLD_PX) -> OcclusionMap:
    """Binary occlusion ground truth from forward-backward consistency.

    A pixel is non-occluded (1) iff its forward target lands inside the
    frame and ``|F_fwd(p) + F_bwd(p + F_fwd(p))|`` is strictly below the
    threshold; the backward field is sampled bilinearly.
    """
    if (F_fwd.width, F_fwd.height) != (F_bwd.width, F_bwd.height):
        raise DimensionMismatch("gt_occlusion: flow fields disagree in size")
    h, w = F_fwd.height, F_fwd.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    tx = xs + F_fwd.u
    ty = ys + F_fwd.v
    in_bounds = (tx >= 0) & (tx <= w - 1) & (ty >= 0) & (ty <= h - 1)

    back = _bilinear_sample_flow(F_bwd, np.clip(tx, 0, w - 1), np.clip(ty, 0, h - 1))
    err = np.linalg.norm(F_fwd.data + back, axis=2)
    visible = in_bounds & (err < thresh_px)
    return OcclusionMap(w, h, visible.astype(np.float64), scale=F_fwd.scale)


def gt_confidence(F_pred: FlowField, F_gt: FlowField, thresh_px: float = CONF_THRESHOLD_PX) -> ConfidenceMap:
    """Indicator map: 1 where the endpoint error is strictly below the band."""
    if (F_pred.width, F_pred.height) != (F_gt.width, F_gt.height):
        raise DimensionMismatch("gt_confidence: flow fields disagree in size")
    err = np.linalg.norm(F_pred.data - F_gt.data, axis=2)
    return ConfidenceMap(
        F_pred.width, F_pred.height, (err < thresh_px).astype(np.float64), scale=F_pred.scale
    )


def _nonocc_mask(occ_gt: OcclusionMap) -> np.ndarray:
    mask = occ_gt.data > 0.5
    if not mask.any():
        raise EmptyMaskError("no non-occluded pixels to supervise")
    return mask


def loss_occlusion(preds: list[OcclusionMap], gt: OcclusionMap) -> float:
    """Sum over steps of the per-pixel mean L1 occlusion error."""
    if not preds:
        raise EmptyMaskError("loss_occlusion: empty prediction list")
    total = 0.0
    for p in preds:
        if (p.width, p.height) != (gt.width, gt.height):
            raise DimensionMismatch("loss_occlusion: prediction/gt size mismatch")
        total += float(np.abs(p.data - gt.data).mean())
    return total


def loss_confidence(
    preds: list[ConfidenceMap], gts: list[ConfidenceMap], occ_gt: OcclusionMap
) -> float:
    """Confidence loss: masked mean L1 at step 0, full-image mean after."""
    if not preds:
        raise EmptyMaskError("loss_confidence: empty prediction list")
    if len(preds) != len(gts):
        raise DimensionMismatch("loss_confidence: preds/gts length mismatch")
    mask = _nonocc_mask(occ_gt)
    total = 0.0
    for t, (p, g) in enumerate(zip(preds, gts)):
        diff = np.abs(p.data - g.data)
        if t == 0:
            total += float(diff[mask].sum() / mask.sum())
        else:
            total += float(diff.mean())
    return total


def _smooth_l1(x: np.ndarray, beta: float) -> np.ndarray:
    ax = np.abs(x)
    return np.where(ax < beta, 0.5 * x * x / beta, ax - 0.5 * beta)


def loss_flow(
    preds: list[FlowField],
    gt: FlowField,
    occ_gt: OcclusionMap,
    beta: float = SMOOTH_L1_BETA,
) -> float:
    """Flow loss, summed per channel and over steps.

    Step 0 uses smooth-L1 averaged over non-occluded pixels; later steps
    use plain L1 averaged over all pixels.
    """
    if not preds:
        raise EmptyMaskError("loss_flow: empty prediction list")
    mask = _nonocc_mask(occ_gt)
    n_pixels = gt.width * gt.height
    total = 0.0
    for t, p in enumerate(preds):
        if (p.width, p.height) != (gt.width, gt.height):
            raise DimensionMismatch("loss_flow: prediction/gt size mismatch")
        diff = p.data - gt.data
        if t == 0:
            per_channel = _smooth_l1(diff, beta)[mask].sum(axis=0) / mask.sum()
        else:
            per_channel = np.abs(diff).sum(axis=(0, 1)) / n_pixels
        total += float(per_channel.sum())
    return total


def total_loss(
    flow: float, conf: float, occ: float, w: LossWeights, per_term: dict | None = None
) -> LossReport:
    """Weighted combination of the three component losses."""
    total = w.lambda_F * flow + w.lambda_conf * conf + w.lambda_occ * occ
    return LossReport(
        flow_loss=flow,
        conf_loss=conf,
        occ_loss=occ,
        total=total,
        per_term=dict(per_term or {}),
    )
