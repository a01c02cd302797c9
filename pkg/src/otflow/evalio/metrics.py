"""Benchmark metrics: endpoint error, outlier rates and the KITTI rule.

Masks follow the package-wide convention: value 1 selects a pixel (non-
occluded, or valid in the KITTI sense). ``fl_all`` uses the KITTI outlier
definition — endpoint error above 3 px *and* above 5% of the ground-truth
magnitude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otflow.core import DimensionMismatch, EmptyMaskError, FlowField, OcclusionMap, ValueOutOfRange

__all__ = ["MetricReport", "epe", "outlier_rate", "fl_all", "compute_report"]

FL_EPE_PX = 3.0
FL_RELATIVE = 0.05


@dataclass(frozen=True)
class MetricReport:
    epe_all: float
    epe_nonocc: float | None
    outlier_1px: float
    outlier_3px: float
    outlier_5px: float
    fl_all: float

    def __post_init__(self):
        rates = [self.outlier_1px, self.outlier_3px, self.outlier_5px, self.fl_all]
        if any(not (0.0 <= r <= 100.0) for r in rates):
            raise ValueOutOfRange("MetricReport: percentages must lie in [0, 100]")
        if self.epe_all < 0.0:
            raise ValueOutOfRange("MetricReport: EPE must be >= 0")


def _per_pixel_epe(pred: FlowField, gt: FlowField) -> np.ndarray:
    if (pred.width, pred.height) != (gt.width, gt.height):
        raise DimensionMismatch("metrics: prediction/gt size mismatch")
    return np.linalg.norm(pred.data - gt.data, axis=2)


def _selection(shape, mask: OcclusionMap | np.ndarray | None) -> np.ndarray:
    if mask is None:
        return np.ones(shape, dtype=bool)
    data = mask.data if isinstance(mask, OcclusionMap) else np.asarray(mask)
    if data.shape != shape:
        raise DimensionMismatch("metrics: mask size mismatch")
    sel = data > 0.5
    if not sel.any():
        raise EmptyMaskError("metrics: mask selects no pixels")
    return sel


def epe(pred: FlowField, gt: FlowField, mask: OcclusionMap | np.ndarray | None = None) -> float:
    """Mean endpoint error in pixels over the (optionally masked) image."""
    err = _per_pixel_epe(pred, gt)
    sel = _selection(err.shape, mask)
    return float(err[sel].mean())


def outlier_rate(
    pred: FlowField,
    gt: FlowField,
    thresh_px: float,
    mask: OcclusionMap | np.ndarray | None = None,
) -> float:
    """Percentage of selected pixels with endpoint error above the threshold."""
    err = _per_pixel_epe(pred, gt)
    sel = _selection(err.shape, mask)
    return float((err[sel] > thresh_px).mean() * 100.0)


def fl_all(
    pred: FlowField, gt: FlowField, mask: OcclusionMap | np.ndarray | None = None
) -> float:
    """KITTI outlier percentage: EPE > 3 px and > 5% of GT magnitude."""
    err = _per_pixel_epe(pred, gt)
    sel = _selection(err.shape, mask)
    mag = np.linalg.norm(gt.data, axis=2)
    bad = (err > FL_EPE_PX) & (err > FL_RELATIVE * mag)
    return float(bad[sel].mean() * 100.0)


def compute_report(
    pred: FlowField,
    gt: FlowField,
    occ: OcclusionMap | None = None,
    valid: OcclusionMap | np.ndarray | None = None,
) -> MetricReport:
    """Full metric set; ``valid`` restricts every metric, ``occ`` only adds
    the non-occluded EPE column."""
    epe_nonocc = None
    if occ is not None:
        sel = occ.data > 0.5
        if valid is not None:
            sel = sel & _selection(sel.shape, valid)
        epe_nonocc = epe(pred, gt, sel)
    return MetricReport(
        epe_all=epe(pred, gt, valid),
        epe_nonocc=epe_nonocc,
        outlier_1px=outlier_rate(pred, gt, 1.0, valid),
        outlier_3px=outlier_rate(pred, gt, 3.0, valid),
        outlier_5px=outlier_rate(pred, gt, 5.0, valid),
        fl_all=fl_all(pred, gt, valid),
    )
