"""Evaluation toolkit: metrics, flow file formats, visualization and the
synthetic scene generator."""

from otflow.evalio.formats import (
    FLO_MAGIC,
    FormatError,
    read_flo,
    read_image,
    read_kitti_png,
    write_flo,
    write_kitti_png,
    write_png8,
)
from otflow.evalio.metrics import MetricReport, compute_report, epe, fl_all, outlier_rate
from otflow.evalio.synth import (
    AffineMotion,
    Layered,
    MovingRect,
    SceneSpec,
    Translation,
    affine_about_center,
    band_noise,
    synth_scene,
)
from otflow.evalio.viz import visualize_flow

__all__ = [
    "FLO_MAGIC",
    "FormatError",
    "read_flo",
    "read_image",
    "read_kitti_png",
    "write_flo",
    "write_kitti_png",
    "write_png8",
    "MetricReport",
    "compute_report",
    "epe",
    "fl_all",
    "outlier_rate",
    "AffineMotion",
    "Layered",
    "MovingRect",
    "SceneSpec",
    "Translation",
    "affine_about_center",
    "band_noise",
    "synth_scene",
    "visualize_flow",
]
