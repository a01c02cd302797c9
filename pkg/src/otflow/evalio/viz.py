"""Color-wheel rendering of flow fields.

Hue encodes direction (``atan2(dv, du)``), saturation encodes magnitude
normalized by ``max_mag`` (the 99th-percentile magnitude unless given, for
robustness to single-pixel outliers), value stays at 1 — so zero flow
renders white and a saturated +u flow renders the wheel's 0-radian color.
"""

from __future__ import annotations

import numpy as np
from matplotlib.colors import hsv_to_rgb

from otflow.core import FlowField

__all__ = ["visualize_flow"]

NORM_PERCENTILE = 99.0


def visualize_flow(f: FlowField, max_mag: float | None = None) -> np.ndarray:
    """Render a full-resolution flow field to an (H, W, 3) uint8 RGB image."""
    mag = np.linalg.norm(f.data, axis=2)
    if max_mag is None:
        max_mag = float(np.percentile(mag, NORM_PERCENTILE))
    angle = np.arctan2(f.v, f.u)

    hsv = np.zeros((f.height, f.width, 3))
    hsv[:, :, 0] = (angle / (2.0 * np.pi)) % 1.0
    hsv[:, :, 1] = np.clip(mag / max_mag, 0.0, 1.0) if max_mag > 0 else 0.0
    hsv[:, :, 2] = 1.0
    rgb = hsv_to_rgb(hsv)
    return np.round(rgb * 255.0).astype(np.uint8)
