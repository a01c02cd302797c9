"""Initial flow, confidence and occlusion maps derived from a transport plan.

All three read the plan per source pixel: flow is the stabilized
mass-weighted centroid of a window around the strongest match, confidence
the probability mass captured by that window, and occlusion the total mass
assigned to valid targets (the complement of the dustbin mass).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otflow import backend
from otflow.core import ConfidenceMap, FlowField, OcclusionMap, ProbabilityVolume, ValueOutOfRange

__all__ = ["WindowSpec", "init_flow", "init_confidence", "init_occlusion"]


@dataclass(frozen=True)
class WindowSpec:
    """Peak window radius (quarter-res cells) and centroid stabilizer."""

    radius: int = 2
    eps_denom: float = 1e-8

    def __post_init__(self):
        if self.radius < 0:
            raise ValueOutOfRange("WindowSpec: radius must be >= 0")
        if not (self.eps_denom > 0.0):
            raise ValueOutOfRange("WindowSpec: eps_denom must be > 0")


def init_flow(P: ProbabilityVolume, w: WindowSpec) -> FlowField:
    """Windowed soft-argmax flow at quarter resolution.

    Per source pixel: find the highest-mass target (ties break to the
    smallest row-major index), then take the mass-weighted centroid of the
    window of ``w.radius`` around it, clipped to the grid. The stabilizer
    pulls the centroid toward the peak, so a point mass gives exactly
    integer flow and an all-zero row degrades to the tie-broken argmax.
    """
    u_hat, v_hat, _ = backend.peak_window_stats(
        P.data, P.h, P.w, w.radius, w.eps_denom
    )
    us = np.arange(P.w, dtype=np.float64)
    vs = np.arange(P.h, dtype=np.float64)
    du = u_hat.reshape(P.h, P.w) - us[None, :]
    dv = v_hat.reshape(P.h, P.w) - vs[:, None]
    return FlowField(P.w, P.h, np.stack([du, dv], axis=2), scale=4)


def init_confidence(P: ProbabilityVolume, w: WindowSpec) -> ConfidenceMap:
    """Probability mass captured by the peak window, per source pixel."""
    _, _, mass = backend.peak_window_stats(P.data, P.h, P.w, w.radius, w.eps_denom)
    conf = np.clip(mass.reshape(P.h, P.w), 0.0, 1.0)
    return ConfidenceMap(P.w, P.h, conf, scale=4)


def init_occlusion(P: ProbabilityVolume) -> OcclusionMap:
    """Total valid-target mass per source pixel (1 minus the dustbin mass)."""
    occ = np.clip(P.data.sum(axis=1).reshape(P.h, P.w), 0.0, 1.0)
    return OcclusionMap(P.w, P.h, occ, scale=4)
