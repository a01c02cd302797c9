"""Deterministic hand-crafted feature extraction at quarter resolution.

Stands in for a learned backbone. Each quarter-resolution cell gets a
descriptor built from three channel groups, each L2-normalized on its own
before being mixed with fixed energy weights:

* the mean-centered patch of pooled intensities around the cell — the
  normalized-cross-correlation core that tolerates small rotations, zooms
  and sub-cell misalignment (weight 0.8 of the energy);
* the 4x4 mean-pooled horizontal/vertical image gradients (0.1);
* a census signature: sign of center-minus-neighbor over the full-res
  8-neighborhood, mapped to +/-1 channels and folded by 4x4 mean pooling
  (0.1).

The gradient and census groups act as tie-breakers between patches that
look alike; keeping their energy share small is what preserves the patch
core's rotation tolerance. Per-group normalization (rather than one joint
norm) keeps the mixing ratio fixed per pixel, so matched descriptors score
a fixed convex mix of per-group correlations.

Flat patches come out as exact zero vectors on purpose: they should match
nothing and let the transport dustbin absorb them instead of fabricating
correspondences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otflow.core import DimensionMismatch, NonFiniteValue, ValueOutOfRange, _freeze

__all__ = ["FeatureMap", "extract_features", "BASE_CHANNELS", "PATCH_RADIUS"]

PATCH_RADIUS = 3  # pooled cells; 7x7 patch = 28 px full-res footprint

# intensity patch + pooled gradients (2) + census signs (8)
BASE_CHANNELS = (2 * PATCH_RADIUS + 1) ** 2 + 2 + 8

# energy share of each channel group (patch, gradients, census)
GROUP_WEIGHTS = (np.sqrt(0.8), np.sqrt(0.1), np.sqrt(0.1))

_LUMA = np.array([0.299, 0.587, 0.114])

_CENSUS_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


@dataclass(frozen=True)
class FeatureMap:
    """Per-pixel descriptor grid at quarter resolution, rows unit-norm or zero."""

    h: int
    w: int
    dim: int
    data: np.ndarray

    NORM_TOL = 1e-6

    def __post_init__(self):
        object.__setattr__(
            self,
            "data",
            _freeze(self.data, (self.h, self.w, self.dim), what="FeatureMap.data"),
        )
        self._validate()

    def _validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise NonFiniteValue("FeatureMap.data: non-finite value present")
        norms = np.linalg.norm(self.data, axis=2)
        bad = ~((np.abs(norms - 1.0) <= self.NORM_TOL) | (norms == 0.0))
        if bad.any():
            raise ValueOutOfRange(
                "FeatureMap.data: descriptors must be unit-norm or exactly zero"
            )

    def flat(self) -> np.ndarray:
        """Descriptors as an (h*w, dim) matrix, row-major."""
        return self.data.reshape(self.h * self.w, self.dim)


def _pool4(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    return x.reshape(h // 4, 4, w // 4, 4).mean(axis=(1, 3))


def _patch_channels(pooled: np.ndarray, radius: int) -> np.ndarray:
    """Neighborhood patch per cell (edge-replicated), centered on its own mean."""
    h, w = pooled.shape
    pad = np.pad(pooled, radius, mode="edge")
    out = np.empty((h, w, (2 * radius + 1) ** 2))
    idx = 0
    for dv in range(-radius, radius + 1):
        for du in range(-radius, radius + 1):
            out[:, :, idx] = pad[radius + dv : radius + dv + h, radius + du : radius + du + w]
            idx += 1
    return out - out.mean(axis=2, keepdims=True)


def _census_signs(image: np.ndarray) -> np.ndarray:
    """Full-res sign of center-minus-neighbor; 0 where the neighbor falls
    outside the image."""
    h, w = image.shape
    out = np.zeros((h, w, len(_CENSUS_OFFSETS)))
    for k, (dv, du) in enumerate(_CENSUS_OFFSETS):
        cv0, cv1 = max(0, -dv), h - max(0, dv)
        cu0, cu1 = max(0, -du), w - max(0, du)
        center = image[cv0:cv1, cu0:cu1]
        neighbor = image[cv0 + dv : cv1 + dv, cu0 + du : cu1 + du]
        out[cv0:cv1, cu0:cu1, k] = np.sign(center - neighbor)
    return out


def _normalized(channels: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(channels, axis=2, keepdims=True)
    return np.divide(channels, norms, out=np.zeros_like(channels), where=norms > 1e-12)


def extract_features(image: np.ndarray, dim: int = BASE_CHANNELS) -> FeatureMap:
    """Build the quarter-resolution descriptor grid of an image.

    ``image`` is a (H, W) or (H, W, 3) array with H and W divisible by 4.
    Descriptors are zero-padded up to ``dim`` when more channels are
    requested than the construction produces.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 3:
        if img.shape[2] != 3:
            raise DimensionMismatch("extract_features: color images need 3 channels")
        gray = img @ _LUMA
    elif img.ndim == 2:
        gray = img
    else:
        raise DimensionMismatch("extract_features: image must be 2-D or 3-D")
    big_h, big_w = gray.shape
    if big_h % 4 != 0 or big_w % 4 != 0:
        raise DimensionMismatch(
            f"extract_features: dimensions {big_w}x{big_h} must be divisible by 4"
        )
    if dim < BASE_CHANNELS:
        raise DimensionMismatch(
            f"extract_features: dim must be >= {BASE_CHANNELS}, got {dim}"
        )

    pooled = _pool4(gray)
    gv, gu = np.gradient(gray)
    census = _census_signs(gray)
    h, w = pooled.shape

    w_patch, w_grad, w_census = GROUP_WEIGHTS
    channels = np.zeros((h, w, dim))
    n_patch = (2 * PATCH_RADIUS + 1) ** 2
    channels[:, :, :n_patch] = w_patch * _normalized(_patch_channels(pooled, PATCH_RADIUS))
    channels[:, :, n_patch : n_patch + 2] = w_grad * _normalized(
        np.stack([_pool4(gu), _pool4(gv)], axis=2)
    )
    channels[:, :, n_patch + 2 : BASE_CHANNELS] = w_census * _normalized(
        np.stack([_pool4(census[:, :, k]) for k in range(len(_CENSUS_OFFSETS))], axis=2)
    )
    return FeatureMap(h=h, w=w, dim=dim, data=_normalized(channels))
