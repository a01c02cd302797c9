"""Dense grid value types shared by every stage of the pipeline.

Conventions used throughout the package:

* coordinates are ``(u, v)`` with ``u`` the column and ``v`` the row;
* storage is row-major (``v`` outer, ``u`` inner) — always go through
  :func:`flat_index` / :func:`grid_coords` instead of hand-rolling
  ``v * w + u``;
* grids carry an explicit ``scale`` tag (1 = full resolution, 4 = quarter
  resolution) so values at different resolutions cannot be mixed silently;
* every value is immutable after construction (backing arrays are marked
  read-only) and fully validated, so instances are safe to share across
  threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from otflow.matching import SinkhornDiagnostics

__all__ = [
    "ValidationError",
    "DimensionMismatch",
    "ValueOutOfRange",
    "NonFiniteValue",
    "EmptyMaskError",
    "flat_index",
    "grid_coords",
    "FlowField",
    "ConfidenceMap",
    "OcclusionMap",
    "CostVolume",
    "ProbabilityVolume",
    "ImagePair",
    "RefineState",
    "validate",
]


class ValidationError(ValueError):
    """A grid value violates one of its type invariants."""


class DimensionMismatch(ValidationError):
    """Array extents do not agree with the declared width/height/channels."""


class ValueOutOfRange(ValidationError):
    """A value lies outside the admissible range of its grid type."""


class NonFiniteValue(ValidationError):
    """NaN or infinity found where only finite values are allowed."""


class EmptyMaskError(ValueError):
    """A masked reduction was requested with zero selected pixels."""


def flat_index(u, v, width):
    """Row-major flat index of pixel ``(u, v)`` on a grid of width ``width``."""
    return v * width + u


def grid_coords(index, width):
    """Inverse of :func:`flat_index`: returns ``(u, v)``."""
    return index % width, index // width


def _freeze(data, shape, *, what: str) -> np.ndarray:
    """Coerce to a read-only, C-contiguous float64 array of ``shape``.

    Flat input of matching size is reshaped (row-major), anything else is a
    dimension mismatch.
    """
    arr = np.asarray(data, dtype=np.float64)
    want = int(np.prod(shape))
    if arr.size != want:
        raise DimensionMismatch(
            f"{what}: expected {want} values for shape {shape}, got {arr.size}"
        )
    if arr.shape != tuple(shape):
        arr = arr.reshape(shape)
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"{what}: non-finite value present")


def _require_unit_range(arr: np.ndarray, what: str) -> None:
    _require_finite(arr, what)
    lo = float(arr.min(initial=0.0))
    hi = float(arr.max(initial=0.0))
    if lo < 0.0 or hi > 1.0:
        raise ValueOutOfRange(f"{what}: values must lie in [0, 1], found [{lo}, {hi}]")


def _check_scale(scale: int, what: str) -> None:
    if scale not in (1, 4):
        raise ValueOutOfRange(f"{what}: scale must be 1 or 4, got {scale}")


@dataclass(frozen=True)
class FlowField:
    """Dense 2-channel displacement grid.

    ``data[v, u]`` holds ``(du, dv)`` measured in pixels *at this scale*:
    a scale-4 field stores quarter-resolution cell displacements (the
    conversion to full-resolution pixels happens in convex upsampling).
    """

    width: int
    height: int
    data: np.ndarray
    scale: int = 1

    def __post_init__(self):
        object.__setattr__(
            self,
            "data",
            _freeze(self.data, (self.height, self.width, 2), what="FlowField.data"),
        )
        self._validate()

    def _validate(self) -> None:
        _check_scale(self.scale, "FlowField")
        _require_finite(self.data, "FlowField.data")

    @property
    def u(self) -> np.ndarray:
        """Horizontal displacement component, shape (height, width)."""
        return self.data[:, :, 0]

    @property
    def v(self) -> np.ndarray:
        """Vertical displacement component, shape (height, width)."""
        return self.data[:, :, 1]

    @staticmethod
    def zeros(width: int, height: int, scale: int = 1) -> "FlowField":
        return FlowField(width, height, np.zeros((height, width, 2)), scale)

    @staticmethod
    def constant(width: int, height: int, du: float, dv: float, scale: int = 1) -> "FlowField":
        data = np.empty((height, width, 2))
        data[:, :, 0] = du
        data[:, :, 1] = dv
        return FlowField(width, height, data, scale)


@dataclass(frozen=True)
class ConfidenceMap:
    """Per-pixel matching confidence in [0, 1]."""

    width: int
    height: int
    data: np.ndarray
    scale: int = 1

    def __post_init__(self):
        object.__setattr__(
            self,
            "data",
            _freeze(self.data, (self.height, self.width), what="ConfidenceMap.data"),
        )
        self._validate()

    def _validate(self) -> None:
        _check_scale(self.scale, "ConfidenceMap")
        _require_unit_range(self.data, "ConfidenceMap.data")


@dataclass(frozen=True)
class OcclusionMap:
    """Per-pixel probability of having a valid correspondence, in [0, 1].

    Value 1 means non-occluded. Ground-truth maps are exactly binary.
    """

    width: int
    height: int
    data: np.ndarray
    scale: int = 1

    def __post_init__(self):
        object.__setattr__(
            self,
            "data",
            _freeze(self.data, (self.height, self.width), what="OcclusionMap.data"),
        )
        self._validate()

    def _validate(self) -> None:
        _check_scale(self.scale, "OcclusionMap")
        _require_unit_range(self.data, "OcclusionMap.data")


@dataclass(frozen=True)
class CostVolume:
    """All-pairs similarity scores between two quarter-resolution grids.

    Logically indexed ``C(u, v, u', v')``; stored as an ``(h*w, h*w)``
    matrix with both axes flattened row-major (see :func:`flat_index`).
    """

    h: int
    w: int
    data: np.ndarray

    def __post_init__(self):
        n = self.h * self.w
        object.__setattr__(
            self, "data", _freeze(self.data, (n, n), what="CostVolume.data")
        )
        self._validate()

    def _validate(self) -> None:
        _require_finite(self.data, "CostVolume.data")

    def score(self, u: int, v: int, u2: int, v2: int) -> float:
        return float(self.data[flat_index(u, v, self.w), flat_index(u2, v2, self.w)])


@dataclass(frozen=True)
class ProbabilityVolume:
    """Transport plan over source/target pixels plus dustbin masses.

    ``data[i, j]`` is the mass source pixel ``i`` sends to valid target
    ``j``; ``dustbin_src[i]`` is the mass it sends to the target dustbin,
    ``dustbin_tgt[j]`` the mass the source dustbin sends to target ``j``,
    and ``corner`` the dustbin-to-dustbin mass. Every valid source row
    (valid targets + its dustbin entry) sums to 1.
    """

    h: int
    w: int
    data: np.ndarray
    dustbin_src: np.ndarray
    dustbin_tgt: np.ndarray
    corner: float
    diagnostics: "SinkhornDiagnostics | None" = field(default=None, compare=False)

    ROW_SUM_TOL = 1e-6

    def __post_init__(self):
        n = self.h * self.w
        object.__setattr__(
            self, "data", _freeze(self.data, (n, n), what="ProbabilityVolume.data")
        )
        object.__setattr__(
            self,
            "dustbin_src",
            _freeze(self.dustbin_src, (n,), what="ProbabilityVolume.dustbin_src"),
        )
        object.__setattr__(
            self,
            "dustbin_tgt",
            _freeze(self.dustbin_tgt, (n,), what="ProbabilityVolume.dustbin_tgt"),
        )
        self._validate()

    def _validate(self) -> None:
        for name in ("data", "dustbin_src", "dustbin_tgt"):
            arr = getattr(self, name)
            _require_finite(arr, f"ProbabilityVolume.{name}")
            if arr.size and float(arr.min()) < 0.0:
                raise ValueOutOfRange(f"ProbabilityVolume.{name}: negative mass")
        if not np.isfinite(self.corner) or self.corner < 0.0:
            raise ValueOutOfRange("ProbabilityVolume.corner: must be finite and >= 0")
        row_sums = self.data.sum(axis=1) + self.dustbin_src
        err = float(np.abs(row_sums - 1.0).max(initial=0.0))
        if err > self.ROW_SUM_TOL:
            raise ValueOutOfRange(
                f"ProbabilityVolume: source row sums off by {err:.2e} (> {self.ROW_SUM_TOL})"
            )

    def mass(self, u: int, v: int, u2: int, v2: int) -> float:
        return float(self.data[flat_index(u, v, self.w), flat_index(u2, v2, self.w)])


@dataclass(frozen=True)
class ImagePair:
    """Two grayscale or RGB frames of identical size, values in [0, 1].

    Dimensions must be divisible by 4 (the matching stage works at quarter
    resolution).
    """

    I1: np.ndarray
    I2: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.I1, dtype=np.float64))
        b = np.ascontiguousarray(np.asarray(self.I2, dtype=np.float64))
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "I1", a)
        object.__setattr__(self, "I2", b)
        self._validate()

    def _validate(self) -> None:
        if self.I1.shape != self.I2.shape:
            raise DimensionMismatch(
                f"ImagePair: shapes differ {self.I1.shape} vs {self.I2.shape}"
            )
        if self.I1.ndim == 3:
            if self.I1.shape[2] != 3:
                raise DimensionMismatch("ImagePair: color images must have 3 channels")
        elif self.I1.ndim != 2:
            raise DimensionMismatch("ImagePair: images must be 2-D or 3-D arrays")
        h, w = self.I1.shape[:2]
        if h % 4 != 0 or w % 4 != 0:
            raise DimensionMismatch(
                f"ImagePair: dimensions {w}x{h} must be divisible by 4"
            )
        _require_unit_range(self.I1, "ImagePair.I1")
        _require_unit_range(self.I2, "ImagePair.I2")

    @property
    def width(self) -> int:
        return self.I1.shape[1]

    @property
    def height(self) -> int:
        return self.I1.shape[0]


@dataclass(frozen=True)
class RefineState:
    """Bundle (flow, confidence, occlusion, step) threaded through refinement."""

    flow: FlowField
    confidence: ConfidenceMap
    occlusion: OcclusionMap
    step: int = 0

    def __post_init__(self):
        self._validate()

    def _validate(self) -> None:
        dims = {
            (g.width, g.height, g.scale)
            for g in (self.flow, self.confidence, self.occlusion)
        }
        if len(dims) != 1:
            raise DimensionMismatch(f"RefineState: grids disagree on (w, h, scale): {dims}")
        if self.flow.scale != 4:
            raise ValueOutOfRange("RefineState: refinement state lives at scale 4")
        if self.step < 0:
            raise ValueOutOfRange("RefineState: step must be >= 0")


def validate(grid) -> None:
    """Re-check all invariants of a core grid value.

    Constructors already validate, so this is mainly useful after external
    deserialization or for idempotence checks. Raises a
    :class:`ValidationError` subclass on the first violation.
    """
    grid._validate()
