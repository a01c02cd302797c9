"""Synthetic scenes with analytic ground truth, for desk-scale evaluation.

Textures are seeded band-limited noise with power concentrated at 4-16 px
wavelengths — coarse enough to survive quarter-resolution pooling, fine
enough that every cell's descriptor is unique (no aperture ambiguity).
Motions are a global translation, an invertible affine map, or moving
rectangles layered over a static background (later rectangles are nearer).
Ground-truth occlusion marks pixels whose target leaves the frame or is
covered by a nearer layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from otflow.core import DimensionMismatch, FlowField, ImagePair, OcclusionMap, ValueOutOfRange

__all__ = [
    "Translation",
    "AffineMotion",
    "MovingRect",
    "Layered",
    "SceneSpec",
    "affine_about_center",
    "band_noise",
    "synth_scene",
]

WAVELENGTH_MIN = 4.0
WAVELENGTH_MAX = 32.0
SPECTRAL_TILT = 1.0


@dataclass(frozen=True)
class Translation:
    du: float
    dv: float


@dataclass(frozen=True)
class AffineMotion:
    """Forward map ``p -> matrix @ [x, y, 1]`` with a 2x3 matrix."""

    matrix: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise DimensionMismatch("AffineMotion: matrix must be 2x3")
        det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
        if abs(det) < 1e-10:
            raise ValueOutOfRange("AffineMotion: degenerate (non-invertible) matrix")
        object.__setattr__(self, "matrix", tuple(map(tuple, m)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=np.float64)


@dataclass(frozen=True)
class MovingRect:
    """Half-open rectangle [x0, x1) x [y0, y1) translating by integer (du, dv)."""

    x0: int
    y0: int
    x1: int
    y1: int
    du: int
    dv: int

    def __post_init__(self):
        if self.x1 <= self.x0 or self.y1 <= self.y0:
            raise ValueOutOfRange("MovingRect: empty rectangle")


@dataclass(frozen=True)
class Layered:
    """Moving rectangles over a static background; later entries are nearer."""

    rects: tuple

    def __post_init__(self):
        object.__setattr__(self, "rects", tuple(self.rects))
        if not self.rects:
            raise ValueOutOfRange("Layered: needs at least one rectangle")


@dataclass(frozen=True)
class SceneSpec:
    width: int
    height: int
    motion: Translation | AffineMotion | Layered
    texture_seed: int = 0

    def __post_init__(self):
        if self.width % 4 != 0 or self.height % 4 != 0:
            raise DimensionMismatch(
                f"SceneSpec: {self.width}x{self.height} must be divisible by 4"
            )


def affine_about_center(
    width: int, height: int, rotation_deg: float = 0.0, zoom: float = 1.0
) -> AffineMotion:
    """Rotation + isotropic zoom about the image center as a forward affine."""
    theta = np.deg2rad(rotation_deg)
    c, s = np.cos(theta), np.sin(theta)
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    lin = zoom * np.array([[c, -s], [s, c]])
    shift = np.array([cx, cy]) - lin @ np.array([cx, cy])
    return AffineMotion(((lin[0, 0], lin[0, 1], shift[0]), (lin[1, 0], lin[1, 1], shift[1])))


def band_noise(height: int, width: int, seed: int) -> np.ndarray:
    """Seeded noise with spectral power restricted to matchable wavelengths.

    The band must be wide: narrow-band noise is quasi-periodic and makes
    distant patches look alike, which produces coherent aliased matches. A
    mild red tilt inside the band favors the wavelengths that survive 4x4
    pooling and sub-cell misalignment.
    """
    rng = np.random.default_rng(seed)
    white = rng.standard_normal((height, width))
    spectrum = np.fft.rfft2(white)
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.rfftfreq(width)[None, :]
    radial = np.hypot(fx, fy)
    keep = (radial >= 1.0 / WAVELENGTH_MAX) & (radial <= 1.0 / WAVELENGTH_MIN)
    shaping = np.where(keep, (1.0 / np.maximum(radial, 1e-9)) ** SPECTRAL_TILT, 0.0)
    tex = np.fft.irfft2(spectrum * shaping, s=(height, width))
    peak = np.abs(tex).max()
    if peak > 0:
        tex = tex / peak
    return 0.5 + 0.45 * tex


def _bilinear(image: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample a grayscale image at continuous positions, clamping at borders."""
    h, w = image.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = image[y0, x0] * (1 - fx) + image[y0, x1] * fx
    bot = image[y1, x0] * (1 - fx) + image[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _in_frame(tx: np.ndarray, ty: np.ndarray, width: int, height: int) -> np.ndarray:
    return (tx >= 0) & (tx <= width - 1) & (ty >= 0) & (ty <= height - 1)


def _rect_mask(rect: MovingRect, width: int, height: int, shifted: bool) -> np.ndarray:
    dx = rect.du if shifted else 0
    dy = rect.dv if shifted else 0
    mask = np.zeros((height, width), dtype=bool)
    x0 = max(0, rect.x0 + dx)
    x1 = min(width, rect.x1 + dx)
    y0 = max(0, rect.y0 + dy)
    y1 = min(height, rect.y1 + dy)
    if x1 > x0 and y1 > y0:
        mask[y0:y1, x0:x1] = True
    return mask


def synth_scene(spec: SceneSpec) -> tuple[ImagePair, FlowField, OcclusionMap]:
    """Render a scene pair with its analytic flow and occlusion ground truth."""
    w, h = spec.width, spec.height
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    seeds = np.random.SeedSequence(spec.texture_seed).generate_state(16)
    i1 = band_noise(h, w, int(seeds[0]))

    if isinstance(spec.motion, Translation):
        du, dv = spec.motion.du, spec.motion.dv
        i2 = _bilinear(i1, xs - du, ys - dv)
        flow = np.empty((h, w, 2))
        flow[:, :, 0] = du
        flow[:, :, 1] = dv
        visible = _in_frame(xs + du, ys + dv, w, h)

    elif isinstance(spec.motion, AffineMotion):
        m = spec.motion.as_array()
        lin, shift = m[:, :2], m[:, 2]
        inv = np.linalg.inv(lin)
        src_x = inv[0, 0] * (xs - shift[0]) + inv[0, 1] * (ys - shift[1])
        src_y = inv[1, 0] * (xs - shift[0]) + inv[1, 1] * (ys - shift[1])
        i2 = _bilinear(i1, src_x, src_y)
        tx = lin[0, 0] * xs + lin[0, 1] * ys + shift[0]
        ty = lin[1, 0] * xs + lin[1, 1] * ys + shift[1]
        flow = np.stack([tx - xs, ty - ys], axis=2)
        visible = _in_frame(tx, ty, w, h)

    elif isinstance(spec.motion, Layered):
        rects = spec.motion.rects
        textures = [band_noise(h, w, int(seeds[1 + k % 15])) for k in range(len(rects))]
        # nearest layer wins: paint far-to-near
        i2 = i1.copy()
        layer_of = np.full((h, w), -1)  # -1 = background
        for k, (rect, tex) in enumerate(zip(rects, textures)):
            m1 = _rect_mask(rect, w, h, shifted=False)
            i1 = np.where(m1, tex, i1)
            layer_of = np.where(m1, k, layer_of)
            m2 = _rect_mask(rect, w, h, shifted=True)
            shifted_tex = _bilinear(tex, xs - rect.du, ys - rect.dv)
            i2 = np.where(m2, shifted_tex, i2)
        flow = np.zeros((h, w, 2))
        for k, rect in enumerate(rects):
            sel = layer_of == k
            flow[sel, 0] = rect.du
            flow[sel, 1] = rect.dv
        tx = xs + flow[:, :, 0]
        ty = ys + flow[:, :, 1]
        visible = _in_frame(tx, ty, w, h)
        # covered by a strictly nearer layer at the target position
        txi = np.round(tx).astype(int)
        tyi = np.round(ty).astype(int)
        txi_c = np.clip(txi, 0, w - 1)
        tyi_c = np.clip(tyi, 0, h - 1)
        for j, rect in enumerate(rects):
            m2 = _rect_mask(rect, w, h, shifted=True)
            covered = m2[tyi_c, txi_c] & (layer_of < j)
            visible &= ~covered

    else:
        raise TypeError(f"synth_scene: unsupported motion {type(spec.motion)!r}")

    pair = ImagePair(I1=np.clip(i1, 0.0, 1.0), I2=np.clip(i2, 0.0, 1.0))
    gt_flow = FlowField(w, h, flow, scale=1)
    gt_occ = OcclusionMap(w, h, visible.astype(np.float64), scale=1)
    return pair, gt_flow, gt_occ
