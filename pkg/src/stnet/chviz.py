"""Class-Hypothesis map rendering.

A CH map counts, per input pixel, how many attended anchors cast an
RF-sized box over it, then smooths the counts with a Gaussian.  Rendering
min-max normalizes to 8-bit grayscale; flat maps render mid-gray.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from stnet import kernels
from stnet.tensor import RFGeometry

__all__ = ["CHMap", "ch_accumulate", "gaussian_smooth", "render", "render_overlay"]


@dataclass(frozen=True)
class CHMap:
    values: np.ndarray

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def ch_accumulate(points, geom: RFGeometry, image_hw: tuple[int, int]) -> CHMap:
    """+1 over the rf-sized box centered at each anchor, clipped to bounds.

    Boxes start ``rf_size // 2`` pixels before the anchor and span
    ``rf_size`` pixels per axis.
    """
    h, w = image_hw
    anchors = np.asarray(list(points), dtype=np.int64).reshape(-1, 2)
    counts = kernels.box_votes(h, w, anchors, geom.rf_size)
    return CHMap(values=counts)


def gaussian_smooth(chmap: CHMap, sigma: float = 6.0) -> CHMap:
    """Separable Gaussian blur, kernel radius ceil(3*sigma), unit kernel sum."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return CHMap(values=kernels.gaussian_blur(chmap.values, sigma))


def to_gray(chmap: CHMap) -> np.ndarray:
    """Min-max normalize to uint8; a constant map becomes all 128."""
    v = chmap.values
    lo = float(v.min())
    hi = float(v.max())
    if hi == lo:
        return np.full(v.shape, 128, dtype=np.uint8)
    scaled = np.floor((v - lo) / (hi - lo) * 255.0 + 0.5)
    return scaled.astype(np.uint8)


def render(chmap: CHMap, path) -> None:
    """Write the map as a binary PGM."""
    from stnet.model_io import write_pgm

    write_pgm(to_gray(chmap), path)


def render_overlay(chmap: CHMap, source_rgb: np.ndarray, path) -> None:
    """Blend a blue-to-red heat ramp of the map 50/50 onto an RGB image."""
    gray = to_gray(chmap).astype(np.float64)
    if source_rgb.shape[:2] != gray.shape:
        raise ValueError("overlay source dims differ from the map")
    heat = np.stack([gray, np.zeros_like(gray), 255.0 - gray], axis=-1)
    src = source_rgb.astype(np.float64)
    if src.ndim == 2:
        src = np.stack([src] * 3, axis=-1)
    blended = np.floor(0.5 * src + 0.5 * heat + 0.5).astype(np.uint8)
    from stnet.model_io import write_ppm

    write_ppm(blended, path)
