"""Numpy implementations of the hot kernels.

Used when the compiled extension is unavailable or explicitly disabled
(``STNET_BACKEND=python``).  Contracts are identical to
``stnet.kernels._core``: float32 tensors in channel-outermost ``(c,h,w)``
layout, reductions accumulated in float64.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Cross-correlation of ``x`` (cin,h,w) with ``w`` (cout,cin,k,k) plus bias."""
    cin, h, wid = x.shape
    cout, cin_w, k, _ = w.shape
    if cin_w != cin:
        raise ValueError(f"input has {cin} channels, kernel expects {cin_w}")
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wid + 2 * padding - k) // stride + 1
    xp = x
    if padding:
        xp = np.zeros((cin, h + 2 * padding, wid + 2 * padding), dtype=x.dtype)
        xp[:, padding:padding + h, padding:padding + wid] = x
    acc = np.zeros((cout, oh, ow), dtype=np.float64)
    w64 = w.astype(np.float64)
    for kh in range(k):
        for kw in range(k):
            patch = xp[:, kh:kh + stride * oh:stride, kw:kw + stride * ow:stride]
            acc += np.einsum("oi,ihw->ohw", w64[:, :, kh, kw], patch, optimize=True)
    acc += b.astype(np.float64)[:, None, None]
    return acc.astype(np.float32)


def maxpool2d(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """Per-channel max over k x k windows; padded positions never win."""
    c, h, w = x.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    xp = x
    if padding:
        xp = np.full((c, h + 2 * padding, w + 2 * padding), -np.inf, dtype=x.dtype)
        xp[:, padding:padding + h, padding:padding + w] = x
    out = np.full((c, oh, ow), -np.inf, dtype=x.dtype)
    for kh in range(k):
        for kw in range(k):
            np.maximum(out, xp[:, kh:kh + stride * oh:stride, kw:kw + stride * ow:stride], out=out)
    return out


def avgpool2d(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    """Per-channel window mean divided by k*k (padding counts as zero)."""
    c, h, w = x.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    xp = x
    if padding:
        xp = np.zeros((c, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
        xp[:, padding:padding + h, padding:padding + w] = x
    acc = np.zeros((c, oh, ow), dtype=np.float64)
    for kh in range(k):
        for kw in range(k):
            acc += xp[:, kh:kh + stride * oh:stride, kw:kw + stride * ow:stride]
    return (acc / (k * k)).astype(np.float32)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1D Gaussian taps truncated at radius ceil(3*sigma)."""
    radius = math.ceil(3.0 * sigma)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (xs / sigma) ** 2)
    return kern / kern.sum()


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with reflect padding (border pixel not duplicated)."""
    kern = gaussian_kernel(sigma)
    radius = (len(kern) - 1) // 2
    out = np.asarray(img, dtype=np.float64)
    for axis in (0, 1):
        n = out.shape[axis]
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        padded = np.pad(out, pad, mode="reflect") if n > 1 else np.pad(out, pad, mode="edge")
        moved = np.moveaxis(padded, axis, -1)
        smoothed = np.apply_along_axis(lambda row: np.convolve(row, kern, mode="valid"), -1, moved)
        out = np.moveaxis(smoothed, -1, axis)
    return out


def box_votes(height: int, width: int, anchors: np.ndarray, rf: int) -> np.ndarray:
    """Vote counts: +1 per pixel inside the rf-sized box centered at each anchor.

    Boxes start ``rf // 2`` before the anchor and span ``rf`` pixels, clipped
    to the image bounds.
    """
    counts = np.zeros((height, width), dtype=np.float64)
    half = rf // 2
    for r, c in anchors:
        r0 = max(int(r) - half, 0)
        c0 = max(int(c) - half, 0)
        r1 = min(int(r) - half + rf, height)
        c1 = min(int(c) - half + rf, width)
        if r0 < r1 and c0 < c1:
            counts[r0:r1, c0:c1] += 1.0
    return counts
