"""Dense volume containers and receptive-field geometry arithmetic.

Feature and gating volumes are stored channel-outermost, shape
``(channels, height, width)`` C-contiguous, so each 2D spatial sheet is
contiguous in memory.  Flattening a volume therefore concatenates the
channel sheets: flat index = ``c*H*W + h*W + w``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FeatureVolume",
    "GatingVolume",
    "RFGeometry",
    "GeometryError",
    "rf_geometry",
    "rf_window",
]


class GeometryError(ValueError):
    """Receptive-field geometry is not defined for the given layers."""


@dataclass(frozen=True)
class FeatureVolume:
    """Hidden-node activities of one layer, ``(channels, height, width)`` float32.

    Immutable once produced; shared read-only by the top-down pass.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"feature volume must be 3D (c,h,w), got shape {arr.shape}")
        object.__setattr__(self, "data", arr)
        arr.flags.writeable = False

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def check_finite(self) -> "FeatureVolume":
        if not np.isfinite(self.data).all():
            raise FloatingPointError("non-finite activation in feature volume")
        return self


class GatingVolume:
    """Top-down gating activities, same shape as the feature volume it tunes.

    Entries are nonnegative float64; the volume is mutable while a layer's
    selection deposits increments into it and is treated as read-only after.
    """

    __slots__ = ("data",)

    def __init__(self, data: np.ndarray):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"gating volume must be 3D (c,h,w), got shape {arr.shape}")
        self.data = arr

    @classmethod
    def zeros(cls, channels: int, height: int, width: int) -> "GatingVolume":
        return cls(np.zeros((channels, height, width), dtype=np.float64))

    @classmethod
    def one_hot(cls, channels: int, height: int, width: int, index: tuple[int, int, int]) -> "GatingVolume":
        g = cls.zeros(channels, height, width)
        g.data[index] = 1.0
        return g

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def mass(self) -> float:
        return float(self.data.sum())

    def active_count(self) -> int:
        return int(np.count_nonzero(self.data))


@dataclass(frozen=True)
class RFGeometry:
    """Accumulated input-pixel footprint of one node at some depth.

    ``rf_size``: side length of the footprint in input pixels (per axis).
    ``jump``: input-pixel distance between the footprints of adjacent nodes
    (product of all strides below).
    ``offset``: input-pixel coordinate of node 0's footprint center; kept
    exact (multiples of 0.5), never rounded here.  Node q's center is
    ``offset + q*jump`` per axis.
    """

    rf_size: int = 1
    jump: int = 1
    offset: float = 0.0

    def center(self, pos: int) -> float:
        return self.offset + pos * self.jump

    def pixel_span(self, pos: int) -> tuple[float, float]:
        """Half-open-free inclusive span of integer pixels covered by node ``pos``."""
        c = self.center(pos)
        half = (self.rf_size - 1) / 2.0
        return c - half, c + half


# Layer kinds that occupy spatial windows; elementwise kinds are identity
# for geometry purposes, and the bridge ends spatial geometry entirely.
_WINDOWED = frozenset({"conv", "maxpool", "avgpool"})
_ELEMENTWISE = frozenset({"relu", "softmax"})


def rf_geometry(layer_specs) -> RFGeometry:
    """Compose accumulated RF size, jump, and offset over a layer prefix.

    Elementwise layers contribute identity; a flatten or fc layer in the
    prefix raises :class:`GeometryError` since no spatial footprint exists
    past the bridge.  An empty prefix yields the identity geometry.
    """
    rf, jump, offset = 1, 1, 0.0
    for spec in layer_specs:
        kind = spec.kind
        if kind in _ELEMENTWISE:
            continue
        if kind not in _WINDOWED:
            raise GeometryError(f"geometry undefined past bridge (layer {spec.name!r} is {kind})")
        k, s, p = spec.kernel, spec.stride, spec.padding
        rf = rf + (k - 1) * jump
        offset = offset + ((k - 1) / 2.0 - p) * jump
        jump = jump * s
    return RFGeometry(rf_size=rf, jump=jump, offset=offset)


def rf_window(spec, top_pos: tuple[int, int], lower_hw: tuple[int, int]) -> tuple[range, range]:
    """Row/col ranges of the lower-layer nodes feeding one top node.

    Positions that fall in zero padding are excluded, so the returned
    cuboid covers valid lower nodes only (all channels implicitly).
    """
    h, w = top_pos
    lh, lw = lower_hw
    k, s, p = spec.kernel, spec.stride, spec.padding
    top_h = (lh + 2 * p - k) // s + 1
    top_w = (lw + 2 * p - k) // s + 1
    if not (0 <= h < top_h and 0 <= w < top_w):
        raise IndexError(f"top position {top_pos} outside {top_h}x{top_w} extent")
    r0 = max(h * s - p, 0)
    r1 = min(h * s - p + k, lh)
    c0 = max(w * s - p, 0)
    c1 = min(w * s - p + k, lw)
    return range(r0, r1), range(c0, c1)
