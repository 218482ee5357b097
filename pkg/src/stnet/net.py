"""Bottom-up feedforward engine over sequential layer stacks.

Every layer's output volume is recorded in an :class:`ActivationTrace` so
the top-down pass can recompute post-synaptic activities without stored
pooling switches.  Arithmetic is float32 with float64 accumulation for
reductions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from stnet import kernels
from stnet.tensor import FeatureVolume

__all__ = [
    "LayerSpec",
    "Network",
    "ActivationTrace",
    "NetworkError",
    "LAYER_KINDS",
    "conv_forward",
    "maxpool_forward",
    "avgpool_forward",
    "relu_forward",
    "fc_forward",
    "softmax_forward",
    "flatten_forward",
    "layer_forward",
    "network_forward",
    "output_shape",
]

LAYER_KINDS = ("conv", "maxpool", "avgpool", "relu", "fc", "softmax", "flatten")

# Kinds allowed after the bridge, where volumes are 1x1xN vectors.
_POST_BRIDGE = frozenset({"fc", "relu", "softmax"})


class NetworkError(ValueError):
    """Layer stack or weight shapes are inconsistent."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer of a sequential network.

    ``weights`` is (out,in,k,k) for conv and (out,in) for fc; elementwise
    and pooling layers carry no parameters.
    """

    name: str
    kind: str
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    out_channels: int | None = None
    weights: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise NetworkError(f"layer {self.name!r}: unknown kind {self.kind!r}")
        if self.kind in ("conv", "maxpool", "avgpool"):
            if self.kernel < 1 or self.stride < 1 or self.padding < 0:
                raise NetworkError(f"layer {self.name!r}: bad window arithmetic")
        if self.kind in ("maxpool", "avgpool") and 2 * self.padding > self.kernel:
            # wider padding would create windows with no valid input at all
            raise NetworkError(f"layer {self.name!r}: pool padding exceeds kernel/2")


def output_shape(spec: LayerSpec, in_shape: tuple[int, int, int]) -> tuple[int, int, int]:
    """Shape (c,h,w) of the volume this layer produces from ``in_shape``."""
    c, h, w = in_shape
    kind = spec.kind
    if kind in ("relu", "softmax"):
        return in_shape
    if kind == "flatten":
        return (c * h * w, 1, 1)
    if kind == "fc":
        if spec.weights is None:
            raise NetworkError(f"layer {spec.name!r}: fc layer has no weights")
        return (spec.weights.shape[0], 1, 1)
    k, s, p = spec.kernel, spec.stride, spec.padding
    if h + 2 * p < k or w + 2 * p < k:
        raise NetworkError(f"layer {spec.name!r}: window {k} exceeds padded extent")
    oh = (h + 2 * p - k) // s + 1
    ow = (w + 2 * p - k) // s + 1
    cout = spec.out_channels if kind == "conv" else c
    return (cout, oh, ow)


@dataclass(frozen=True)
class Network:
    """Validated sequential layer stack plus input and preprocessing spec.

    ``mean``/``scale`` are per-channel preprocessing constants applied to
    the raw input before layer 0 (``(x - mean) * scale``); both default to
    identity.  ``shapes[i]`` is the (c,h,w) shape of volume ``i`` where
    volume 0 is the (preprocessed) input.
    """

    layers: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]
    mean: np.ndarray | None = None
    scale: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    shapes: tuple[tuple[int, int, int], ...] = field(init=False)

    def __post_init__(self):
        shapes = [self.input_shape]
        bridged = False
        seen_flatten = False
        for spec in self.layers:
            if spec.kind == "flatten":
                if seen_flatten:
                    raise NetworkError("more than one flatten layer")
                seen_flatten = True
                bridged = True
            elif bridged and spec.kind not in _POST_BRIDGE:
                raise NetworkError(
                    f"layer {spec.name!r}: only fc/relu/softmax may follow the bridge"
                )
            _check_params(spec, shapes[-1])
            shapes.append(output_shape(spec, shapes[-1]))
        names = [s.name for s in self.layers]
        if len(set(names)) != len(names):
            raise NetworkError("duplicate layer names")
        object.__setattr__(self, "shapes", tuple(shapes))

    def layer_index(self, name: str) -> int:
        for i, spec in enumerate(self.layers):
            if spec.name == name:
                return i
        raise NetworkError(f"no layer named {name!r}")

    @property
    def num_classes(self) -> int:
        c, h, w = self.shapes[-1]
        return c * h * w


def _check_params(spec: LayerSpec, in_shape: tuple[int, int, int]) -> None:
    c_in = in_shape[0]
    if spec.kind == "conv":
        if spec.weights is None or spec.out_channels is None:
            raise NetworkError(f"layer {spec.name!r}: conv needs weights and out_channels")
        want = (spec.out_channels, c_in, spec.kernel, spec.kernel)
        if spec.weights.shape != want:
            raise NetworkError(
                f"layer {spec.name!r}: weight shape {spec.weights.shape} != {want}"
            )
        if spec.bias is not None and spec.bias.shape != (spec.out_channels,):
            raise NetworkError(f"layer {spec.name!r}: bias shape {spec.bias.shape}")
    elif spec.kind == "fc":
        if in_shape[1] != 1 or in_shape[2] != 1:
            raise NetworkError(f"layer {spec.name!r}: fc before flatten")
        if spec.weights is None:
            raise NetworkError(f"layer {spec.name!r}: fc needs weights")
        if spec.weights.ndim != 2 or spec.weights.shape[1] != c_in:
            raise NetworkError(
                f"layer {spec.name!r}: weight shape {spec.weights.shape} != (out, {c_in})"
            )
        if spec.bias is not None and spec.bias.shape != (spec.weights.shape[0],):
            raise NetworkError(f"layer {spec.name!r}: bias shape {spec.bias.shape}")


@dataclass(frozen=True)
class ActivationTrace:
    """Volume 0 (input) through volume L (class scores), one per layer output."""

    volumes: tuple[FeatureVolume, ...]

    def __getitem__(self, i: int) -> FeatureVolume:
        return self.volumes[i]

    def __len__(self) -> int:
        return len(self.volumes)

    @property
    def top(self) -> FeatureVolume:
        return self.volumes[-1]

    def scores(self) -> np.ndarray:
        return self.top.data.reshape(-1)


def _bias_of(spec: LayerSpec, n: int) -> np.ndarray:
    if spec.bias is not None:
        return spec.bias.astype(np.float32)
    return np.zeros(n, dtype=np.float32)


def conv_forward(x: FeatureVolume, spec: LayerSpec) -> FeatureVolume:
    if spec.weights.shape[1] != x.channels:
        raise NetworkError(
            f"layer {spec.name!r}: input has {x.channels} channels, kernel expects "
            f"{spec.weights.shape[1]}"
        )
    out = kernels.conv2d(
        x.data,
        spec.weights.astype(np.float32),
        _bias_of(spec, spec.weights.shape[0]),
        spec.stride,
        spec.padding,
    )
    return FeatureVolume(out)


def maxpool_forward(x: FeatureVolume, spec: LayerSpec) -> FeatureVolume:
    return FeatureVolume(kernels.maxpool2d(x.data, spec.kernel, spec.stride, spec.padding))


def avgpool_forward(x: FeatureVolume, spec: LayerSpec) -> FeatureVolume:
    return FeatureVolume(kernels.avgpool2d(x.data, spec.kernel, spec.stride, spec.padding))


def relu_forward(x: FeatureVolume, spec: LayerSpec = None) -> FeatureVolume:
    return FeatureVolume(np.maximum(x.data, np.float32(0.0)))


def flatten_forward(x: FeatureVolume, spec: LayerSpec = None) -> FeatureVolume:
    return FeatureVolume(x.data.reshape(-1, 1, 1))


def fc_forward(x: FeatureVolume, spec: LayerSpec) -> FeatureVolume:
    if x.height != 1 or x.width != 1:
        raise NetworkError(f"layer {spec.name!r}: fc before flatten")
    v = x.data.reshape(-1).astype(np.float64)
    w = spec.weights.astype(np.float64)
    if w.shape[1] != v.shape[0]:
        raise NetworkError(
            f"layer {spec.name!r}: fc expects {w.shape[1]} inputs, got {v.shape[0]}"
        )
    out = w @ v + _bias_of(spec, w.shape[0]).astype(np.float64)
    return FeatureVolume(out.astype(np.float32).reshape(-1, 1, 1))


def softmax_forward(x: FeatureVolume, spec: LayerSpec = None) -> FeatureVolume:
    v = x.data.reshape(-1).astype(np.float64)
    e = np.exp(v - v.max())
    out = (e / e.sum()).astype(np.float32)
    return FeatureVolume(out.reshape(x.shape))


_FORWARD = {
    "conv": conv_forward,
    "maxpool": maxpool_forward,
    "avgpool": avgpool_forward,
    "relu": relu_forward,
    "fc": fc_forward,
    "softmax": softmax_forward,
    "flatten": flatten_forward,
}


def layer_forward(x: FeatureVolume, spec: LayerSpec) -> FeatureVolume:
    return _FORWARD[spec.kind](x, spec)


def preprocess(net: Network, image: FeatureVolume) -> FeatureVolume:
    if net.mean is None and net.scale is None:
        return image
    x = image.data.astype(np.float64)
    if net.mean is not None:
        x = x - net.mean.reshape(-1, 1, 1)
    if net.scale is not None:
        x = x * net.scale.reshape(-1, 1, 1)
    return FeatureVolume(x.astype(np.float32))


def network_forward(net: Network, image: FeatureVolume) -> ActivationTrace:
    """Run the full bottom-up pass, recording every layer's output volume."""
    if image.shape != net.input_shape:
        raise NetworkError(f"image shape {image.shape} != input spec {net.input_shape}")
    volumes = [preprocess(net, image).check_finite()]
    for spec in net.layers:
        volumes.append(layer_forward(volumes[-1], spec).check_finite())
    return ActivationTrace(tuple(volumes))
