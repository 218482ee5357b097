"""Bottom-up forward pass against naive loop oracles."""

import numpy as np
import pytest

from stnet.net import (
    LayerSpec,
    Network,
    NetworkError,
    conv_forward,
    fc_forward,
    flatten_forward,
    maxpool_forward,
    network_forward,
    relu_forward,
    softmax_forward,
)
from stnet.tensor import FeatureVolume

from conftest import build_detector, make_square_image


def naive_conv(x, w, b, stride, padding):
    """Six explicit loops; the reference the vectorized kernel must match."""
    cin, h, wid = x.shape
    cout, _, k, _ = w.shape
    oh = (h + 2 * padding - k) // stride + 1
    ow = (wid + 2 * padding - k) // stride + 1
    out = np.zeros((cout, oh, ow), dtype=np.float64)
    for co in range(cout):
        for oy in range(oh):
            for ox in range(ow):
                acc = float(b[co])
                for ci in range(cin):
                    for ky in range(k):
                        for kx in range(k):
                            iy = oy * stride - padding + ky
                            ix = ox * stride - padding + kx
                            if 0 <= iy < h and 0 <= ix < wid:
                                acc += float(x[ci, iy, ix]) * float(w[co, ci, ky, kx])
                out[co, oy, ox] = acc
    return out.astype(np.float32)


def test_conv_scalar_product():
    x = FeatureVolume(np.array([[[5.0]]], np.float32))
    spec = LayerSpec("c", "conv", kernel=1, out_channels=1,
                     weights=np.array([[[[2.0]]]], np.float32))
    assert conv_forward(x, spec).data[0, 0, 0] == 10.0


def test_conv_zero_input_gives_bias():
    spec = LayerSpec("c", "conv", kernel=3, padding=1, out_channels=2,
                     weights=np.random.default_rng(0).normal(size=(2, 1, 3, 3)).astype(np.float32),
                     bias=np.array([0.5, -1.5], np.float32))
    out = conv_forward(FeatureVolume(np.zeros((1, 4, 4), np.float32)), spec).data
    assert np.allclose(out[0], 0.5) and np.allclose(out[1], -1.5)


def test_conv_matches_naive_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        cin = int(rng.integers(1, 4))
        cout = int(rng.integers(1, 4))
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, 3))
        p = int(rng.integers(0, 2))
        h = int(rng.integers(k, 8))
        w = int(rng.integers(k, 8))
        x = rng.normal(size=(cin, h, w)).astype(np.float32)
        wt = rng.normal(size=(cout, cin, k, k)).astype(np.float32)
        b = rng.normal(size=cout).astype(np.float32)
        spec = LayerSpec("c", "conv", kernel=k, stride=s, padding=p,
                         out_channels=cout, weights=wt, bias=b)
        got = conv_forward(FeatureVolume(x), spec).data
        want = naive_conv(x, wt, b, s, p)
        np.testing.assert_allclose(got, want, rtol=1e-6, atol=1e-6)


def test_conv_channel_mismatch():
    spec = LayerSpec("c", "conv", kernel=1, out_channels=1,
                     weights=np.ones((1, 2, 1, 1), np.float32))
    with pytest.raises(NetworkError, match="channels"):
        conv_forward(FeatureVolume(np.zeros((1, 2, 2), np.float32)), spec)


def test_relu():
    out = relu_forward(FeatureVolume(np.array([[[-1.0, 0.0, 2.0]]], np.float32)))
    assert out.data.tolist() == [[[0.0, 0.0, 2.0]]]


def test_relu_idempotent():
    x = FeatureVolume(np.random.default_rng(2).normal(size=(2, 3, 3)).astype(np.float32))
    once = relu_forward(x)
    twice = relu_forward(once)
    np.testing.assert_array_equal(once.data, twice.data)


def test_maxpool_2x2():
    x = FeatureVolume(np.array([[[1.0, 2.0], [3.0, 4.0]]], np.float32))
    spec = LayerSpec("p", "maxpool", kernel=2, stride=2)
    assert maxpool_forward(x, spec).data.reshape(-1).tolist() == [4.0]


def test_softmax_symmetry():
    out = softmax_forward(FeatureVolume(np.zeros((2, 1, 1), np.float32)))
    np.testing.assert_allclose(out.data.reshape(-1), [0.5, 0.5], atol=1e-7)


def test_softmax_sums_to_one():
    rng = np.random.default_rng(3)
    for _ in range(10):
        v = FeatureVolume(rng.normal(size=(7, 1, 1)).astype(np.float32))
        assert abs(softmax_forward(v).data.sum() - 1.0) < 1e-6


def test_fc_before_flatten_rejected():
    w = np.ones((2, 8), np.float32)
    with pytest.raises(NetworkError, match="before flatten"):
        fc_forward(FeatureVolume(np.zeros((2, 2, 2), np.float32)),
                   LayerSpec("f", "fc", weights=w))


def test_fc_matches_matmul():
    rng = np.random.default_rng(4)
    x = rng.normal(size=12).astype(np.float32)
    w = rng.normal(size=(3, 12)).astype(np.float32)
    b = rng.normal(size=3).astype(np.float32)
    out = fc_forward(FeatureVolume(x.reshape(-1, 1, 1)), LayerSpec("f", "fc", weights=w, bias=b))
    np.testing.assert_allclose(out.data.reshape(-1), w @ x + b, rtol=1e-6)


def test_flatten_is_channel_major():
    x = np.arange(2 * 2 * 2, dtype=np.float32).reshape(2, 2, 2)
    out = flatten_forward(FeatureVolume(x))
    np.testing.assert_array_equal(out.data.reshape(-1), x.reshape(-1))


def test_identity_network_trace():
    net = Network(layers=(LayerSpec("r", "relu"),), input_shape=(1, 3, 3))
    img = FeatureVolume(np.abs(np.random.default_rng(5).normal(size=(1, 3, 3))).astype(np.float32))
    trace = network_forward(net, img)
    np.testing.assert_array_equal(trace[1].data, trace[0].data)


def test_forward_is_deterministic():
    net = build_detector()
    img, _ = make_square_image(np.random.default_rng(6))
    t1 = network_forward(net, FeatureVolume(img[None]))
    t2 = network_forward(net, FeatureVolume(img[None]))
    for a, b in zip(t1.volumes, t2.volumes):
        assert np.array_equal(a.data, b.data)


def test_detector_classifies_square():
    net = build_detector()
    rng = np.random.default_rng(7)
    for _ in range(10):
        img, _ = make_square_image(rng)
        trace = network_forward(net, FeatureVolume(img[None]))
        assert int(np.argmax(trace.scores())) == 0


def test_trace_volumes_finite():
    net = build_detector()
    img, _ = make_square_image(np.random.default_rng(8))
    trace = network_forward(net, FeatureVolume(img[None]))
    for vol in trace.volumes:
        assert np.isfinite(vol.data).all()


def test_shape_validation():
    with pytest.raises(NetworkError, match="weight shape"):
        Network(layers=(LayerSpec("c", "conv", kernel=3, out_channels=2,
                                  weights=np.ones((2, 1, 5, 5), np.float32)),),
                input_shape=(1, 8, 8))
    with pytest.raises(NetworkError, match="follow the bridge"):
        Network(layers=(LayerSpec("f", "flatten"),
                        LayerSpec("c", "conv", kernel=1, out_channels=1,
                                  weights=np.ones((1, 4, 1, 1), np.float32))),
                input_shape=(1, 2, 2))
