"""STNT weight files, network configs, and Netpbm codecs."""

import json

import numpy as np
import pytest

from stnet.model_io import (
    FormatError,
    dumps_weights,
    load_network,
    load_weights,
    loads_weights,
    read_image,
    read_pgm,
    read_ppm,
    save_weights,
    write_image,
    write_pgm,
    write_ppm,
)
from stnet.net import NetworkError, network_forward
from stnet.tensor import FeatureVolume

from conftest import DETECTOR_CONFIG, detector_tensors, make_square_image


def test_empty_table_roundtrip(tmp_path):
    path = tmp_path / "empty.stnt"
    save_weights({}, path)
    assert load_weights(path) == {}
    save_weights(load_weights(path), tmp_path / "empty2.stnt")
    assert path.read_bytes() == (tmp_path / "empty2.stnt").read_bytes()


def test_tensor_roundtrip(tmp_path):
    t = {"w": np.array([[1.5, -2.0], [0.0, 3.25]], np.float32)}
    path = tmp_path / "t.stnt"
    save_weights(t, path)
    loaded = load_weights(path)
    np.testing.assert_array_equal(loaded["w"], t["w"])


def test_multi_tensor_byte_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    t = {
        "conv1.w": rng.normal(size=(4, 3, 5, 5)).astype(np.float32),
        "fc.w": rng.normal(size=(10, 64)).astype(np.float32),
        "fc.b": rng.normal(size=10).astype(np.float32),
        "scalar": np.float32(7.5).reshape(()),
    }
    p1 = tmp_path / "a.stnt"
    p2 = tmp_path / "b.stnt"
    save_weights(t, p1)
    save_weights(load_weights(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic():
    with pytest.raises(FormatError, match="bad magic.*offset 0"):
        loads_weights(b"NOPE" + b"\x00" * 16)


def test_truncated_payload_names_tensor():
    data = dumps_weights({"weights.x": np.ones((4, 4), np.float32)})
    with pytest.raises(FormatError, match="weights.x"):
        loads_weights(data[:-7])


def test_duplicate_name_rejected():
    good = dumps_weights({"a": np.zeros(2, np.float32)})
    # duplicate the single tensor record and patch the count to 2
    record = good[10:]
    forged = good[:6] + (2).to_bytes(4, "little") + record + record
    with pytest.raises(FormatError, match="duplicate tensor name 'a'"):
        loads_weights(forged)


def test_fuzzed_corruption_never_crashes():
    rng = np.random.default_rng(1)
    base = bytearray(dumps_weights({
        "w": rng.normal(size=(3, 3)).astype(np.float32),
        "b": rng.normal(size=3).astype(np.float32),
    }))
    rejected = 0
    for i in range(100):
        data = bytearray(base)
        for _ in range(int(rng.integers(1, 6))):
            op = rng.integers(0, 3)
            if op == 0 and len(data) > 1:
                data[int(rng.integers(0, len(data)))] = int(rng.integers(0, 256))
            elif op == 1 and len(data) > 4:
                del data[int(rng.integers(0, len(data) - 1)):]
            else:
                data += bytes(rng.integers(0, 256, size=int(rng.integers(1, 16))).tolist())
        try:
            loads_weights(bytes(data))
        except FormatError:
            rejected += 1
    assert rejected > 0  # corruption is mostly detected; never a crash


def test_load_network_minimal_relu(tmp_path):
    cfg = {"input": {"height": 2, "width": 2, "channels": 1},
           "layers": [{"name": "r", "kind": "relu"}]}
    p = tmp_path / "net.json"
    p.write_text(json.dumps(cfg))
    net = load_network(p, {})
    assert len(net.layers) == 1


def test_load_network_missing_tensor(tmp_path):
    cfg = {"input": {"height": 4, "width": 4, "channels": 1},
           "layers": [{"name": "c", "kind": "conv", "kernel": 3, "out_channels": 1,
                       "weights": "nope.w"}]}
    p = tmp_path / "net.json"
    p.write_text(json.dumps(cfg))
    with pytest.raises(NetworkError, match="missing tensor 'nope.w'"):
        load_network(p, {})


def test_detector_fixture_loads_and_classifies(tmp_path, detector_files):
    config_path, weights_path = detector_files
    net = load_network(config_path, load_weights(weights_path))
    img, _ = make_square_image(np.random.default_rng(2))
    trace = network_forward(net, FeatureVolume(img[None]))
    assert int(np.argmax(trace.scores())) == 0
    assert net.labels == ("square", "background")


def test_pgm_single_pixel(tmp_path):
    p = tmp_path / "one.pgm"
    write_pgm(np.array([[255]], np.uint8), p)
    vol = read_image(p)
    assert vol.data.tolist() == [[[1.0]]]


def test_ppm_roundtrip_bytes(tmp_path):
    p1 = tmp_path / "a.ppm"
    p2 = tmp_path / "b.ppm"
    write_ppm(np.array([[[1, 2, 3], [4, 5, 6]]], np.uint8), p1)
    write_ppm(read_ppm(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_ascii_variant_rejected(tmp_path):
    p = tmp_path / "ascii.pgm"
    p.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(FormatError, match="unsupported variant"):
        read_image(p)


def test_maxval_rejected(tmp_path):
    p = tmp_path / "deep.pgm"
    p.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(FormatError, match="maxval"):
        read_pgm(p)


def test_header_comments_parsed(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# a comment\n2 1\n# another\n255\n\x07\x09")
    img = read_pgm(p)
    assert img.tolist() == [[7, 9]]


def test_truncated_raster(tmp_path):
    p = tmp_path / "t.pgm"
    p.write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(FormatError, match="truncated raster"):
        read_pgm(p)


def test_write_read_identity_on_volumes(tmp_path):
    rng = np.random.default_rng(3)
    gray = FeatureVolume(rng.uniform(size=(1, 5, 7)).astype(np.float32))
    rgb = FeatureVolume(rng.uniform(size=(3, 4, 4)).astype(np.float32))
    for vol, name in ((gray, "g.pgm"), (rgb, "c.ppm")):
        path = tmp_path / name
        write_image(vol, path)
        back = read_image(path)
        write_image(back, tmp_path / ("2_" + name))
        assert (tmp_path / name).read_bytes() == (tmp_path / ("2_" + name)).read_bytes()
