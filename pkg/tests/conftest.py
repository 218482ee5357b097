"""Shared fixtures: the hand-built bright-square detector and its synthetic suite.

The detector weights are fixed literals, no training anywhere.  Layer plan
(32x32 gray input):

    conv1  5x5 center-surround (+0.15 core, -0.05 ring), pad 2
    relu1, pool1 max 2x2/2            -> 1x16x16
    conv2  3x3, no pad: ch0 cross detector (+0.2 cross, -0.15 corners,
           bias -0.06), ch1 background detector (-1/9, bias +0.25)
    relu2, pool2 max 2x2/2            -> 2x7x7
    convcls 7x7 global: class 0 "square" (+ch0, -ch1, bias 20),
           class 1 "background" mirrored  -> 2x1x1 scores

The background channel supplies large negative evidence at the class
layer, so the margin search runs to exhaustion and keeps every positive
cell; the spatial grouping then prunes off-block strays.
"""

import json

import numpy as np
import pytest

from stnet.net import LayerSpec, Network
from stnet.model_io import save_weights, write_pgm
from stnet.tensor import FeatureVolume

IMG = 32
NOISE_LO, NOISE_HI = 0.05, 0.18
BLOCK_LO, BLOCK_HI = 0.85, 0.95


def detector_tensors() -> dict:
    k1 = np.full((1, 1, 5, 5), -0.05, dtype=np.float32)
    k1[0, 0, 1:4, 1:4] = 0.15
    k2 = np.zeros((2, 1, 3, 3), dtype=np.float32)
    k2[0, 0] = -0.15
    k2[0, 0, 1, :] = 0.2
    k2[0, 0, :, 1] = 0.2
    k2[1, 0] = -1.0 / 9.0
    b2 = np.array([-0.06, 0.25], dtype=np.float32)
    kc = np.zeros((2, 2, 7, 7), dtype=np.float32)
    kc[0, 0] = 1.0
    kc[0, 1] = -1.0
    kc[1, 0] = -1.0
    kc[1, 1] = 1.0
    bc = np.array([20.0, 0.0], dtype=np.float32)
    return {
        "conv1.w": k1, "conv1.b": np.zeros(1, np.float32),
        "conv2.w": k2, "conv2.b": b2,
        "convcls.w": kc, "convcls.b": bc,
    }


def build_detector() -> Network:
    t = detector_tensors()
    return Network(
        layers=(
            LayerSpec("conv1", "conv", kernel=5, stride=1, padding=2, out_channels=1,
                      weights=t["conv1.w"], bias=t["conv1.b"]),
            LayerSpec("relu1", "relu"),
            LayerSpec("pool1", "maxpool", kernel=2, stride=2),
            LayerSpec("conv2", "conv", kernel=3, stride=1, padding=0, out_channels=2,
                      weights=t["conv2.w"], bias=t["conv2.b"]),
            LayerSpec("relu2", "relu"),
            LayerSpec("pool2", "maxpool", kernel=2, stride=2),
            LayerSpec("convcls", "conv", kernel=7, stride=1, padding=0, out_channels=2,
                      weights=t["convcls.w"], bias=t["convcls.b"]),
        ),
        input_shape=(1, IMG, IMG),
        labels=("square", "background"),
    )


DETECTOR_CONFIG = {
    "name": "bright-square-detector",
    "input": {"height": IMG, "width": IMG, "channels": 1},
    "labels": ["square", "background"],
    "layers": [
        {"name": "conv1", "kind": "conv", "kernel": 5, "stride": 1, "padding": 2,
         "out_channels": 1, "weights": "conv1.w", "bias": "conv1.b"},
        {"name": "relu1", "kind": "relu"},
        {"name": "pool1", "kind": "maxpool", "kernel": 2, "stride": 2},
        {"name": "conv2", "kind": "conv", "kernel": 3, "stride": 1, "padding": 0,
         "out_channels": 2, "weights": "conv2.w", "bias": "conv2.b"},
        {"name": "relu2", "kind": "relu"},
        {"name": "pool2", "kind": "maxpool", "kernel": 2, "stride": 2},
        {"name": "convcls", "kind": "conv", "kernel": 7, "stride": 1, "padding": 0,
         "out_channels": 2, "weights": "convcls.w", "bias": "convcls.b"},
    ],
}


def make_square_image(rng, size=IMG, distractor_p=0.4):
    """Textured background + one bright block; returns (image, gt box x0,y0,x1,y1)."""
    img = rng.uniform(NOISE_LO, NOISE_HI, size=(size, size)).astype(np.float32)
    side = int(rng.integers(8, 15))
    r0 = int(rng.integers(0, size - side + 1))
    c0 = int(rng.integers(0, size - side + 1))
    img[r0:r0 + side, c0:c0 + side] = rng.uniform(BLOCK_LO, BLOCK_HI, size=(side, side))
    if rng.random() < distractor_p:
        # dim blob far from the block: a stage-1 winner the spatial grouping prunes
        for _ in range(40):
            br = int(rng.integers(0, size - 3))
            bc = int(rng.integers(0, size - 3))
            if (br + 3 < r0 - 10 or br > r0 + side + 10
                    or bc + 3 < c0 - 10 or bc > c0 + side + 10):
                img[br:br + 3, bc:bc + 3] = 0.40
                break
    return img, (c0, r0, c0 + side - 1, r0 + side - 1)


def write_suite(dirpath, n=50, seed=7) -> str:
    """Write n PGM images plus a JSONL manifest; returns the manifest path."""
    rng = np.random.default_rng(seed)
    manifest = dirpath / "suite.jsonl"
    with open(manifest, "w", encoding="utf-8") as fh:
        for i in range(n):
            img, gt = make_square_image(rng)
            path = dirpath / f"img_{i:03d}.pgm"
            write_pgm(np.floor(img * 255.0 + 0.5).astype(np.uint8), path)
            fh.write(json.dumps({"path": str(path), "label_index": 0,
                                 "boxes": [list(gt)]}) + "\n")
    return str(manifest)


@pytest.fixture(scope="session")
def detector_net() -> Network:
    return build_detector()


@pytest.fixture()
def detector_files(tmp_path):
    """Detector serialized through the external interfaces (STNT + JSON)."""
    weights_path = tmp_path / "detector.stnt"
    config_path = tmp_path / "detector.json"
    save_weights(detector_tensors(), weights_path)
    config_path.write_text(json.dumps(DETECTOR_CONFIG, indent=2))
    return str(config_path), str(weights_path)


@pytest.fixture()
def square_image():
    rng = np.random.default_rng(3)
    img, gt = make_square_image(rng, distractor_p=0.0)
    return FeatureVolume(img[None]), gt
