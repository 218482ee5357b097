"""Bit-exact serialization: STNT weight files, network configs, Netpbm images.

STNT layout, all integers little-endian:

    magic    4 bytes  b"STNT"
    version  u16
    count    u32
    per tensor:
        name_len u16, name utf-8
        rank     u8
        dims     u32 * rank
        payload  f32 little-endian, prod(dims) values

Netpbm support is binary-only (P5 grayscale, P6 color), maxval 255.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from stnet.net import LayerSpec, Network, NetworkError
from stnet.tensor import FeatureVolume

__all__ = [
    "STNT_MAGIC",
    "STNT_VERSION",
    "FormatError",
    "load_weights",
    "save_weights",
    "loads_weights",
    "dumps_weights",
    "load_network",
    "network_config_from_dict",
    "read_image",
    "write_image",
    "read_pgm",
    "write_pgm",
    "read_ppm",
    "write_ppm",
]

STNT_MAGIC = b"STNT"
STNT_VERSION = 1


class FormatError(ValueError):
    """Malformed file; the message carries the failing byte offset."""


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated {what} at offset {self.pos} (need {n} bytes, "
                f"file has {len(self.data) - self.pos} left)"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u16(self, what: str) -> int:
        return struct.unpack("<H", self.take(2, what))[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def dumps_weights(tensors: dict) -> bytes:
    """Serialize a name->array table; iteration order is preserved on load."""
    out = bytearray()
    out += STNT_MAGIC
    out += struct.pack("<H", STNT_VERSION)
    out += struct.pack("<I", len(tensors))
    for name, arr in tensors.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise ValueError(f"tensor name too long: {name[:40]}...")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        if arr.ndim > 0xFF:
            raise ValueError("tensor rank exceeds 255")
        out += struct.pack("<H", len(encoded))
        out += encoded
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    return bytes(out)


def save_weights(tensors: dict, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_weights(tensors))


def loads_weights(data: bytes) -> dict:
    rd = _Reader(data)
    magic = rd.take(4, "magic")
    if magic != STNT_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0")
    version = rd.u16("version")
    if version != STNT_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    count = rd.u32("tensor count")
    tensors: dict = {}
    for _ in range(count):
        name_at = rd.pos
        name_len = rd.u16("name length")
        try:
            name = rd.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"non-utf8 tensor name at offset {name_at}") from exc
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r} at offset {name_at}")
        rank = rd.u8(f"rank of {name!r}")
        dims = tuple(rd.u32(f"dim of {name!r}") for _ in range(rank))
        n_values = 1
        for d in dims:
            n_values *= d
        if n_values * 4 > len(data) - rd.pos:
            raise FormatError(
                f"truncated payload for tensor {name!r} at offset {rd.pos} "
                f"(need {n_values * 4} bytes)"
            )
        payload = rd.take(n_values * 4, f"payload of {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    if rd.pos != len(data):
        raise FormatError(f"{len(data) - rd.pos} trailing bytes at offset {rd.pos}")
    return tensors


def load_weights(path) -> dict:
    with open(path, "rb") as fh:
        return loads_weights(fh.read())


# ---------------------------------------------------------------------------
# network config


def network_config_from_dict(cfg: dict, weights: dict) -> Network:
    """Wire a config dict (parsed JSON) to its weight table."""
    try:
        inp = cfg["input"]
        input_shape = (int(inp["channels"]), int(inp["height"]), int(inp["width"]))
        layer_dicts = cfg["layers"]
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"config missing required field: {exc}") from exc

    def tensor(ref: str, layer: str) -> np.ndarray:
        if ref not in weights:
            raise NetworkError(f"layer {layer!r}: missing tensor {ref!r}")
        return weights[ref]

    specs = []
    for ld in layer_dicts:
        name = ld.get("name")
        kind = ld.get("kind")
        if not name or not kind:
            raise NetworkError(f"layer entry needs name and kind: {ld}")
        w = tensor(ld["weights"], name) if "weights" in ld else None
        b = tensor(ld["bias"], name) if "bias" in ld else None
        specs.append(LayerSpec(
            name=name,
            kind=kind,
            kernel=int(ld.get("kernel", 1)),
            stride=int(ld.get("stride", 1)),
            padding=int(ld.get("padding", 0)),
            out_channels=ld.get("out_channels"),
            weights=w,
            bias=b,
        ))

    pre = cfg.get("preprocess", {})
    mean = np.asarray(pre["mean"], dtype=np.float64) if "mean" in pre else None
    scale = np.asarray(pre["scale"], dtype=np.float64) if "scale" in pre else None
    labels = tuple(cfg["labels"]) if "labels" in cfg else None
    return Network(layers=tuple(specs), input_shape=input_shape,
                   mean=mean, scale=scale, labels=labels)


def load_network(config_path, weights: dict) -> Network:
    with open(config_path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    return network_config_from_dict(cfg, weights)


# ---------------------------------------------------------------------------
# Netpbm


def _parse_netpbm_header(data: bytes, path) -> tuple[bytes, int, int, int, int]:
    if data[:2] in (b"P1", b"P2", b"P3", b"P4"):
        raise FormatError(f"{path}: unsupported variant {data[:2].decode()} (binary P5/P6 only)")
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"{path}: not a binary PGM/PPM file")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise FormatError(f"{path}: truncated header at offset {pos}")
        ch = data[pos:pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos:pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise FormatError(f"{path}: bad header byte at offset {pos}")
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise FormatError(f"{path}: missing raster separator at offset {pos}")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval} unsupported (255 only)")
    return magic, width, height, maxval, pos


def read_pgm(path) -> np.ndarray:
    """Binary P5 file to a (h, w) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, width, height, _maxval, pos = _parse_netpbm_header(data, path)
    if magic != b"P5":
        raise FormatError(f"{path}: expected P5, found {magic.decode()}")
    need = width * height
    if len(data) - pos < need:
        raise FormatError(f"{path}: truncated raster at offset {pos}")
    return np.frombuffer(data[pos:pos + need], dtype=np.uint8).reshape(height, width).copy()


def write_pgm(gray: np.ndarray, path) -> None:
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_ppm(path) -> np.ndarray:
    """Binary P6 file to a (h, w, 3) uint8 array."""
    with open(path, "rb") as fh:
        data = fh.read()
    magic, width, height, _maxval, pos = _parse_netpbm_header(data, path)
    if magic != b"P6":
        raise FormatError(f"{path}: expected P6, found {magic.decode()}")
    need = width * height * 3
    if len(data) - pos < need:
        raise FormatError(f"{path}: truncated raster at offset {pos}")
    return np.frombuffer(data[pos:pos + need], dtype=np.uint8).reshape(height, width, 3).copy()


def write_ppm(rgb: np.ndarray, path) -> None:
    rgb = np.ascontiguousarray(rgb, dtype=np.uint8)
    h, w, c = rgb.shape
    if c != 3:
        raise ValueError("PPM needs 3 channels")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_image(path) -> FeatureVolume:
    """PGM/PPM to a feature volume with values scaled to [0, 1]."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        gray = read_pgm(path)
        planes = gray[None, :, :]
    elif magic == b"P6":
        rgb = read_ppm(path)
        planes = np.moveaxis(rgb, -1, 0)
    else:
        # surface the precise complaint (ASCII variant vs unknown format)
        _parse_netpbm_header(magic + b"\n", path)
        raise FormatError(f"{path}: not a binary PGM/PPM file")
    return FeatureVolume(planes.astype(np.float32) / np.float32(255.0))


def write_image(volume: FeatureVolume, path) -> None:
    """Inverse of read_image for 1- or 3-channel volumes in [0, 1]."""
    scaled = np.floor(np.clip(volume.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if volume.channels == 1:
        write_pgm(scaled[0], path)
    elif volume.channels == 3:
        write_ppm(np.moveaxis(scaled, 0, -1), path)
    else:
        raise ValueError("only 1- or 3-channel volumes can be written")
