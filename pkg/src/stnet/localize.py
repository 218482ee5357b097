"""Attention-map collapse, bounding-box proposal, and localization scoring.

Boxes are axis-aligned with inclusive integer pixel corners, ``x`` along
image columns and ``y`` along rows.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from stnet.attention import SelectionConfig, TDDiedError, td_pass
from stnet.net import Network, network_forward
from stnet.tensor import GatingVolume, RFGeometry, rf_geometry

__all__ = [
    "AttentionMap",
    "BBox",
    "LocalizationError",
    "LocalizationReport",
    "attention_map",
    "threshold_map",
    "map_to_input",
    "propose_bbox",
    "iou",
    "evaluate",
    "localize_image",
    "read_manifest",
]


class LocalizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttentionMap:
    """Channel-collapsed gating volume of one layer for one class."""

    values: np.ndarray
    layer: str = ""
    class_k: int = -1

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BBox:
    """Inclusive-pixel box; ``x`` indexes columns, ``y`` rows."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"degenerate box {self}")

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)

    def to_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def attention_map(gating: GatingVolume, layer: str = "", class_k: int = -1) -> AttentionMap:
    """Collapse a gating volume over channels into a 2D map."""
    return AttentionMap(values=gating.data.sum(axis=0), layer=layer, class_k=class_k)


def threshold_map(amap: AttentionMap, mode: str = "all") -> AttentionMap:
    """Zero every value strictly below the map mean.

    ``mode="all"`` averages over every cell; ``mode="nonzero"`` averages
    over nonzero cells only.  Strict comparison keeps uniform maps intact.
    """
    v = amap.values
    if v.size == 0:
        raise ValueError("empty attention map")
    if mode == "all":
        mean = v.mean()
    elif mode == "nonzero":
        nz = v[v != 0]
        mean = nz.mean() if nz.size else 0.0
    else:
        raise ValueError(f"unknown threshold mode {mode!r}")
    out = np.where(v < mean, 0.0, v)
    return AttentionMap(values=out, layer=amap.layer, class_k=amap.class_k)


def map_to_input(amap: AttentionMap, geom: RFGeometry,
                 image_hw: tuple[int, int]) -> list[tuple[int, int]]:
    """Project nonzero map cells to input-pixel anchor points (row, col).

    Cell (h, w) lands at ``offset + h*jump`` per axis, rounded half-up to
    the nearest pixel and clipped to the image.
    """
    ih, iw = image_hw
    points = []
    for h, w in np.argwhere(amap.values != 0):
        r = int(np.floor(geom.center(int(h)) + 0.5))
        c = int(np.floor(geom.center(int(w)) + 0.5))
        points.append((min(max(r, 0), ih - 1), min(max(c, 0), iw - 1)))
    return points


def propose_bbox(points, geom: RFGeometry, image_hw: tuple[int, int]) -> BBox:
    """Tight box over the anchors padded by half the accumulated RF, clipped."""
    if not points:
        raise LocalizationError("no attended region")
    rows = [p[0] for p in points]
    cols = [p[1] for p in points]
    pad = geom.rf_size // 2
    ih, iw = image_hw
    return BBox(
        x_min=max(min(cols) - pad, 0),
        y_min=max(min(rows) - pad, 0),
        x_max=min(max(cols) + pad, iw - 1),
        y_max=min(max(rows) + pad, ih - 1),
    )


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union with inclusive-pixel areas."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / float(a.area + b.area - inter)


def localize_image(net: Network, image, class_k: int, config: SelectionConfig,
                   threshold_mode: str = "all"):
    """Forward + TD pass + box proposal for one image.

    Returns ``(bbox, thresholded map, td result)``.
    """
    trace = network_forward(net, image)
    result = td_pass(trace, net, class_k, config)
    if config.stop_layer == "input":
        geom = RFGeometry()
        layer_prefix = []
    else:
        idx = net.layer_index(config.stop_layer)
        layer_prefix = net.layers[:idx + 1]
        geom = rf_geometry(layer_prefix)
    amap = attention_map(result.gating, layer=config.stop_layer, class_k=class_k)
    amap = threshold_map(amap, mode=threshold_mode)
    ih, iw = net.input_shape[1], net.input_shape[2]
    points = map_to_input(amap, geom, (ih, iw))
    box = propose_bbox(points, geom, (ih, iw))
    return box, amap, result


@dataclass
class ImageResult:
    path: str
    label: int
    iou: float
    correct: bool
    bbox: list | None
    sparsity: float
    failure: str | None = None

    def to_json(self) -> dict:
        return {
            "path": self.path,
            "label": self.label,
            "iou": self.iou,
            "correct": self.correct,
            "bbox": self.bbox,
            "sparsity": self.sparsity,
            "failure": self.failure,
        }


@dataclass
class LocalizationReport:
    error_rate: float
    total: int
    correct: int
    images: list = field(default_factory=list)
    sparsity_mean: float = 0.0
    sparsity_max: float = 0.0
    mean_box_area: float = 0.0
    elapsed_s: float = 0.0

    def to_json(self) -> dict:
        return {
            "error_rate": self.error_rate,
            "total": self.total,
            "correct": self.correct,
            "sparsity_mean": self.sparsity_mean,
            "sparsity_max": self.sparsity_max,
            "mean_box_area": self.mean_box_area,
            "elapsed_s": self.elapsed_s,
            "images": [r.to_json() for r in self.images],
        }

    def to_table(self) -> str:
        lines = [f"{'image':<32} {'label':>5} {'iou':>6} {'ok':>3} {'sparsity':>9}"]
        for r in self.images:
            mark = "yes" if r.correct else "no"
            lines.append(f"{r.path[-32:]:<32} {r.label:>5} {r.iou:>6.3f} {mark:>3} {r.sparsity:>9.5f}")
        lines.append(
            f"error rate {self.error_rate:.3f} ({self.correct}/{self.total} correct), "
            f"mean sparsity {self.sparsity_mean:.5f}, mean box area {self.mean_box_area:.1f}"
        )
        return "\n".join(lines)


def read_manifest(path) -> list[dict]:
    """JSON-lines dataset manifest: {path, label_index, boxes:[[x0,y0,x1,y1],..]}."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            for key in ("path", "label_index", "boxes"):
                if key not in rec:
                    raise ValueError(f"manifest line {line_no}: missing {key!r}")
            records.append(rec)
    if not records:
        raise ValueError("empty manifest")
    return records


def evaluate(dataset, net: Network, config: SelectionConfig,
             threshold_mode: str = "all", log=None) -> LocalizationReport:
    """Localization protocol: TD from the ground-truth label, correct iff
    IoU > 0.5 with any ground-truth box.  Failed passes count as incorrect.

    ``dataset`` yields ``(image, label_index, gt_boxes, path)`` tuples.
    """
    t0 = time.perf_counter()
    results = []
    areas = []
    n_correct = 0
    for image, label, gt_boxes, path in dataset:
        try:
            box, _amap, td = localize_image(net, image, label, config, threshold_mode)
        except (TDDiedError, LocalizationError) as exc:
            results.append(ImageResult(path=path, label=label, iou=0.0, correct=False,
                                       bbox=None, sparsity=0.0, failure=str(exc)))
            if log is not None:
                log(f"{path}: {exc}")
            continue
        best = max((iou(box, g) for g in gt_boxes), default=0.0)
        ok = best > 0.5
        n_correct += ok
        areas.append(box.area)
        results.append(ImageResult(path=path, label=label, iou=best, correct=ok,
                                   bbox=box.to_list(), sparsity=td.sparsity()))
    if not results:
        raise ValueError("empty dataset")
    sparsities = [r.sparsity for r in results if r.failure is None]
    return LocalizationReport(
        error_rate=1.0 - n_correct / len(results),
        total=len(results),
        correct=n_correct,
        images=results,
        sparsity_mean=float(np.mean(sparsities)) if sparsities else 0.0,
        sparsity_max=float(np.max(sparsities)) if sparsities else 0.0,
        mean_box_area=float(np.mean(areas)) if areas else 0.0,
        elapsed_s=time.perf_counter() - t0,
    )
