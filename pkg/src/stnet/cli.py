"""Command-line pipeline driver.

Subcommands: classify, localize, chmap, eval.  JSON results go to stdout;
human-readable tables and logs go to stderr.  Exit codes: 0 success,
1 usage or config error, 2 pipeline failure (dead pass, empty region).
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from stnet.attention import SelectionConfig, TDDiedError, td_pass
from stnet.chviz import ch_accumulate, gaussian_smooth, render, render_overlay
from stnet.localize import (
    LocalizationError,
    attention_map,
    evaluate,
    localize_image,
    map_to_input,
    read_manifest,
    threshold_map,
    BBox,
)
from stnet.model_io import FormatError, load_network, load_weights, read_image, read_ppm, write_pgm
from stnet.net import NetworkError, network_forward
from stnet.tensor import GeometryError, RFGeometry, rf_geometry


class UsageError(ValueError):
    pass


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--net", required=True, help="network config JSON")
    p.add_argument("--weights", required=True, help="STNT weight file")


def _add_td_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--stop-layer", default="input",
                   help="layer whose gating becomes the attention map (default input)")
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--sc-alpha", type=float, default=0.2)
    p.add_argument("--offset-fc", type=int, default=0)
    p.add_argument("--offset-bridge", type=int, default=0)
    p.add_argument("--threshold-mode", choices=("all", "nonzero"), default="all")
    p.add_argument("--no-stage2", action="store_true",
                   help="ablation: best single winner at fc layers, untouched set at conv layers")
    p.add_argument("--debug-trace", metavar="PATH",
                   help="write per-layer winner sizes, margins, and gating mass as JSON")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stnet")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="bottom-up pass, top-5 classes")
    _add_model_args(p)
    p.add_argument("--image", required=True)

    p = sub.add_parser("localize", help="attention-driven bounding box for one image")
    _add_model_args(p)
    p.add_argument("--image", required=True)
    p.add_argument("--class-index", type=int, required=True)
    _add_td_args(p)
    p.add_argument("--map-out", metavar="PGM", help="write the thresholded attention map")

    p = sub.add_parser("chmap", help="class-hypothesis heat map for one image")
    _add_model_args(p)
    p.add_argument("--image", required=True)
    p.add_argument("--class-index", type=int, required=True)
    _add_td_args(p)
    p.add_argument("--sigma", type=float, default=6.0)
    p.add_argument("--out", required=True, metavar="PGM")
    p.add_argument("--overlay-out", metavar="PPM", help="blend the heat map onto the source image")

    p = sub.add_parser("eval", help="localization protocol over a JSONL manifest")
    _add_model_args(p)
    p.add_argument("--manifest", required=True)
    _add_td_args(p)
    p.add_argument("--report-out", metavar="JSON", help="also write the report to a file")

    return parser


def _load_model(args):
    weights = load_weights(args.weights)
    return load_network(args.net, weights)


def _config_from(args) -> SelectionConfig:
    return SelectionConfig(
        stop_layer=args.stop_layer,
        epsilon=args.epsilon,
        sc_alpha=args.sc_alpha,
        offset_fc=args.offset_fc,
        offset_bridge=args.offset_bridge,
        stage2_enabled=not args.no_stage2,
    )


def _write_trace(args, result) -> None:
    if getattr(args, "debug_trace", None):
        payload = {
            "class_k": result.class_k,
            "sparsity": result.sparsity(),
            "layers": [rec.to_json() for rec in result.records],
        }
        with open(args.debug_trace, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)


def cmd_classify(args) -> int:
    net = _load_model(args)
    image = read_image(args.image)
    trace = network_forward(net, image)
    scores = trace.scores()
    order = np.argsort(-scores, kind="stable")[:5]
    top = []
    for idx in order:
        entry = {"index": int(idx), "score": float(scores[idx])}
        if net.labels is not None and idx < len(net.labels):
            entry["label"] = net.labels[idx]
        top.append(entry)
    json.dump({"top5": top}, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_localize(args) -> int:
    net = _load_model(args)
    image = read_image(args.image)
    config = _config_from(args)
    box, amap, result = localize_image(net, image, args.class_index, config,
                                       threshold_mode=args.threshold_mode)
    _write_trace(args, result)
    if args.map_out:
        v = amap.values
        hi = v.max()
        gray = np.zeros(v.shape, dtype=np.uint8) if hi == 0 else \
            np.floor(v / hi * 255.0 + 0.5).astype(np.uint8)
        write_pgm(gray, args.map_out)
    json.dump({
        "bbox": box.to_list(),
        "class_index": args.class_index,
        "stop_layer": config.stop_layer,
        "sparsity": result.sparsity(),
    }, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_chmap(args) -> int:
    net = _load_model(args)
    image = read_image(args.image)
    config = _config_from(args)
    trace = network_forward(net, image)
    result = td_pass(trace, net, args.class_index, config)
    _write_trace(args, result)
    if config.stop_layer == "input":
        geom = RFGeometry()
    else:
        geom = rf_geometry(net.layers[:net.layer_index(config.stop_layer) + 1])
    amap = threshold_map(attention_map(result.gating), mode=args.threshold_mode)
    image_hw = (net.input_shape[1], net.input_shape[2])
    points = map_to_input(amap, geom, image_hw)
    if not points:
        raise LocalizationError("no attended region")
    chmap = gaussian_smooth(ch_accumulate(points, geom, image_hw), sigma=args.sigma)
    render(chmap, args.out)
    if args.overlay_out:
        if args.image.endswith(".ppm"):
            src = read_ppm(args.image)
        else:
            gray = (image.data[0] * 255.0 + 0.5).astype(np.uint8)
            src = np.stack([gray] * 3, axis=-1)
        render_overlay(chmap, src, args.overlay_out)
    json.dump({"out": args.out, "anchors": len(points), "sigma": args.sigma},
              sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


def cmd_eval(args) -> int:
    net = _load_model(args)
    config = _config_from(args)
    records = read_manifest(args.manifest)

    def dataset():
        for rec in records:
            image = read_image(rec["path"])
            boxes = [BBox(*map(int, b)) for b in rec["boxes"]]
            yield image, int(rec["label_index"]), boxes, rec["path"]

    report = evaluate(dataset(), net, config, threshold_mode=args.threshold_mode,
                      log=lambda msg: print(msg, file=sys.stderr))
    print(report.to_table(), file=sys.stderr)
    json.dump(report.to_json(), sys.stdout, indent=2)
    sys.stdout.write("\n")
    if args.report_out:
        with open(args.report_out, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
    return 0


_COMMANDS = {
    "classify": cmd_classify,
    "localize": cmd_localize,
    "chmap": cmd_chmap,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, FormatError, NetworkError, GeometryError,
            UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (TDDiedError, LocalizationError) as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
