"""Command-line entry point: ``occtrack {track,eval,simulate,augment,losses}``.

Exit status is 0 on success, 1 on a usage error and 2 on a data error.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from .errors import DataError, ParseError
from .geometry import BBox, ciou_loss
from .losses import bce_loss, reid_ce_loss, total_loss
from .metrics import evaluate
from .occlusion import random_erase
from .sim import config_from_mapping, generate
from .tracker import Tracker, TrackerParams

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _tracker_args(p):
    defaults = TrackerParams()
    for f in fields(TrackerParams):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(defaults, f.name)
        if isinstance(default, bool):
            p.add_argument(flag, type=_parse_bool, default=None, metavar="BOOL",
                           help=f"(default: {default})")
        else:
            p.add_argument(flag, type=type(default), default=None,
                           help=f"(default: {default})")


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser():
    defaults = TrackerParams()
    parser = _Parser(prog="occtrack", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser(
        "track", help="run the tracker on a detection file",
        description=(f"Track detections. Score thresholds default to s_init={defaults.s_init}, "
                     f"s_high={defaults.s_high}, s_low={defaults.s_low}. Settings come from "
                     "the defaults, then --config, then individual flags."))
    p.add_argument("--dets", required=True, help="MOT-format detection file")
    p.add_argument("--embs", help="embedding sidecar aligned with --dets")
    p.add_argument("--config", help="key=value file overriding tracker parameters")
    p.add_argument("--out", required=True, help="result file to write")
    _tracker_args(p)

    p = sub.add_parser("eval", help="score a result file against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--out", required=True, help="JSON report path")

    p = sub.add_parser("simulate", help="write a synthetic occlusion scenario")
    p.add_argument("--config", required=True, help="key=value scenario file")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("augment", help="background-paste erasing on one image")
    p.add_argument("--image", required=True)
    p.add_argument("--boxes", required=True, help="x,y,w,h rows or a MOT file")
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--ratio", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-mask", required=True)

    p = sub.add_parser("losses", help="evaluate the loss kernels on a sample file")
    p.add_argument("--input", required=True)
    return parser


def _tracker_params(args):
    values = {}
    if args.config:
        values.update(io.read_keyvalue(args.config))
    for f in fields(TrackerParams):
        v = getattr(args, f.name)
        if v is not None:
            values[f.name] = v
    return TrackerParams.from_mapping(values)


def cmd_track(args):
    params = _tracker_params(args)
    records = io.parse_mot(args.dets)
    embeddings = io.parse_embeddings(args.embs) if args.embs else None
    frames = io.detections_by_frame(records, embeddings)
    start = time.perf_counter()
    rows = Tracker(params).run(frames)
    elapsed = time.perf_counter() - start
    io.write_mot(rows, args.out)
    fps = len(frames) / elapsed if elapsed > 0 else float("inf")
    print(f"tracked {len(frames)} frames, {len({r.id for r in rows})} tracks, {fps:.1f} frames/s")
    return 0


def cmd_eval(args):
    report = evaluate(io.parse_mot(args.gt), io.parse_mot(args.pred), args.iou)
    Path(args.out).write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(report.table())
    return 0


def cmd_simulate(args):
    cfg = config_from_mapping(io.read_keyvalue(args.config))
    gt, frames = generate(cfg)
    out = io.ensure_dir(args.out_dir)
    io.write_mot(gt, out / "gt.txt", gt=True)
    io.write_detections(frames, out / "dets.txt")
    _, embeddings = io.detection_records(frames)
    io.write_embeddings(embeddings, out / "embs.txt")
    print(f"wrote {len(gt)} ground-truth rows and {len(embeddings)} detections to {out}")
    return 0


def cmd_augment(args):
    img = io.read_image(args.image)
    boxes = io.parse_boxes(args.boxes)
    out, mask = random_erase(img, boxes, args.tau, args.ratio, np.random.default_rng(args.seed))
    io.write_image(out, args.out_image)
    io.write_mask(mask, args.out_mask)
    print(f"occluded {int((mask == 0).sum())} pixels")
    return 0


def _read_loss_samples(path):
    logits, labels, reg, probs, ids = [], [], [], [], []
    for lineno, line in io.content_lines(path):
        kind, *vals = [v.strip() for v in line.split(",")]
        try:
            if kind == "cls" and len(vals) == 2:
                logits.append(float(vals[0]))
                labels.append(int(vals[1]))
            elif kind == "reg" and len(vals) == 8:
                v = [float(x) for x in vals]
                reg.append((BBox(*v[:4]), BBox(*v[4:])))
            elif kind == "reid" and len(vals) >= 2:
                ids.append(int(vals[0]))
                probs.append([float(x) for x in vals[1:]])
            else:
                raise ParseError(f"cannot read {kind!r} sample with {len(vals)} values", lineno)
        except (ValueError, DataError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), lineno) from None
    return logits, labels, reg, probs, ids


def cmd_losses(args):
    logits, labels, reg, probs, ids = _read_loss_samples(args.input)
    try:
        l_cls = bce_loss(logits, labels) if logits else 0.0
        l_reg = sum(ciou_loss(p, g) for p, g in reg)
        if probs and len({len(p) for p in probs}) != 1:
            raise ValueError("reid samples have different class counts")
        l_reid = reid_ce_loss(np.array(probs), np.array(ids)) if probs else 0.0
    except (ValueError, IndexError) as exc:
        raise ParseError(str(exc)) from None
    result = {"cls": l_cls, "reg": l_reg, "reid": l_reid,
              "total": total_loss(l_cls, l_reg, l_reid)}
    print(json.dumps(result, indent=2))
    return 0


COMMANDS = {"track": cmd_track, "eval": cmd_eval, "simulate": cmd_simulate,
            "augment": cmd_augment, "losses": cmd_losses}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (DataError, OSError) as exc:
        print(f"occtrack {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
