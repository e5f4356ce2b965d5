"""Command-line front end: ``vpfusion {inspect,pair,fuse,gradcheck,eval,selftest}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 failed internal
check. Failures print one line, ``error: <category>: <message>``, to stderr.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import pipeline
from .config import RunConfig, parse_config_text
from .evaluator import DIFFICULTIES, evaluate, mean_average_precision
from .exceptions import ConfigError, IncompleteTableError, VPFError
from .gradcheck import TOLERANCE, check_fusion_gradients
from .kitti_io import CLASSES, parse_labels

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


class CheckFailed(Exception):
    category = "check-failed"


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--cv", type=int, dest="c_v")
    common.add_argument("--cp", type=int, dest="c_p")
    common.add_argument("--stride", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--sample", help="KITTI-layout directory (default: bundled sample)")
    common.add_argument("--frame")
    common.add_argument("--velodyne")
    common.add_argument("--calib")
    common.add_argument("--image")
    common.add_argument("--labels")
    common.add_argument("--weights", help="weight file to use instead of seeded init")
    common.add_argument("--scatter", choices=("bilinear", "center_cell"))
    common.add_argument("--occlusion-ignore-depth", action="store_true", default=None)
    common.add_argument("--format", choices=("text", "jsonl"), default="text")

    parser = _Parser(prog="vpfusion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("inspect", parents=[common], help="dump a parsed KITTI frame")
    sub.add_parser("pair", parents=[common], help="voxel-pixel pair table with all four parameters")
    fuse = sub.add_parser("fuse", parents=[common], help="pairing plus one fusion pass; residual statistics")
    fuse.add_argument("--save-weights", help="write the weights used to this file")
    grad = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of the fusion chain")
    grad.add_argument("--seeds", type=int, default=1, help="check seeds seed .. seed+N-1")
    ev = sub.add_parser("eval", parents=[common], help="AP@R40 table and mAP")
    ev.add_argument("--det-dir")
    ev.add_argument("--label-dir")
    sub.add_parser("selftest", parents=[common], help="run the built-in oracle checks")
    return parser


_FLAG_KEYS = (
    "c_v", "c_p", "stride", "seed", "sample", "frame", "velodyne", "calib", "image",
    "labels", "weights", "scatter", "occlusion_ignore_depth", "det_dir", "label_dir",
)


def resolve_config(args) -> RunConfig:
    config = RunConfig()
    if args.config:
        parse_config_text(Path(args.config).read_text(encoding="utf-8"), config)
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        config.set(key, value)
    for key in _FLAG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(config, key, value)
    return config.validate()


def _header(out, command, config):
    out.write(f"# vpfusion {command}\n")
    for line in config.to_text().splitlines():
        out.write(f"# {line}\n")


def _record(out, **fields):
    out.write(json.dumps(fields, sort_keys=True) + "\n")


def cmd_inspect(config, args, out):
    frame = pipeline.load_frame(config)
    pts = frame.cloud.points
    if args.format == "jsonl":
        _record(out, kind="points", count=len(pts))
        for name in ("p2", "r0_rect", "tr_velo_to_cam"):
            _record(out, kind="calib", key=name, values=getattr(frame.calib, name).tolist())
        _record(out, kind="image", width=frame.image.width, height=frame.image.height)
        for b in frame.labels:
            _record(out, kind="label", type=b.type, bbox2d=list(b.bbox2d), dims=list(b.dims),
                    location=list(b.location), rotation_y=b.rotation_y, score=b.score)
        return EXIT_OK
    out.write(f"points: {len(pts)}\n")
    if len(pts):
        out.write("  min: " + " ".join(f"{v:.3f}" for v in pts.min(axis=0)) + "\n")
        out.write("  max: " + " ".join(f"{v:.3f}" for v in pts.max(axis=0)) + "\n")
    for name in ("p2", "r0_rect", "tr_velo_to_cam"):
        out.write(f"{name}:\n")
        for row in getattr(frame.calib, name):
            out.write("  " + " ".join(f"{v:12.6f}" for v in row) + "\n")
    out.write(f"r0_rect orthonormal: {frame.calib.is_rectification_orthonormal()}\n")
    out.write(f"image: {frame.image.width}x{frame.image.height}\n")
    out.write(f"labels: {len(frame.labels)}\n")
    for b in frame.labels:
        out.write(f"  {b.type:<12} occ={b.occlusion} trunc={b.truncation:.2f} "
                  f"h2d={b.height_2d:.1f} dims=({', '.join(f'{v:.2f}' for v in b.dims)}) "
                  f"loc=({', '.join(f'{v:.2f}' for v in b.location)}) ry={b.rotation_y:.2f}\n")
    return EXIT_OK


PAIR_COLUMNS = ("i", "j", "k", "u_min", "v_min", "u_max", "v_max", "depth",
                "points", "occluders", "area", "p_d", "p_o", "p_a", "p_c")


def write_pair_table(pairs, out, fmt="text"):
    if fmt == "jsonl":
        for pr in pairs:
            r = pr.roi
            _record(out, kind="pair", voxel=list(pr.voxel_index),
                    roi=[r.u_min, r.v_min, r.u_max, r.v_max], depth=r.depth,
                    points=pr.point_count, occluders=pr.occluder_count, area=pr.raw_area,
                    p_d=pr.p_d, p_o=pr.p_o, p_a=pr.p_a, p_c=pr.p_c)
        return
    out.write("{:>5} {:>5} {:>5} {:>10} {:>10} {:>10} {:>10} {:>9} {:>6} {:>9} {:>10} {:>8} {:>8} {:>8} {:>8}\n".format(*PAIR_COLUMNS))
    for pr in pairs:
        r = pr.roi
        out.write(
            f"{pr.voxel_index[0]:5d} {pr.voxel_index[1]:5d} {pr.voxel_index[2]:5d} "
            f"{r.u_min:10.4f} {r.v_min:10.4f} {r.u_max:10.4f} {r.v_max:10.4f} {r.depth:9.4f} "
            f"{pr.point_count:6d} {pr.occluder_count:9d} {pr.raw_area:10.4f} "
            f"{pr.p_d:8.6f} {pr.p_o:8.6f} {pr.p_a:8.6f} {pr.p_c:8.6f}\n"
        )


def cmd_pair(config, args, out):
    frame = pipeline.load_frame(config)
    result = pipeline.run_pairing(frame, config)
    if args.format == "text":
        out.write(f"voxels: {len(result.grid)}  pairs: {len(result.pairs)}  "
                  f"feature map: {result.camera_map.width}x{result.camera_map.height}x{result.camera_map.channels}\n")
    write_pair_table(result.pairs, out, args.format)
    return EXIT_OK


def cmd_fuse(config, args, out):
    frame = pipeline.load_frame(config)
    result = pipeline.run_pairing(frame, config)
    weights = pipeline.fusion_weights(config)
    if getattr(args, "save_weights", None):
        from .vpf_layer import save_weights

        Path(args.save_weights).write_bytes(save_weights(weights))
    _, _, stats = pipeline.run_fusion(result, config, weights)
    fields = vars(stats)
    if args.format == "jsonl":
        _record(out, kind="fuse", **fields)
    else:
        for key, value in fields.items():
            out.write(f"{key}: {value:.12g}\n" if isinstance(value, float) else f"{key}: {value}\n")
    return EXIT_OK


def cmd_gradcheck(config, args, out):
    worst = 0.0
    for seed in range(config.seed, config.seed + args.seeds):
        report = check_fusion_gradients(config.c_v, config.c_p, seed)
        worst = max(worst, report.max_rel_error)
        if args.format == "jsonl":
            _record(out, kind="gradcheck", seed=seed, c_v=config.c_v, c_p=config.c_p,
                    max_rel_error=report.max_rel_error, per_tensor=report.per_tensor)
        else:
            out.write(f"seed {seed}: c_v={config.c_v} c_p={config.c_p} eps={report.eps:g} "
                      f"coordinates={report.coordinates}\n")
            for name, err in report.per_tensor.items():
                out.write(f"  {name:<16} {err:.3e}\n")
            out.write(f"  max relative error: {report.max_rel_error:.3e} ({report.worst})\n")
    out.write(f"max relative error: {worst:.3e}\n" if args.format == "text" else "")
    if not worst < TOLERANCE:
        raise CheckFailed(f"max relative error {worst:.3e} exceeds {TOLERANCE:g}")
    return EXIT_OK


def cmd_eval(config, args, out):
    if not config.label_dir:
        raise ConfigError("eval needs --label-dir")
    det_dir = Path(config.det_dir or config.label_dir)
    label_dir = Path(config.label_dir)
    frames = []
    for name in pipeline.label_files(label_dir):
        gts = parse_labels((label_dir / name).read_text(encoding="utf-8"))
        det_path = det_dir / name
        dets = parse_labels(det_path.read_text(encoding="utf-8")) if det_path.exists() else []
        frames.append((dets, gts))
    table = evaluate(frames, config.iou_thresholds)
    try:
        m = mean_average_precision(table)
    except IncompleteTableError:
        m = None
    if args.format == "jsonl":
        for c in CLASSES:
            for d in DIFFICULTIES:
                _record(out, kind="ap", cls=c, difficulty=d, ap=table[(c, d)])
        _record(out, kind="map", map=m, frames=len(frames))
        return EXIT_OK
    out.write(f"frames: {len(frames)}\n")
    out.write(f"{'class':<12}" + "".join(f"{d:>10}" for d in DIFFICULTIES) + "\n")
    for c in CLASSES:
        cells = ("{:10.2f}".format(table[(c, d)]) if table[(c, d)] is not None else f"{'n/a':>10}" for d in DIFFICULTIES)
        out.write(f"{c:<12}" + "".join(cells) + "\n")
    out.write(f"mAP: {m:.2f}\n" if m is not None else "mAP: n/a\n")
    return EXIT_OK


def cmd_selftest(config, args, out):
    from .selftest import run_all

    failed = []
    for name, ok, detail in run_all():
        out.write(f"{'PASS' if ok else 'FAIL'} {name}: {detail}\n")
        if not ok:
            failed.append(name)
    if failed:
        raise CheckFailed(f"{len(failed)} self-test check(s) failed: {', '.join(failed)}")
    return EXIT_OK


COMMANDS = {
    "inspect": cmd_inspect,
    "pair": cmd_pair,
    "fuse": cmd_fuse,
    "gradcheck": cmd_gradcheck,
    "eval": cmd_eval,
    "selftest": cmd_selftest,
}


def run(argv=None, stdout=None, stderr=None) -> int:
    out = stdout or sys.stdout
    err = stderr or sys.stderr
    # the report is buffered so a data error leaves only the error line
    buf = io.StringIO()
    try:
        args = build_parser().parse_args(argv)
        config = resolve_config(args)
        _header(buf, args.command, config)
        code = COMMANDS[args.command](config, args, buf)
        out.write(buf.getvalue())
        return code
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except ConfigError as exc:
        err.write(f"error: {exc.category}: {exc}\n")
        return EXIT_USAGE
    except VPFError as exc:
        err.write(f"error: {exc.category}: {exc}\n")
        return EXIT_DATA
    except OSError as exc:
        err.write(f"error: io: {exc}\n")
        return EXIT_DATA
    except CheckFailed as exc:
        out.write(buf.getvalue())
        err.write(f"error: {exc.category}: {exc}\n")
        return EXIT_INTERNAL
    except Exception as exc:
        err.write(f"error: internal: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
