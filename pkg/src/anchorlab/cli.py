"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to stderr,
results to stdout or to files under ``--output-dir``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path

from anchorlab import __version__, anchor_lab, kitti_io, net_geometry, synth
from anchorlab.detection_eval import EVAL_BINS, Interpolation, evaluate_dataset
from anchorlab.kitti_io import DifficultyBin, KittiParseError

log = logging.getLogger("anchorlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dims(text: str) -> tuple[int, int]:
    try:
        w, h = text.lower().split("x")
        w, h = int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError(f"dimensions must be positive, got {text!r}")
    return w, h


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return v


def _existing_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise argparse.ArgumentTypeError(f"not a directory: {path}")
    return p


def _emit_table(header, rows, fmt, out, extra=None):
    """Write rows as aligned text, CSV or JSON (list of records plus ``extra``)."""
    if fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    elif fmt == "json":
        payload = {"rows": [dict(zip(header, r)) for r in rows]}
        if extra:
            payload.update(extra)
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
        widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
        for r in cells:
            out.write("  ".join(c.rjust(widths[i]) if i else c.ljust(widths[i]) for i, c in enumerate(r)).rstrip() + "\n")
        for k, v in (extra or {}).items():
            out.write(f"{k}: {v}\n")


def _write_output(args, name: str, text: str):
    if args.output_dir is None:
        sys.stdout.write(text)
    else:
        path = Path(args.output_dir) / name
        path.write_text(text, encoding="utf-8")


def cmd_validate(args) -> int:
    frames = kitti_io.list_frames(args.dir)
    errors = []
    counts = {}

    def check(fid):
        try:
            return fid, kitti_io.read_file(frames[fid], results=args.results), None
        except KittiParseError as exc:
            return fid, None, str(exc)
        except (OSError, UnicodeDecodeError) as exc:
            return fid, None, f"{frames[fid]}: {exc}"

    ids = list(frames)
    if args.threads > 1 and len(ids) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            results = list(pool.map(check, ids))
    else:
        results = [check(fid) for fid in ids]

    n_objects = 0
    for fid, objs, err in results:
        if err is not None:
            errors.append(err)
            print(err, file=sys.stderr)
            continue
        n_objects += len(objs)
        for o in objs:
            counts[o.class_name] = counts.get(o.class_name, 0) + 1

    rows = [(cls, counts[cls]) for cls in sorted(counts)]
    extra = {"files": len(ids), "files_with_errors": len(errors), "objects": n_objects}
    buf = io.StringIO()
    _emit_table(["class", "objects"], rows, args.format, buf, extra if args.format != "csv" else None)
    _write_output(args, f"validate.{_ext(args.format)}", buf.getvalue())
    return EXIT_DATA if errors else EXIT_OK


def _ext(fmt):
    return {"text": "txt", "csv": "csv", "json": "json"}[fmt]


_DIFFICULTY_FILTERS = {
    "all": None,
    "easy": DifficultyBin.EASY,
    "moderate": DifficultyBin.MODERATE,
    "hard": DifficultyBin.HARD,
}


def cmd_anchors(args) -> int:
    labels = kitti_io.load_dir(args.labels, threads=args.threads)
    limit = _DIFFICULTY_FILTERS[args.difficulty]
    obs = []
    for fid in sorted(labels):
        for o in labels[fid]:
            if o.class_name != args.class_name:
                continue
            if limit is not None and kitti_io.classify_difficulty(o) > limit:
                continue
            obs.append((o.bbox.width, o.bbox.height))
    obs = [o for o in obs if o[0] > 0 and o[1] > 0]
    if len(obs) < args.k:
        raise DataError(f"found {len(obs)} {args.class_name} boxes, need at least k={args.k}")

    result = anchor_lab.kmeans_anchor_shapes(obs, args.k, args.seed, args.max_iter, args.tol, args.n_init)
    rows = [(f"{s.width:.4f}", f"{s.height:.4f}") for s in result.shapes]
    summary = {
        "observations": len(obs),
        "k": args.k,
        "objective_sq": f"{result.objective:.6f}",
        "objective_euclid": f"{result.euclidean_objective(obs):.6f}",
        "iterations": result.iterations,
        "converged": result.converged,
    }
    buf = io.StringIO()
    _emit_table(["width", "height"], rows, args.format, buf, summary if args.format != "csv" else None)
    _write_output(args, f"anchors.{_ext(args.format)}", buf.getvalue())
    if args.output_dir is not None:
        sbuf = io.StringIO()
        w = csv.writer(sbuf, lineterminator="\n")
        w.writerow(["width", "height", "cluster"])
        for (ow, oh), lab in zip(obs, result.labels):
            w.writerow([f"{ow:.2f}", f"{oh:.2f}", int(lab)])
        (Path(args.output_dir) / "observations.csv").write_text(sbuf.getvalue(), encoding="utf-8")
        (Path(args.output_dir) / "anchors_summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    else:
        log.info("objective (squared) %s, euclidean %s", summary["objective_sq"], summary["objective_euclid"])
    return EXIT_OK


def cmd_netinfo(args) -> int:
    net = net_geometry.builtin_net(args.net)
    if args.layer is not None:
        try:
            net = net.truncated(args.layer)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    dims = args.input or net.default_input
    try:
        report = net_geometry.layer_dims(net, dims, args.bytes_per_elem)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    m = args.train_multiplier
    rows = [
        (r.name, r.kind, f"{r.width}x{r.height}", r.channels, r.stride, f"{r.bytes * m / 1e6:.2f}")
        for r in report.rows
    ]
    extra = {
        "net": net.name,
        "input": f"{dims[0]}x{dims[1]}",
        "total_mb": f"{report.total_bytes * m / 1e6:.2f}",
    }
    buf = io.StringIO()
    _emit_table(["layer", "kind", "dims", "channels", "stride", "mb"], rows, args.format, buf,
                extra if args.format != "csv" else None)
    _write_output(args, f"netinfo.{_ext(args.format)}", buf.getvalue())
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate_dataset(args.det, args.gt, args.class_name, args.iou, args.interp, threads=args.threads)
    rows = []
    for b in EVAL_BINS:
        r = report.bins[b]
        rows.append((b.label, f"{r.ap:.4f}", r.positives, r.tp, r.fp, r.ignored))
    buf = io.StringIO()
    if args.format == "json":
        buf.write(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n")
    else:
        _emit_table(["difficulty", "ap", "gt", "tp", "fp", "ignored"], rows, args.format, buf)
    sys.stdout.write(buf.getvalue())
    if args.output_dir is not None:
        for b in EVAL_BINS:
            curve = report.bins[b].curve
            cbuf = io.StringIO()
            w = csv.writer(cbuf, lineterminator="\n")
            w.writerow(["threshold", "recall", "precision"])
            for t, rec, prec in zip(curve.thresholds, curve.recall, curve.precision):
                w.writerow([f"{t:.6f}", f"{rec:.6f}", f"{prec:.6f}"])
            (Path(args.output_dir) / f"pr_{b.label.lower()}.csv").write_text(cbuf.getvalue(), encoding="utf-8")
        (Path(args.output_dir) / f"ap.{_ext(args.format)}").write_text(buf.getvalue(), encoding="utf-8")
    return EXIT_OK


def cmd_synth(args) -> int:
    config = synth.PerturbConfig(
        center_noise_sigma=args.center_noise,
        scale_noise_sigma=args.scale_noise,
        drop_rate=args.drop_rate,
        false_positive_rate=args.fp_rate,
        score_model=args.score_model,
        seed=args.seed,
    )
    counts = synth.perturb(args.gt, config, args.out, args.image_size, threads=args.threads)
    sys.stdout.write(f"frames: {len(counts)}\ndetections: {sum(counts.values())}\n")
    return EXIT_OK


def _unit_interval(text):
    v = float(text)
    if not 0 <= v <= 1:
        raise argparse.ArgumentTypeError(f"must be in [0, 1], got {text}")
    return v


def _non_negative(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text}")
    return v


def _iou(text):
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"must be in (0, 1], got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    # SUPPRESS keeps a subcommand's defaults from overwriting options given before it.
    common.add_argument("--threads", type=_positive_int, default=argparse.SUPPRESS,
                        help="worker threads (default: $ANCHORLAB_THREADS or 1)")
    common.add_argument("--output-dir", default=argparse.SUPPRESS, help="write result files here instead of stdout")
    common.add_argument("--format", choices=["text", "csv", "json"], default=argparse.SUPPRESS,
                        help="output format (default csv; eval defaults to text)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = _Parser(prog="anchorlab", description=__doc__.splitlines()[0], parents=[common])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("validate", parents=[common], help="check KITTI label or result files")
    p.add_argument("dir", type=_existing_dir)
    p.add_argument("--results", action="store_true", help="expect 16-field result rows")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("anchors", parents=[common], help="K-Means anchor shapes from labels")
    p.add_argument("--labels", required=True, type=_existing_dir)
    p.add_argument("--class", dest="class_name", default="Car")
    p.add_argument("--difficulty", choices=sorted(_DIFFICULTY_FILTERS), default="all",
                   help="keep boxes at this difficulty or easier (default: all boxes)")
    p.add_argument("--k", type=_positive_int, default=9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iter", type=_positive_int, default=300)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--n-init", type=_positive_int, default=1)
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("netinfo", parents=[common], help="per-layer dims, stride and activation memory")
    p.add_argument("--net", choices=net_geometry.builtin_names(), default="vgg16")
    p.add_argument("--input", type=_dims, default=None, help="WxH (default: network's native input)")
    p.add_argument("--layer", default=None, help="stop after this layer")
    p.add_argument("--bytes-per-elem", type=_positive_int, default=4)
    p.add_argument("--train-multiplier", type=_non_negative, default=2.0)
    p.set_defaults(func=cmd_netinfo)

    p = sub.add_parser("eval", parents=[common], help="KITTI-style AP per difficulty")
    p.add_argument("--gt", required=True, type=_existing_dir)
    p.add_argument("--det", required=True, type=_existing_dir)
    p.add_argument("--class", dest="class_name", default="Car")
    p.add_argument("--iou", type=_iou, default=0.7)
    p.add_argument("--interp", choices=[i.value for i in Interpolation], default="r11")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", parents=[common], help="perturb ground truth into result files")
    p.add_argument("--gt", required=True, type=_existing_dir)
    p.add_argument("--out", default=None, help="result directory (default: --output-dir)")
    p.add_argument("--center-noise", type=_non_negative, default=0.0, help="pixels")
    p.add_argument("--scale-noise", type=_non_negative, default=0.0, help="log scale")
    p.add_argument("--drop-rate", type=_unit_interval, default=0.0)
    p.add_argument("--fp-rate", type=_non_negative, default=0.0, help="expected spurious boxes per image")
    p.add_argument("--score-model", choices=[m.value for m in synth.ScoreModel], default="iou_based")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--image-size", type=_dims, default=synth.KITTI_IMAGE)
    p.set_defaults(func=cmd_synth)
    return parser


def _resolve_threads(value):
    if value is not None:
        return value
    env = os.environ.get("ANCHORLAB_THREADS")
    if env:
        try:
            return _positive_int(env)
        except (ValueError, argparse.ArgumentTypeError):
            raise UsageError(f"ANCHORLAB_THREADS must be a positive integer, got {env!r}") from None
    return 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        try:
            args = build_parser().parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return exc.code if isinstance(exc.code, int) else EXIT_OK
        for name in ("threads", "output_dir", "format", "verbose"):
            if not hasattr(args, name):
                setattr(args, name, None)
        if args.verbose:
            log.setLevel(logging.INFO)
        args.threads = _resolve_threads(args.threads)
        if args.format is None:
            args.format = "text" if args.command == "eval" else "csv"
        if args.command == "synth":
            args.out = args.out or args.output_dir
            if args.out is None:
                raise UsageError("synth needs --out or --output-dir")
        if args.output_dir is not None:
            out = Path(args.output_dir)
            if out.exists() and not out.is_dir():
                raise UsageError(f"--output-dir {out} is not a directory")
            out.mkdir(parents=True, exist_ok=True)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (DataError, KittiParseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
