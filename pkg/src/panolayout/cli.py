"""Command line entry point: ``panolayout {align,synth,fit,eval,augment}``.

Exit codes: 0 success, 1 algorithmic failure on at least one input, 2 usage
or file errors. The worker count comes from ``PANOLAYOUT_WORKERS``.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .errors import PanoLayoutError

log = logging.getLogger("panolayout")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="panolayout", description="Manhattan room layouts from panorama predictions")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("align", help="estimate the Manhattan frame and rotate a panorama upright")
    a.add_argument("pano")
    a.add_argument("--segments", help="JSON list of {p0, p1} unit vectors instead of detection")
    a.add_argument("-o", "--out", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("out")
    s.add_argument("--config", help="JSON pipeline configuration")
    s.add_argument("--per-bucket", type=int, help="rooms per corner-count bucket")
    s.add_argument("--n-rooms", type=int, help="total rooms split by bucket proportions")
    s.add_argument("--seed", type=int)

    f = sub.add_parser("fit", help="fit layouts to stored predictions")
    f.add_argument("data", help="dataset root or a single room directory")
    f.add_argument("--method", required=True, choices=pipeline.METHODS)
    f.add_argument("--variant", default="noisy", choices=("noisy", "clean"))
    f.add_argument("--config", help="JSON pipeline configuration")
    f.add_argument("--cuboid", action="store_true",
                   help="ceiling method: fit the bounding rectangle of the floor plan")
    f.add_argument("-o", "--out", required=True)

    e = sub.add_parser("eval", help="score predicted layouts against ground truth")
    e.add_argument("pred")
    e.add_argument("gt")
    e.add_argument("-o", "--out", required=True)

    g = sub.add_parser("augment", help="augment a panorama together with its layout")
    g.add_argument("pano")
    g.add_argument("layout")
    g.add_argument("--op", required=True, choices=pipeline.AUGMENT_OPS)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--kx", type=float, default=1.0)
    g.add_argument("--kz", type=float, default=2.0)
    g.add_argument("--shift", type=int, help="columns for --op rotate (random if omitted)")
    g.add_argument("--gamma", type=float, help="exponent for --op luminance (random if omitted)")
    g.add_argument("-o", "--out", required=True)
    return p


def _config(args):
    cfg = pipeline.PipelineConfig.load(getattr(args, "config", None))
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "per_bucket", None) is not None:
        cfg.rooms_per_bucket, cfg.n_rooms = args.per_bucket, None
    elif getattr(args, "n_rooms", None) is not None:
        cfg.rooms_per_bucket, cfg.n_rooms = None, args.n_rooms
    if getattr(args, "cuboid", False):
        cfg.cuboid = True
    return cfg


def run(args) -> int:
    if args.command == "align":
        _, R = pipeline.align_file(args.pano, args.out, args.segments)
        print(f"rotation written to {args.out}/rotation.json")
        return EXIT_OK
    if args.command == "synth":
        manifest = pipeline.synth_dataset(args.out, _config(args))
        print(f"{len(manifest['rooms'])} rooms written to {args.out}")
        return EXIT_OK
    if args.command == "fit":
        summary = pipeline.fit_dataset(args.data, args.out, args.method, args.variant, _config(args))
        n = len(summary["results"])
        print(f"{args.method}: {n - len(summary['failed'])}/{n} fitted, "
              f"mean {summary['mean_time_ms'] or 0:.1f} ms per room")
        for r in summary["results"]:
            if not r["ok"]:
                log.warning("%s: %s", r["id"], r["error"])
        return EXIT_FAILURE if summary["failed"] else EXIT_OK
    if args.command == "eval":
        report, skipped = pipeline.eval_dirs(args.pred, args.gt, args.out)
        print(report.to_csv(), end="")
        print(report.confusion.format())
        if skipped:
            print(f"skipped (no prediction): {', '.join(skipped)}")
        return EXIT_OK
    if args.command == "augment":
        _, _, info = pipeline.augment_files(args.pano, args.layout, args.out, args.op, args.seed,
                                            args.kx, args.kz, args.shift, args.gamma)
        print(f"{args.op} {info} written to {args.out}")
        return EXIT_OK
    raise AssertionError(args.command)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return run(args)
    except PanoLayoutError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
