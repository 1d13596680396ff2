"""
mvhm command line.

    mvhm generate    --out DIR [--config FILE] [--count N] [--seed S] ...
    mvhm evaluate    PRED_FILE DATASET_DIR
    mvhm coarsen     --out FILE [--levels 3] [--seed 0]
    mvhm triangulate DATASET_DIR --out PRED_FILE
    mvhm inspect     PATH

Exit codes: 0 success, 2 validation failure, 3 I/O failure.
"""

import argparse
import json
import logging
import sys
import time

from . import io, pipeline
from .config import load_config
from .errors import MVHMError

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 2, 3


def _print(obj):
    print(json.dumps(obj, indent=1, sort_keys=True))


def _config(args):
    overrides = {
        "seed": args.seed, "count": args.count, "poses": args.poses, "workers": args.workers,
        "rig": {"views": args.views, "radius": args.radius},
        "render": {"resolution": args.resolution},
    }
    return load_config(args.config, overrides)


def cmd_generate(args):
    cfg = _config(args)
    t0 = time.perf_counter()
    m = pipeline.generate(cfg, out=args.out)
    dt = time.perf_counter() - t0
    images = m["generated"] * int(cfg["rig"]["views"])
    print(f"generated {m['generated']} samples ({images} images), skipped {len(m['skipped'])}, "
          f"{dt:.1f} s, {images / dt if dt > 0 else 0:.1f} images/s")
    return EXIT_OK


def cmd_evaluate(args):
    rep = pipeline.evaluate(args.predictions, args.dataset, steps=args.steps)
    d = rep.to_dict()
    if args.out:
        io.dump_json(args.out, d)
    if not args.curve:
        d.pop("pck_curve")
    _print(d)
    return EXIT_OK


def cmd_coarsen(args):
    cfg = load_config(args.config)
    levels = args.levels if args.levels is not None else int(cfg["coarsening"]["levels"])
    seed = args.seed if args.seed is not None else int(cfg["coarsening"]["seed"])
    budget = args.budget if args.budget is not None else int(cfg["mesh"]["vertex_budget"])
    h = pipeline.export_coarsening(args.out, budget, levels, seed)
    rep = pipeline.check_hierarchy(h)
    _print(rep)
    return EXIT_OK if not rep["problems"] else EXIT_VALIDATION


def cmd_triangulate(args):
    preds, report, _ = pipeline.triangulate_dataset(args.dataset)
    io.write_predictions(args.out, preds)
    _print(report)
    return EXIT_OK


def cmd_inspect(args):
    import os

    if os.path.isdir(args.path):
        rep = pipeline.check_dataset(args.path, mask_fraction=args.mask_fraction)
    else:
        rep = pipeline.check_hierarchy(io.read_hierarchy(args.path))
    _print(rep)
    return EXIT_OK if not rep["problems"] else EXIT_VALIDATION


def build_parser():
    p = argparse.ArgumentParser(prog="mvhm", description="Synthetic multi-view hand dataset tools.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render a multi-view dataset")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--config", help="YAML config file (defaults are packaged)")
    g.add_argument("--seed", type=int, help="master seed (default 0)")
    g.add_argument("--count", type=int, help="number of poses (default 10)")
    g.add_argument("--views", type=int, help="cameras on the ring (default 8)")
    g.add_argument("--radius", type=float, help="ring radius in mm (default 600)")
    g.add_argument("--resolution", type=int, help="square image size in px (default 256)")
    g.add_argument("--poses", help="pose file to use instead of the sampler")
    g.add_argument("--workers", type=int, help="worker processes (default 1)")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="score predictions against a dataset")
    e.add_argument("predictions")
    e.add_argument("dataset")
    e.add_argument("--steps", type=int, default=100, help="PCK thresholds for the AUC (default 100)")
    e.add_argument("--curve", action="store_true", help="print the PCK curve too")
    e.add_argument("--out", help="write the full report as JSON")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("coarsen", help="export the template mesh coarsening hierarchy")
    c.add_argument("--out", required=True)
    c.add_argument("--config")
    c.add_argument("--levels", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--budget", type=int, help="template vertex budget")
    c.set_defaults(func=cmd_coarsen)

    t = sub.add_parser("triangulate", help="DLT keypoints from a dataset's 2D annotations")
    t.add_argument("dataset")
    t.add_argument("--out", required=True, help="prediction file to write")
    t.set_defaults(func=cmd_triangulate)

    i = sub.add_parser("inspect", help="validate a dataset directory or a coarsening file")
    i.add_argument("path")
    i.add_argument("--mask-fraction", type=float, default=pipeline.MASK_FRACTION)
    i.set_defaults(func=cmd_inspect)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"mvhm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (MVHMError, ValueError) as exc:
        print(f"mvhm: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
