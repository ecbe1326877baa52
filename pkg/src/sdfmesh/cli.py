"""Command line front end.

Example::

    sdfmesh mesh --config run.cfg --ntotal 5000 --alg hybrid --out results/
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config
from .exceptions import MeshingError
from .io import write_mesh, write_outputs, write_svg
from .pipeline import run_pipeline

logger = logging.getLogger("sdfmesh")


def build_parser():
    parser = argparse.ArgumentParser(prog="sdfmesh", description="2D triangular mesh generator")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("mesh", help="mesh a shape described by a config file")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--ntotal", type=int, dest="n_total")
    p.add_argument("--alg", choices=["dm", "cvd", "hybrid"], dest="algorithm")
    p.add_argument("--threads", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--output-interval", type=int, dest="output_interval")
    return parser


def cmd_mesh(args):
    overrides = {k: getattr(args, k) for k in
                 ("n_total", "algorithm", "threads", "seed", "output_dir", "output_interval")}
    cfg = load_config(args.config, overrides=overrides)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    shape = cfg.build_shape()
    contour = shape.contour_segments()

    def snapshot(iteration, points, category, tris):
        stem = out / f"mesh_{iteration:06d}"
        write_mesh(stem.with_suffix(".txt"), points, category, tris)
        write_svg(stem.with_suffix(".svg"), points, tris, cfg.domain, contour)

    result = run_pipeline(cfg, shape=shape, snapshot=snapshot)
    paths = write_outputs(result, out)
    s = result.summary()
    print(f"{len(result.points)} points, {s['count']} triangles, {result.n_iter} iterations "
          f"({result.termination_reason})")
    print(f"alpha median {s['alpha_median']:.4f} max {s['alpha_max']:.4f}; "
          f"{s['pct_alpha_lt_1_2']:.2f}% below 1.2")
    print(f"wrote {paths['mesh']}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "mesh":
            return cmd_mesh(args)
    except (MeshingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
