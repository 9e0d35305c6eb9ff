"""dacpf-plot: render one figure from a directory of benchmark CSV runs.

Exit codes follow the harness convention: 0 on success, 2 for anything
wrong with the request or its inputs.
"""
from __future__ import annotations

import argparse
import sys

from .figures import KINDS, FigureSpec, PlotError, render

__all__ = ["main"]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dacpf-plot",
        description="render benchmark CSV directories as figures",
    )
    parser.add_argument("figure", choices=KINDS, metavar="FIGURE",
                        help=f"one of: {', '.join(KINDS)}")
    parser.add_argument("--in", dest="in_dir", required=True, metavar="DIR",
                        help="run directory, or a parent holding several")
    parser.add_argument("--out", required=True, metavar="FILE",
                        help="image file to write (.svg or .png)")
    parser.add_argument("--metric", help="metric column to plot "
                        "(kind-specific default, e.g. w1_avg, mean, err2)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.figure, out=args.out, metric=args.metric)
        out = render(spec, args.in_dir)
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
