"""Command line entry point.

    splitflow-plots render --in RUN_DIR --kind KIND --out FILE.png

Exit codes: 0 success, 2 bad arguments or malformed inputs, 4 missing
or unreadable files.
"""

from __future__ import annotations

import argparse
import json
import sys

from .figures import KINDS, FigureSpec, render
from .io import PlotFileError, PlotSchemaError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitflow-plots",
        description="Render figures from a splitflow run directory.")
    sub = parser.add_subparsers(dest="command", required=True)
    cmd = sub.add_parser("render", help="render one figure")
    cmd.add_argument("--in", dest="in_dir", required=True,
                     help="run directory holding the analysis outputs")
    cmd.add_argument("--kind", required=True, choices=KINDS)
    cmd.add_argument("--out", dest="out_path", required=True,
                     help="output image path (extension picks the format)")
    cmd.add_argument("--times", type=float, nargs="+", default=None,
                     help="snapshot times to plot (nearest available)")
    cmd.add_argument("--cmap", default="viridis")
    cmd.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec_times = tuple(args.times) if args.times is not None else None
    try:
        spec = FigureSpec(in_dir=args.in_dir, kind=args.kind,
                          out_path=args.out_path,
                          snapshot_times=spec_times,
                          colormap=args.cmap, dpi=args.dpi)
        render(spec)
    except PlotFileError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    except (PlotSchemaError, json.JSONDecodeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 4
    print(f"wrote {args.out_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
