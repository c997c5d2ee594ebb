"""Command-line figure renderer for simulator metric CSVs."""

import argparse
import sys
from pathlib import Path

from .render import KINDS, PlotSpec, RenderError, render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cfplots", description="Render CDF and BER figures from metric CSVs"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one figure")
    p.add_argument("--csv", type=Path, nargs="+", required=True, help="input CSV file(s)")
    p.add_argument("--kind", choices=KINDS, required=True)
    p.add_argument(
        "--group-by",
        type=str,
        default="scheme,alpha_rad,L_k,precoder",
        help="comma list of CSV columns labelling the curves",
    )
    p.add_argument("--out", type=Path, required=True,
                   help="output path; .png/.pdf suffix selects one format, none writes both")
    p.add_argument("--metric", type=str, default=None, help="explicit metric filter")
    p.add_argument("--title", type=str, default=None)
    p.add_argument("--logx", action="store_true")
    p.add_argument("--orders", type=str, default=None,
                   help="comma list of modulation orders (one per CSV, ber_vs_order only)")
    p.set_defaults(func=cmd_render)
    return parser


def cmd_render(args):
    spec = PlotSpec(
        csv_paths=[str(p) for p in args.csv],
        kind=args.kind,
        group_by=tuple(k.strip() for k in args.group_by.split(",") if k.strip()),
        out_path=args.out,
        metric=args.metric,
        title=args.title,
        logx=args.logx,
        orders=[int(o) for o in args.orders.split(",")] if args.orders else None,
    )
    paths = render(spec)
    for path in paths:
        print(f"wrote {path}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RenderError as exc:
        print(f"render error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
