"""Command line entry point: herl-plots {value-map, error-trace}."""

import argparse
import sys

from herlplots import render


def build_parser():
    parser = argparse.ArgumentParser(
        prog="herl-plots",
        description="render herl CSV artifacts into SVG figures")
    sub = parser.add_subparsers(dest="command", required=True)

    vm = sub.add_parser("value-map", help="6x6 state-value heat map")
    vm.add_argument("--csv", required=True, help="values.csv from a run")
    vm.add_argument("--grid", required=True, help="grid config INI")
    vm.add_argument("--out", required=True, help="output SVG path")

    et = sub.add_parser("error-trace", help="max-norm error trace plot")
    et.add_argument("--csv", required=True, help="error_trace.csv from a run")
    et.add_argument("--out", required=True, help="output SVG path")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "value-map":
            out = render.render_value_map(args.csv, args.grid, args.out)
        else:
            out = render.render_error_trace(args.csv, args.out)
    except render.RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
