"""dqtrack-plot: render a figure from a trial CSV.

Exit codes: 0 on success, 1 for schema or argument problems, 2 for other
failures.
"""

from __future__ import annotations

import argparse
import sys

from .reader import SchemaError
from .render import KINDS, PlotSpec, render


def build_parser():
    parser = argparse.ArgumentParser(prog="dqtrack-plot", description=__doc__)
    parser.add_argument("--kind", choices=KINDS, required=True)
    parser.add_argument("--in", dest="input_path", required=True,
                        metavar="TRIAL_CSV")
    parser.add_argument("--out", dest="output_path", required=True,
                        metavar="IMAGE")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        out = render(PlotSpec(args.input_path, args.kind, args.output_path,
                              args.dpi))
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # matplotlib/backend failures
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
