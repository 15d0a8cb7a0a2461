"""Tiny CLI: render one figure kind or everything available."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .render import FIGURE_KINDS, PlotSpec, SchemaError, render, render_all


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="swipt-plots",
                                 description="Render sweep CSVs into figures.")
    ap.add_argument("kind", choices=list(FIGURE_KINDS) + ["all"])
    ap.add_argument("inputs", nargs="+", help="results.csv / trace.csv paths")
    ap.add_argument("-o", "--output", required=True,
                    help="image path (or directory when kind=all)")
    ap.add_argument("--trace", default=None, help="trace CSV for kind=all")
    args = ap.parse_args(argv)
    try:
        if args.kind == "all":
            written = render_all(args.inputs[0], args.output, trace_csv=args.trace)
            for p in written:
                print(p)
        else:
            print(render(PlotSpec(inputs=args.inputs, kind=args.kind,
                                  output=Path(args.output))))
    except (SchemaError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
