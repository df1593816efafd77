"""figures CLI: render one figure kind from archived run directories."""

import argparse
import json
import sys

from .figures import KINDS, FigureSpec, render
from .io import RunDirError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="figures",
        description="Render analysis figures from xgmsim run archives.",
    )
    ap.add_argument("--kind", required=True, choices=KINDS)
    ap.add_argument("--runs", required=True, nargs="+",
                    help="one or more run directories (with manifest.json)")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--dpi", type=int, default=150)
    ap.add_argument("--title", default="")
    ap.add_argument("--dump-aggregates", default=None,
                    help="also write the plotted aggregates as JSON")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    spec = FigureSpec(kind=args.kind, runs=args.runs, out=args.out,
                      dpi=args.dpi, title=args.title)
    try:
        aggregates = render(spec)
    except RunDirError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if args.dump_aggregates:
        with open(args.dump_aggregates, "w", encoding="utf-8") as fh:
            json.dump(aggregates, fh, indent=1, sort_keys=True)
            fh.write("\n")
    print(f"{args.kind} -> {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
