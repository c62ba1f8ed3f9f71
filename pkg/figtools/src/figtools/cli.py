"""figtools command line: ``figtools render recipe.fig [recipe2.fig ...]``."""

from __future__ import annotations

import argparse
import sys

from .recipes import SchemaError, load_recipe
from .render import render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figtools",
        description="render figures from underbag CSV/JSON outputs")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("render", help="render one or more recipe files")
    p.add_argument("recipes", nargs="+")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        for path in args.recipes:
            written = render(load_recipe(path))
            for out in written:
                print(out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
