"""Recipe files and input readers for the figure toolkit.

A recipe is a flat ``key = value`` file::

    kind  = f_lines | heatmap | logit_hist | order_params |
            variance_curves | coeff_ratio
    input = glob of CSV inputs (underbag-csv tagged)
    report = glob of solve-report JSON files (logit_hist overlays)
    out   = output path prefix
    title = optional panel title

Inputs are the delimited files written by the solver CLI; this package
only reads them and draws. All science numbers, including the density
overlays (taken from the ``prediction_law`` block of solve reports),
come from the upstream tool.
"""

from __future__ import annotations

import csv
import glob
import json
from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("f_lines", "heatmap", "logit_hist", "order_params",
         "variance_curves", "coeff_ratio")


class SchemaError(Exception):
    """An input file does not match the documented schema."""


@dataclass(frozen=True)
class FigureRecipe:
    kind: str
    inputs: tuple
    reports: tuple
    out: str
    title: str = ""
    options: dict = field(default_factory=dict)


def parse_keyvalue(text: str, path="<recipe>") -> dict:
    entries = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        entries[key.strip()] = value.strip()
    return entries


def load_recipe(path) -> FigureRecipe:
    entries = parse_keyvalue(Path(path).read_text(), path=str(path))
    kind = entries.pop("kind", None)
    if kind not in KINDS:
        raise SchemaError(f"{path}: recipe kind must be one of {KINDS}, got {kind!r}")
    base = Path(path).parent

    def expand(key):
        pattern = entries.pop(key, "")
        if not pattern:
            return ()
        matches = sorted(glob.glob(str(base / pattern))) or sorted(glob.glob(pattern))
        matches = [m for m in matches if not m.endswith(".manifest.json")]
        if not matches:
            raise SchemaError(f"{path}: no files match {key} pattern {pattern!r}")
        return tuple(matches)

    inputs = expand("input")
    reports = expand("report")
    out = entries.pop("out", "figure")
    title = entries.pop("title", "")
    if not str(Path(out)).startswith("/"):
        out = str(base / out)
    return FigureRecipe(kind=kind, inputs=inputs, reports=reports, out=out,
                        title=title, options=dict(entries))


def read_tagged_csv(path):
    """Read an ``underbag-csv`` file; returns (kind, header, rows)."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# underbag-csv "):
        raise SchemaError(f"{path}: missing 'underbag-csv' schema tag")
    tag = lines[0].removeprefix("# underbag-csv ").split()[0]
    reader = csv.reader(lines[1:])
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty table")
    rows = [row for row in reader if row]
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return tag, header, rows


def require_columns(path, header, needed):
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {missing}; has {header}")
    return {c: header.index(c) for c in header}


def load_report(path) -> dict:
    payload = json.loads(Path(path).read_text())
    for key in ("prediction_law", "config", "metrics"):
        if key not in payload:
            raise SchemaError(f"{path}: solve report lacks the {key!r} block")
    return payload


def load_manifest_config(csv_path) -> dict | None:
    manifest = Path(str(csv_path) + ".manifest.json")
    if not manifest.exists():
        return None
    resolved = json.loads(manifest.read_text()).get("resolved", {})
    return resolved.get("config", resolved)
