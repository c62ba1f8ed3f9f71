"""File formats: flat key-value configs, sweep plans, and CSV tables.

Config files hold ``key = value`` lines (``#`` comments allowed) with the
documented keys::

    alpha_plus, alpha_minus, delta, lambda,
    scheme = subsample | bootstrap | weight,
    mu, gamma_plus, gamma_minus,
    bias = estimate | fixed, bias_value, k

CSV files start with a schema tag line ``# underbag-csv <kind> v1`` and
format floats with shortest round-trip precision, so reruns are
byte-identical.
"""

from __future__ import annotations

import csv
import io as _io
import math
from pathlib import Path

from .config import (BiasMode, ProblemConfig, make_bootstrap_config,
                     make_subsampling_config, make_weighting_config)
from .errors import ConfigurationError, SchemaError
from .sweeps import AxisSpec, HeatmapGrid, SweepPlan, SweepTable
from .tuner import naive_weights

__all__ = [
    "parse_keyvalue", "parse_config_file", "build_problem_config",
    "config_to_dict", "write_config_file", "parse_plan_file",
    "write_long_csv", "write_heatmap_csv", "write_rows_csv", "read_csv",
    "format_value",
]

CSV_SCHEMA_VERSION = "v1"

CONFIG_KEYS = ("alpha_plus", "alpha_minus", "delta", "lambda", "scheme",
               "mu", "gamma_plus", "gamma_minus", "bias", "bias_value", "k")


def parse_keyvalue(text: str, path="<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def parse_config_file(path) -> dict:
    return parse_keyvalue(Path(path).read_text(), path=str(path))


def _as_float(raw, key):
    try:
        return float(raw)
    except ValueError:
        raise ConfigurationError(f"config key {key!r} must be a number, got {raw!r}")


def _as_k(raw):
    if str(raw).lower() in ("inf", "infinity"):
        return math.inf
    try:
        return int(raw)
    except ValueError:
        raise ConfigurationError(f"config key 'k' must be an integer or 'inf', got {raw!r}")


def build_problem_config(entries: dict) -> ProblemConfig:
    """Construct a problem instance from flat config keys."""
    unknown = set(entries) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigurationError(
            f"unknown config keys: {sorted(unknown)}; known keys: {list(CONFIG_KEYS)}")
    missing = [k for k in ("alpha_plus", "alpha_minus", "delta", "lambda", "scheme")
               if k not in entries]
    if missing:
        raise ConfigurationError(f"missing config keys: {missing}")
    ap = _as_float(entries["alpha_plus"], "alpha_plus")
    am = _as_float(entries["alpha_minus"], "alpha_minus")
    delta = _as_float(entries["delta"], "delta")
    lam = _as_float(entries["lambda"], "lambda")
    k = _as_k(entries.get("k", "inf"))
    scheme = str(entries["scheme"]).lower()

    bias = None
    if "bias" in entries:
        mode = str(entries["bias"]).lower()
        if mode == "estimate":
            bias = BiasMode.estimate()
        elif mode == "fixed":
            bias = BiasMode.fixed(_as_float(entries.get("bias_value", 0.0), "bias_value"))
        else:
            raise ConfigurationError(
                f"config key 'bias' must be estimate|fixed, got {entries['bias']!r}")

    if scheme == "subsample":
        mu = _as_float(entries["mu"], "mu") if "mu" in entries else None
        return make_subsampling_config(ap, am, delta, lam, k=k, mu=mu, bias=bias)
    if scheme == "bootstrap":
        if "mu" not in entries:
            raise ConfigurationError("bootstrap scheme requires the 'mu' key")
        return make_bootstrap_config(ap, am, delta, lam, k=k,
                                     mu=_as_float(entries["mu"], "mu"), bias=bias)
    if scheme == "weight":
        if "gamma_plus" in entries or "gamma_minus" in entries:
            gp = _as_float(entries["gamma_plus"], "gamma_plus")
            gm = _as_float(entries["gamma_minus"], "gamma_minus")
        else:
            gp, gm = naive_weights(ap, am)
        cfg = make_weighting_config(ap, am, delta, lam, gp, gm, bias=bias)
        return cfg.replace(ensemble_k=k)
    raise ConfigurationError(
        f"config key 'scheme' must be subsample|bootstrap|weight, got {entries['scheme']!r}")


def config_to_dict(config: ProblemConfig) -> dict:
    out = {
        "alpha_plus": config.alpha_plus,
        "alpha_minus": config.alpha_minus,
        "delta": config.delta,
        "lambda": config.lam,
        "scheme": config.scheme,
        "bias": config.bias.mode,
        "k": "inf" if config.ensemble_k == math.inf else int(config.ensemble_k),
    }
    if config.bias.mode == "fixed":
        out["bias_value"] = config.bias.value
    if config.scheme in ("subsample", "bootstrap"):
        out["mu"] = config.coeff_minus.mu
    else:
        out["gamma_plus"] = config.coeff_plus.gamma
        out["gamma_minus"] = config.coeff_minus.gamma
    return out


def write_config_file(config: ProblemConfig, path) -> None:
    lines = [f"{key} = {format_value(val)}"
             for key, val in config_to_dict(config).items()]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# sweep plans


def _parse_axis(raw: str) -> AxisSpec:
    # "<name> list v1,v2,..."  or  "<name> log lo hi npts"  or  "<name> linear lo hi npts"
    parts = raw.split()
    if len(parts) < 3:
        raise ConfigurationError(f"bad axis spec {raw!r}")
    name, kind = parts[0], parts[1]
    if kind == "list":
        values = tuple(float(v) for v in " ".join(parts[2:]).split(","))
        scale = "linear"
    elif kind in ("log", "linear"):
        if len(parts) != 5:
            raise ConfigurationError(
                f"axis spec {raw!r} needs '<name> {kind} lo hi npts'")
        lo, hi, npts = float(parts[2]), float(parts[3]), int(parts[4])
        if kind == "log":
            import numpy as np

            values = tuple(float(v) for v in np.geomspace(lo, hi, npts))
        else:
            import numpy as np

            values = tuple(float(v) for v in np.linspace(lo, hi, npts))
        scale = kind if kind == "log" else "linear"
    else:
        raise ConfigurationError(f"axis kind must be list|log|linear, got {kind!r}")
    return AxisSpec(name=name, values=values, scale=scale)


def parse_plan_file(path) -> SweepPlan:
    """Plan files share the key-value syntax; repeated ``axis`` keys are
    written ``axis1``, ``axis2``, ... with the first innermost."""
    entries = parse_keyvalue(Path(path).read_text(), path=str(path))
    if "study" not in entries:
        raise ConfigurationError("plan file needs a 'study' key")
    axes = []
    i = 1
    while f"axis{i}" in entries:
        axes.append(_parse_axis(entries.pop(f"axis{i}")))
        i += 1
    if not axes:
        raise ConfigurationError("plan file needs at least one 'axis1' key")
    study = entries.pop("study")
    quad_order = int(entries.pop("quad_order", 61))
    k = _as_k(entries.pop("k", "inf"))
    sim = {key[4:]: float(entries.pop(key))
           for key in list(entries) if key.startswith("sim_")}
    fixed = {}
    for key, raw in entries.items():
        if key not in ("alpha_plus", "alpha_gap", "delta", "lambda"):
            raise ConfigurationError(f"unknown plan key {key!r}")
        fixed[key] = float(raw)
    return SweepPlan(study=study, axes=tuple(axes), fixed=fixed,
                     quad_order=quad_order, k=k, sim=sim)


# ---------------------------------------------------------------------------
# CSV writing/reading (deterministic bytes)


def format_value(v) -> str:
    if isinstance(v, float):
        v = float(v)  # numpy scalars repr as np.float64(...) otherwise
        if math.isnan(v):
            return "nan"
        if v == math.inf:
            return "inf"
        return repr(v)
    return str(v)


def _write_csv(path, kind: str, header, rows) -> None:
    buf = _io.StringIO()
    buf.write(f"# underbag-csv {kind} {CSV_SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    Path(path).write_text(buf.getvalue())


def write_long_csv(table: SweepTable, path) -> None:
    axis_names = table.axis_names()
    fixed_names = [n for n in ("alpha_plus", "alpha_gap", "delta", "lambda")
                   if n not in axis_names]
    header = axis_names + fixed_names + ["method", "metric", "value", "fault"]
    rows = []
    for row in table.rows:
        rows.append([row[n] for n in axis_names + fixed_names]
                    + [row["method"], row["metric"], row["value"], row["fault"]])
    _write_csv(path, "sweep-long", header, rows)


def write_heatmap_csv(grid: HeatmapGrid, path) -> None:
    header = [f"{grid.row_axis}\\{grid.col_axis}"] + [format_value(v) for v in grid.col_values]
    rows = []
    for i, rv in enumerate(grid.row_values):
        rows.append([format_value(rv)] + [grid.matrix[i, j]
                                          for j in range(len(grid.col_values))])
    _write_csv(path, "heatmap", header, rows)


def write_rows_csv(path, kind: str, rows: list[dict], header=None) -> None:
    if not rows:
        raise SchemaError(f"refusing to write empty {kind} table to {path}")
    header = header or list(rows[0].keys())
    _write_csv(path, kind, header, [[row.get(h, "") for h in header] for row in rows])


def read_csv(path):
    """Read a tagged CSV; returns (kind, header, rows-as-string-lists)."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or not lines[0].startswith("# underbag-csv "):
        raise SchemaError(f"{path}: missing 'underbag-csv' schema tag")
    tag = lines[0].removeprefix("# underbag-csv ").split()
    reader = csv.reader(lines[1:])
    header = next(reader)
    return tag[0], header, [row for row in reader if row]
