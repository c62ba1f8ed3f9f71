"""Deterministic panel rendering for the six recipe kinds."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .recipes import (FigureRecipe, SchemaError, load_manifest_config,
                      load_report, read_tagged_csv, require_columns)

# solid = ensemble, dashed = single-realization / optimized weighting,
# dash-dot = naive weighting
METHOD_STYLE = {
    "ub": "-", "ub_subsample": "-", "ub_bootstrap": "--",
    "us": "--", "sw_opt": "--", "sw_naive": "-.", "theory": "-",
}
COLORS = plt.cm.tab10.colors

plt.rcParams.update({
    "figure.dpi": 110,
    "savefig.dpi": 110,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "figtools",
})


def _save(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def _float(row, idx, col):
    try:
        return float(row[idx[col]])
    except ValueError:
        return float("nan")


def _style(method):
    return METHOD_STYLE.get(method, ":")


def _sheet(panels, out, title):
    ncols = min(3, max(1, len(panels)))
    nrows = math.ceil(len(panels) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows),
                             squeeze=False)
    for ax in axes.flat[len(panels):]:
        ax.set_axis_off()
    for ax, draw in zip(axes.flat, panels):
        draw(ax)
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    return _save(fig, f"{out}_sheet.png")


def _emit(panels, out, title):
    written = []
    for i, draw in enumerate(panels, start=1):
        fig, ax = plt.subplots(figsize=(4.6, 3.4))
        draw(ax)
        fig.tight_layout()
        written.append(_save(fig, f"{out}_p{i:02d}.png"))
    written.append(_sheet(panels, out, title))
    return written


def _long_table(path):
    kind, header, rows = read_tagged_csv(path)
    if kind != "sweep-long":
        raise SchemaError(f"{path}: expected a sweep-long table, got {kind!r}")
    idx = require_columns(path, header, ["alpha_plus", "alpha_gap", "delta",
                                         "lambda", "method", "metric",
                                         "value", "fault"])
    return idx, rows


def render_f_lines(recipe: FigureRecipe):
    panels = []
    for path in recipe.inputs:
        idx, rows = _long_table(path)
        combos = sorted({(_float(r, idx, "delta"), _float(r, idx, "lambda"))
                         for r in rows})
        for delta, lam in combos:
            series = defaultdict(list)
            for r in rows:
                if (r[idx["metric"]] == "f" and not r[idx["fault"]]
                        and _float(r, idx, "delta") == delta
                        and _float(r, idx, "lambda") == lam):
                    key = (r[idx["method"]], _float(r, idx, "alpha_plus"))
                    series[key].append((_float(r, idx, "alpha_gap"),
                                        _float(r, idx, "value")))
            alphas = sorted({k[1] for k in series})

            def draw(ax, series=series, alphas=alphas, delta=delta, lam=lam):
                for (method, alpha), pts in sorted(series.items()):
                    pts = sorted(pts)
                    ax.plot([p[0] for p in pts], [p[1] for p in pts],
                            _style(method), color=COLORS[alphas.index(alpha) % 10],
                            label=f"{method} a+={alpha:g}")
                ax.set_xscale("log")
                ax.set_xlabel("majority excess")
                ax.set_ylabel("F")
                ax.set_title(f"delta={delta:g} lambda={lam:g}")
                ax.legend(fontsize=6)

            panels.append(draw)
    if not panels:
        raise SchemaError("f_lines recipe produced no panels")
    return _emit(panels, recipe.out, recipe.title)


def render_heatmap(recipe: FigureRecipe):
    panels = []
    for path in recipe.inputs:
        kind, header, rows = read_tagged_csv(path)
        if kind != "heatmap":
            raise SchemaError(f"{path}: expected a heatmap table, got {kind!r}")
        corner = header[0]
        if "\\" not in corner:
            raise SchemaError(f"{path}: heatmap corner cell must be 'row\\col'")
        row_name, col_name = corner.split("\\", 1)
        cols = np.array([float(v) for v in header[1:]])
        row_vals = np.array([float(r[0]) for r in rows])
        matrix = np.array([[float(v) for v in r[1:]] for r in rows])

        def draw(ax, cols=cols, row_vals=row_vals, matrix=matrix,
                 row_name=row_name, col_name=col_name, stem=Path(path).stem):
            mesh = ax.pcolormesh(cols, row_vals, matrix, shading="nearest")
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel(col_name)
            ax.set_ylabel(row_name)
            ax.set_title(stem)
            plt.colorbar(mesh, ax=ax)

        panels.append(draw)
    return _emit(panels, recipe.out, recipe.title)


def render_logit_hist(recipe: FigureRecipe):
    laws = {}
    for path in recipe.reports:
        payload = load_report(path)
        k = payload["config"].get("k")
        laws[str(k)] = payload["prediction_law"]
    panels = []
    for path in recipe.inputs:
        kind, header, rows = read_tagged_csv(path)
        if kind != "hist":
            raise SchemaError(f"{path}: expected a hist table, got {kind!r}")
        idx = require_columns(path, header, ["rep", "k", "class", "bin_left",
                                             "bin_right", "mass"])
        for cls in ("plus", "minus"):
            groups = defaultdict(list)
            for r in rows:
                if r[idx["class"]] == cls and r[idx["rep"]] == "0":
                    groups[r[idx["k"]]].append((_float(r, idx, "bin_left"),
                                                _float(r, idx, "bin_right"),
                                                _float(r, idx, "mass")))
            if not groups:
                raise SchemaError(f"{path}: no '{cls}' histogram rows")

            def draw(ax, groups=groups, cls=cls):
                for j, (k, bins) in enumerate(sorted(groups.items(),
                                                     key=lambda kv: int(kv[0]))):
                    left = np.array([b[0] for b in bins])
                    right = np.array([b[1] for b in bins])
                    mass = np.array([b[2] for b in bins])
                    width = right - left
                    centers = 0.5 * (left + right)
                    ax.stairs(mass / width, np.append(left, right[-1]),
                              color=COLORS[j % 10], label=f"k={k}")
                    law = laws.get(k)
                    if law is not None:
                        center = (law["center_plus"] if cls == "plus"
                                  else law["center_minus"])
                        var = law["variance"]
                        xs = np.linspace(centers[0], centers[-1], 300)
                        dens = np.exp(-(xs - center) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)
                        ax.plot(xs, dens, "--", color=COLORS[j % 10], lw=1)
                ax.set_xlabel("averaged logit")
                ax.set_ylabel("density")
                ax.set_title(f"class {cls}")
                ax.legend(fontsize=6)

            panels.append(draw)
    return _emit(panels, recipe.out, recipe.title)


def render_order_params(recipe: FigureRecipe):
    quantities = ("q", "m", "v", "b")
    series = {name: [] for name in quantities}
    for path in recipe.inputs:
        kind, header, rows = read_tagged_csv(path)
        if kind != "compare":
            raise SchemaError(f"{path}: expected a compare table, got {kind!r}")
        idx = require_columns(path, header, ["quantity", "theory", "sim_mean",
                                             "sim_std"])
        config = load_manifest_config(path) or {}
        try:
            gap = float(config["alpha_minus"]) - float(config["alpha_plus"])
        except (KeyError, TypeError, ValueError):
            gap = float(len(series["q"]))  # positional fallback
        for r in rows:
            name = r[idx["quantity"]]
            if name not in series:
                raise SchemaError(f"{path}: unknown quantity {name!r}")
            series[name].append((gap, _float(r, idx, "theory"),
                                 _float(r, idx, "sim_mean"),
                                 _float(r, idx, "sim_std")))

    panels = []
    for name in quantities:
        pts = sorted(series[name])
        if not pts:
            raise SchemaError(f"compare inputs lack quantity {name!r}")

        def draw(ax, pts=pts, name=name):
            xs = [p[0] for p in pts]
            ax.plot(xs, [p[1] for p in pts], "-", color=COLORS[0],
                    label="theory")
            ax.errorbar(xs, [p[2] for p in pts], yerr=[p[3] for p in pts],
                        fmt="o", ms=3, color=COLORS[1], label="simulation")
            if min(xs) > 0:
                ax.set_xscale("log")
            ax.set_xlabel("majority excess")
            ax.set_ylabel(name)
            ax.legend(fontsize=6)

        panels.append(draw)
    return _emit(panels, recipe.out, recipe.title)


def render_variance_curves(recipe: FigureRecipe):
    panels = []
    series = []
    for path in recipe.inputs:
        kind, header, rows = read_tagged_csv(path)
        if kind != "threshold":
            raise SchemaError(f"{path}: expected a threshold table, got {kind!r}")
        idx = require_columns(path, header, ["alpha_plus", "value", "kind"])
        pts = sorted((_float(r, idx, "alpha_plus"), _float(r, idx, "value"))
                     for r in rows)
        series.append((Path(path).stem, pts))

    def draw(ax):
        for j, (label, pts) in enumerate(series):
            ax.plot([p[0] for p in pts], [p[1] for p in pts], "-o", ms=3,
                    color=COLORS[j % 10], label=label)
        ax.set_xscale("log")
        ax.set_xlabel("minority size")
        ax.set_ylabel("resampling variance share")
        ax.legend(fontsize=6)

    panels.append(draw)
    return _emit(panels, recipe.out, recipe.title)


def render_coeff_ratio(recipe: FigureRecipe):
    panels = []
    for path in recipe.inputs:
        idx, rows = _long_table(path)
        series = defaultdict(list)
        for r in rows:
            metric = r[idx["metric"]]
            if (r[idx["method"]] == "sw_opt" and not r[idx["fault"]]
                    and metric in ("gamma_plus_ratio", "gamma_minus_ratio")):
                key = (metric, _float(r, idx, "alpha_plus"))
                series[key].append((_float(r, idx, "alpha_gap"),
                                    _float(r, idx, "value")))
        if not series:
            raise SchemaError(f"{path}: no sw_opt coefficient-ratio rows")
        alphas = sorted({k[1] for k in series})

        def draw(ax, series=series, alphas=alphas):
            for (metric, alpha), pts in sorted(series.items()):
                pts = sorted(pts)
                style = "-" if metric == "gamma_plus_ratio" else "--"
                ax.plot([p[0] for p in pts], [p[1] for p in pts], style,
                        color=COLORS[alphas.index(alpha) % 10],
                        label=f"{metric.split('_')[1]} a+={alpha:g}")
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel("majority excess")
            ax.set_ylabel("optimal / naive weight")
            ax.legend(fontsize=6)

        panels.append(draw)
    return _emit(panels, recipe.out, recipe.title)


RENDERERS = {
    "f_lines": render_f_lines,
    "heatmap": render_heatmap,
    "logit_hist": render_logit_hist,
    "order_params": render_order_params,
    "variance_curves": render_variance_curves,
    "coeff_ratio": render_coeff_ratio,
}


def render(recipe: FigureRecipe):
    """Render a recipe; returns the list of written image paths."""
    try:
        renderer = RENDERERS[recipe.kind]
    except KeyError:
        raise SchemaError(f"unknown recipe kind {recipe.kind!r}")
    return renderer(recipe)
