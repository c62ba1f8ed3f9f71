"""Grid studies over problem axes with warm-started solves.

A sweep plan names a study, a set of axes (the first axis is innermost
and forms the warm-start chain), and fixed parameters.  Each grid cell
produces long-format rows ``axis columns + method + metric + value +
fault``; failed cells carry their fault message instead of silently
disappearing.  Wide ratio/difference heatmaps are derived from the long
table.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .config import (BiasMode, make_bootstrap_config,
                     make_subsampling_config, make_weighting_config)
from .errors import ConfigurationError, UnderbagError
from .metrics import relative_variance
from .saddle import SolverOptions, solve_full, solve_us
from .tuner import WeightSearchSpec, find_bias_zero_rate, naive_weights, optimize_weights

__all__ = ["AxisSpec", "SweepPlan", "SweepTable", "HeatmapGrid", "run_sweep",
           "heatmap_ratio", "STUDIES"]

AXIS_NAMES = ("alpha_plus", "alpha_gap", "delta", "lambda")
STUDIES = ("us_vs_ub", "ub_vs_sw_opt", "ub_vs_sw_naive", "replacement",
           "variance_peak", "theory_vs_sim")

# canonical panel grids used by the bundled studies
DEFAULT_DELTAS = (0.25, 0.5625, 2.25)
DEFAULT_LAMBDAS = (1e-5, 1e-3, 1e-1, 1.0)
DEFAULT_GAPS = tuple(float(g) for g in np.geomspace(1e-2, 1e2, 7))
DEFAULT_ALPHAS = tuple(float(a) for a in np.geomspace(1e-2, 1e1, 4))


@dataclass(frozen=True)
class AxisSpec:
    name: str
    values: tuple
    scale: str = "linear"

    def __post_init__(self):
        if self.name not in AXIS_NAMES:
            raise ConfigurationError(
                f"axis {self.name!r} not one of {AXIS_NAMES}")
        if not self.values:
            raise ConfigurationError(f"axis {self.name!r} has an empty grid")
        if self.scale not in ("linear", "log"):
            raise ConfigurationError(f"axis scale must be linear|log, got {self.scale!r}")


@dataclass(frozen=True)
class SweepPlan:
    study: str
    axes: tuple  # innermost first
    fixed: dict = field(default_factory=dict)
    quad_order: int = 61
    k: float = math.inf
    sim: dict = field(default_factory=dict)  # theory_vs_sim: n, reps, k_real, seed

    def __post_init__(self):
        if self.study not in STUDIES:
            raise ConfigurationError(f"unknown study {self.study!r}; use one of {STUDIES}")
        if not self.axes:
            raise ConfigurationError("sweep plan needs at least one axis")
        names = [a.name for a in self.axes]
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate sweep axes")


@dataclass(frozen=True)
class SweepTable:
    plan: SweepPlan
    rows: tuple  # of dicts

    def axis_names(self):
        return [a.name for a in self.plan.axes]


@dataclass(frozen=True)
class HeatmapGrid:
    row_axis: str
    col_axis: str
    row_values: tuple
    col_values: tuple
    matrix: np.ndarray


def _cell_params(plan: SweepPlan, assignment: dict) -> dict:
    params = {"alpha_plus": 0.05, "alpha_gap": 0.15, "delta": 0.5625,
              "lambda": 0.1}
    params.update(plan.fixed)
    params.update(assignment)
    return params


def _subsample_config(params, k, bias=None):
    return make_subsampling_config(
        params["alpha_plus"], params["alpha_plus"] + params["alpha_gap"],
        params["delta"], params["lambda"], k=k, bias=bias)


def _metric_rows(base, method, metrics: dict, fault=""):
    rows = []
    for name, value in metrics.items():
        rows.append({**base, "method": method, "metric": name,
                     "value": value, "fault": fault})
    return rows


def _report_metrics(report):
    return {
        "f": report.metrics.f_value,
        "specificity": report.metrics.specificity,
        "recall": report.metrics.recall,
        "rel_var": report.metrics.relative_variance,
        "q": report.theta.q, "m": report.theta.m, "v": report.theta.v,
        "chi": report.theta.chi, "b": report.theta.b,
    }


def _fault_rows(base, method, names, message):
    return _metric_rows(base, method, {n: float("nan") for n in names},
                        fault=message)


_UB_METRICS = ("f", "specificity", "recall", "rel_var", "q", "m", "v", "chi", "b")


def _cell_us_vs_ub(plan, params, options, chain):
    base = dict(params)
    rows = []
    try:
        ub = solve_full(_subsample_config(params, plan.k),
                        dataclasses.replace(options, init=chain.get("ub")))
        chain["ub"] = ub.theta
        rows += _metric_rows(base, "ub", _report_metrics(ub))
    except UnderbagError as exc:
        chain["ub"] = None
        rows += _fault_rows(base, "ub", _UB_METRICS, str(exc))
    try:
        us = solve_us(_subsample_config(params, 1),
                      dataclasses.replace(options, init=chain.get("us")))
        chain["us"] = us.theta
        rows += _metric_rows(base, "us", {
            "f": us.metrics.f_value, "specificity": us.metrics.specificity,
            "recall": us.metrics.recall, "q_bar": us.theta.q,
            "m": us.theta.m, "b": us.theta.b})
    except UnderbagError as exc:
        chain["us"] = None
        rows += _fault_rows(base, "us", ("f", "specificity", "recall",
                                         "q_bar", "m", "b"), str(exc))
    return rows


def _cell_ub_vs_sw(plan, params, options, chain, naive_only):
    base = dict(params)
    rows = []
    try:
        ub = solve_full(_subsample_config(params, plan.k),
                        dataclasses.replace(options, init=chain.get("ub")))
        chain["ub"] = ub.theta
        rows += _metric_rows(base, "ub", _report_metrics(ub))
    except UnderbagError as exc:
        chain["ub"] = None
        rows += _fault_rows(base, "ub", _UB_METRICS, str(exc))

    ap = params["alpha_plus"]
    am = ap + params["alpha_gap"]
    gp_naive, gm_naive = naive_weights(ap, am)
    try:
        naive_cfg = make_weighting_config(ap, am, params["delta"],
                                          params["lambda"], gp_naive, gm_naive)
        naive = solve_full(naive_cfg,
                           dataclasses.replace(options, init=chain.get("sw_naive")))
        chain["sw_naive"] = naive.theta
        rows += _metric_rows(base, "sw_naive", {
            "f": naive.metrics.f_value, "b": naive.theta.b,
            "gamma_plus": gp_naive, "gamma_minus": gm_naive})
    except UnderbagError as exc:
        chain["sw_naive"] = None
        rows += _fault_rows(base, "sw_naive",
                            ("f", "b", "gamma_plus", "gamma_minus"), str(exc))
    if naive_only:
        return rows

    try:
        spec = WeightSearchSpec(lambda_ub=params["lambda"])
        template = make_weighting_config(ap, am, params["delta"],
                                         params["lambda"], gp_naive, gm_naive)
        opt = optimize_weights(template, spec, options)
        rows += _metric_rows(base, "sw_opt", {
            "f": opt.f_value, "gamma_plus": opt.gamma_plus,
            "gamma_minus": opt.gamma_minus, "lambda_sw": opt.lambda_sw,
            "gamma_plus_ratio": opt.gamma_plus / gp_naive,
            "gamma_minus_ratio": opt.gamma_minus / gm_naive})
    except UnderbagError as exc:
        rows += _fault_rows(base, "sw_opt",
                            ("f", "gamma_plus", "gamma_minus", "lambda_sw",
                             "gamma_plus_ratio", "gamma_minus_ratio"), str(exc))
    return rows


def _cell_replacement(plan, params, options, chain):
    base = dict(params)
    rows = []
    sub_rate = params["alpha_plus"] / (params["alpha_plus"] + params["alpha_gap"])
    try:
        sub = solve_full(_subsample_config(params, plan.k),
                         dataclasses.replace(options, init=chain.get("sub")))
        chain["sub"] = sub.theta
        rows += _metric_rows(base, "ub_subsample", {
            "f": sub.metrics.f_value, "mu": sub_rate, "b": sub.theta.b})
    except UnderbagError as exc:
        chain["sub"] = None
        rows += _fault_rows(base, "ub_subsample", ("f", "mu", "b"), str(exc))
    try:
        template = make_bootstrap_config(
            params["alpha_plus"], params["alpha_plus"] + params["alpha_gap"],
            params["delta"], params["lambda"], k=plan.k, mu=min(sub_rate, 1.0))
        tuned = find_bias_zero_rate(template, options)
        rows += _metric_rows(base, "ub_bootstrap", {
            "f": tuned.f_value, "mu": tuned.mu_star, "b": tuned.bias_at_star})
    except UnderbagError as exc:
        rows += _fault_rows(base, "ub_bootstrap", ("f", "mu", "b"), str(exc))
    return rows


def _cell_variance_peak(plan, params, options, chain):
    base = dict(params)
    try:
        rep = solve_full(_subsample_config(params, plan.k),
                         dataclasses.replace(options, init=chain.get("ub")))
        chain["ub"] = rep.theta
        return _metric_rows(base, "ub", {
            "rel_var": relative_variance(rep.theta), "q": rep.theta.q,
            "v": rep.theta.v, "f": rep.metrics.f_value})
    except UnderbagError as exc:
        chain["ub"] = None
        return _fault_rows(base, "ub", ("rel_var", "q", "v", "f"), str(exc))


def _cell_theory_vs_sim(plan, params, options, chain):
    from .simulate import concentration_probe

    base = dict(params)
    rows = []
    cfg = _subsample_config(params, plan.k, bias=BiasMode.estimate())
    try:
        rep = solve_full(cfg, dataclasses.replace(options, init=chain.get("ub")))
        chain["ub"] = rep.theta
        rows += _metric_rows(base, "theory", {
            "q": rep.theta.q, "m": rep.theta.m, "v": rep.theta.v,
            "b": rep.theta.b})
    except UnderbagError as exc:
        chain["ub"] = None
        rows += _fault_rows(base, "theory", ("q", "m", "v", "b"), str(exc))
        return rows
    sim = plan.sim
    probe = concentration_probe(cfg, [int(sim.get("n", 1024))],
                                int(sim.get("reps", 4)),
                                int(sim.get("seed", 0)),
                                k_real=int(sim.get("k_real", 64)))
    for row in probe:
        rows.append({**base, "method": "sim", "metric": row["quantity"] + "_mean",
                     "value": row["mean"], "fault": ""})
        rows.append({**base, "method": "sim", "metric": row["quantity"] + "_std",
                     "value": row["std"], "fault": ""})
    return rows


_CELL_FN = {
    "us_vs_ub": _cell_us_vs_ub,
    "ub_vs_sw_opt": lambda p, c, o, ch: _cell_ub_vs_sw(p, c, o, ch, naive_only=False),
    "ub_vs_sw_naive": lambda p, c, o, ch: _cell_ub_vs_sw(p, c, o, ch, naive_only=True),
    "replacement": _cell_replacement,
    "variance_peak": _cell_variance_peak,
    "theory_vs_sim": _cell_theory_vs_sim,
}


def _run_outer_combo(args):
    plan, options, assignment_outer = args
    cell_fn = _CELL_FN[plan.study]
    inner = plan.axes[0]
    chain: dict = {}
    rows = []
    for inner_val in inner.values:
        assignment = {inner.name: inner_val, **assignment_outer}
        params = _cell_params(plan, assignment)
        rows.extend(cell_fn(plan, params, options, chain))
    return rows


def run_sweep(plan: SweepPlan, options: SolverOptions | None = None,
              threads: int = 1) -> SweepTable:
    """Evaluate the study on every grid cell.

    Cells along the innermost axis share a warm-start chain; the chain
    resets at the start of each outer combination, so results do not
    depend on outer-axis iteration order or on ``threads`` (outer
    combinations are independent and reassembled in grid order).
    """
    options = options or SolverOptions(quad_order=plan.quad_order)
    outer_axes = plan.axes[1:]
    outer_grid = list(itertools.product(*[ax.values for ax in outer_axes])) or [()]
    tasks = [(plan, options, {ax.name: v for ax, v in zip(outer_axes, outer_vals)})
             for outer_vals in outer_grid]

    if threads > 1 and len(tasks) > 1:
        import multiprocessing as mp
        from concurrent.futures import ProcessPoolExecutor

        ctx = mp.get_context("fork")
        with ProcessPoolExecutor(max_workers=threads, mp_context=ctx) as pool:
            chunks = list(pool.map(_run_outer_combo, tasks))
    else:
        chunks = [_run_outer_combo(t) for t in tasks]
    rows = [row for chunk in chunks for row in chunk]
    return SweepTable(plan=plan, rows=tuple(rows))


def heatmap_ratio(table: SweepTable, numerator_metric: str,
                  denominator_metric: str, row_axis: str, col_axis: str,
                  mode: str = "ratio") -> HeatmapGrid:
    """Pivot the long table into a wide grid of ratios or relative
    differences between two ``method.metric`` keys.

    Cells with a zero denominator or missing values come out as NaN
    (they carry fault records in the long table).
    """
    if mode not in ("ratio", "rel_diff", "log10_ratio"):
        raise ConfigurationError(f"unknown heatmap mode {mode!r}")

    def split(key):
        method, _, metric = key.partition(".")
        if not metric:
            raise ConfigurationError(
                f"metric key {key!r} must look like 'method.metric'")
        return method, metric

    num_m, num_k = split(numerator_metric)
    den_m, den_k = split(denominator_metric)

    def collect(method, metric):
        vals = {}
        for row in table.rows:
            if row["method"] == method and row["metric"] == metric:
                vals[(row[row_axis], row[col_axis])] = row["value"]
        return vals

    num = collect(num_m, num_k)
    den = collect(den_m, den_k)
    if not num or not den:
        raise ConfigurationError(
            f"metrics {numerator_metric!r}/{denominator_metric!r} not present in table")
    row_values = tuple(sorted({k[0] for k in num}))
    col_values = tuple(sorted({k[1] for k in num}))
    matrix = np.full((len(row_values), len(col_values)), np.nan)
    for i, rv in enumerate(row_values):
        for j, cv in enumerate(col_values):
            a = num.get((rv, cv), float("nan"))
            b = den.get((rv, cv), float("nan"))
            if mode == "rel_diff":
                matrix[i, j] = (a - b) / a if a not in (0.0,) else float("nan")
            elif mode == "log10_ratio":
                matrix[i, j] = math.log10(a / b) if b and a > 0 and b > 0 else float("nan")
            else:
                matrix[i, j] = a / b if b else float("nan")
    return HeatmapGrid(row_axis=row_axis, col_axis=col_axis,
                       row_values=row_values, col_values=col_values,
                       matrix=matrix)
