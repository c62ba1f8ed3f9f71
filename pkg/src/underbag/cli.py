"""Command-line interface.

Subcommands: ``solve``, ``sweep``, ``simulate``, ``compare``, ``tune``,
``threshold``, ``rerun``.  Flags override config-file keys; the resolved
configuration is echoed into the manifest written next to every output.
Exit codes: 0 success, 1 solver fault, 2 usage/configuration error.
Environment: ``SEED`` and ``THREADS`` provide defaults for ``--seed`` and
``--threads``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigurationError, UnderbagError
from .manifest import load_manifest, write_manifest

EXIT_OK = 0
EXIT_SOLVER_FAULT = 1
EXIT_USAGE = 2

_CONFIG_FLAGS = ("alpha_plus", "alpha_minus", "delta", "lambda", "scheme",
                 "mu", "gamma_plus", "gamma_minus", "bias", "bias_value", "k")


def _now() -> str:
    import datetime

    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key-value config file")
    for key in _CONFIG_FLAGS:
        p.add_argument("--" + key.replace("_", "-"), dest="cfg_" + key,
                       metavar=key.upper(), help=f"override config key {key!r}")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--quad-order", type=int, default=61)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--damping", type=float, default=0.5)


def _resolve_entries(args) -> dict:
    from .io import parse_config_file

    entries = {}
    if args.config:
        entries.update(parse_config_file(args.config))
    for key in _CONFIG_FLAGS:
        val = getattr(args, "cfg_" + key, None)
        if val is not None:
            entries[key] = val
    return entries


def _problem_config(args):
    from .io import build_problem_config

    return build_problem_config(_resolve_entries(args))


def _solver_options(args):
    from .saddle import SolverOptions

    return SolverOptions(damping=args.damping, tol=args.tol,
                         max_iter=args.max_iter, quad_order=args.quad_order)


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    return int(os.environ.get("SEED", "0"))


def _threads(args) -> int:
    if getattr(args, "threads", None) is not None:
        return int(args.threads)
    return int(os.environ.get("THREADS", str(os.cpu_count() or 1)))


def _emit_manifest(args, command, resolved, outputs, seed, started):
    out = Path(outputs[0])
    path = out.parent / (out.name + ".manifest.json")
    write_manifest(path, command, list(getattr(args, "_argv", [])), resolved,
                   seed, outputs, started)


# ---------------------------------------------------------------------------
# commands


def _cmd_solve(args) -> int:
    from .io import config_to_dict
    from .metrics import prediction_law
    from .saddle import solve_full, solve_us

    started = _now()
    config = _problem_config(args)
    options = _solver_options(args)
    if args.method == "us":
        report = solve_us(config, options)
    else:
        report = solve_full(config, options)
    law = prediction_law(report.theta, config.delta, config.ensemble_k)
    payload = report.as_dict()
    payload["config"] = config_to_dict(config)
    payload["prediction_law"] = law.as_dict()
    payload["method"] = args.method
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _emit_manifest(args, "solve", payload["config"], [args.out], None, started)
    print(f"converged={report.converged} iterations={report.iterations} "
          f"residual={report.residual:.3e} f={report.metrics.f_value:.6f}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .io import parse_plan_file, write_heatmap_csv, write_long_csv
    from .sweeps import heatmap_ratio, run_sweep

    started = _now()
    plan = parse_plan_file(args.plan)
    table = run_sweep(plan, threads=_threads(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.plan).stem
    outputs = [out_dir / f"{stem}_long.csv"]
    write_long_csv(table, outputs[0])

    heat_spec = {
        "us_vs_ub": ("ub.f", "us.f", "ratio", "f_ratio"),
        "ub_vs_sw_opt": ("ub.f", "sw_opt.f", "rel_diff", "f_rel_diff"),
        "ub_vs_sw_naive": ("ub.f", "sw_naive.f", "log10_ratio", "f_log10_ratio"),
        "replacement": ("ub_bootstrap.f", "ub_subsample.f", "ratio", "f_ratio"),
    }.get(plan.study)
    axis_names = [a.name for a in plan.axes]
    if heat_spec and len(axis_names) >= 2:
        num, den, mode, label = heat_spec
        grid = heatmap_ratio(table, num, den, row_axis=axis_names[1],
                             col_axis=axis_names[0], mode=mode)
        path = out_dir / f"{stem}_heat_{label}.csv"
        write_heatmap_csv(grid, path)
        outputs.append(path)
    _emit_manifest(args, "sweep", {"plan": str(args.plan), "study": plan.study},
                   outputs, None, started)
    print(f"wrote {len(outputs)} files to {out_dir}")
    return EXIT_OK


def _parse_k_list(raw: str):
    return [int(tok) for tok in raw.split(",") if tok.strip()]


def _cmd_simulate(args) -> int:
    from .io import config_to_dict, write_rows_csv
    from .simulate import gen_dataset, run_ensemble

    started = _now()
    config = _problem_config(args)
    if args.n <= 0:
        raise ConfigurationError(f"--n must be positive, got {args.n}")
    seed = _seed(args)
    k_list = _parse_k_list(args.k_list)
    m_plus = int(round(config.alpha_plus * args.n))
    m_minus = int(round(config.alpha_minus * args.n))

    stat_rows, hist_rows = [], []
    for rep in range(args.reps):
        ds = gen_dataset(args.n, m_plus, m_minus, config.delta,
                         seed=seed + 1000003 * rep)
        stats = run_ensemble(ds, config, k_list, n_test=args.n_test,
                             seed=seed + 1000003 * rep,
                             exact_count=args.exact_count)
        for k in k_list:
            st = stats[k]
            stat_rows.append({"rep": rep, **st.as_rows()})
            if st.hist_plus is not None:
                for cls, hist in (("plus", st.hist_plus), ("minus", st.hist_minus)):
                    for left, right, mass in hist:
                        hist_rows.append({"rep": rep, "k": k, "class": cls,
                                          "bin_left": left, "bin_right": right,
                                          "mass": mass})
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = [out_dir / "ensemble_stats.csv"]
    write_rows_csv(outputs[0], "ensemble", stat_rows)
    if hist_rows:
        outputs.append(out_dir / "logit_histograms.csv")
        write_rows_csv(outputs[1], "hist", hist_rows)
    resolved = {"config": config_to_dict(config), "n": args.n,
                "reps": args.reps, "k_list": k_list, "n_test": args.n_test}
    _emit_manifest(args, "simulate", resolved, outputs, seed, started)
    print(f"wrote {len(outputs)} files to {out_dir}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .io import config_to_dict, write_rows_csv
    from .saddle import solve_full
    from .simulate import concentration_probe

    started = _now()
    config = _problem_config(args)
    options = _solver_options(args)
    seed = _seed(args)
    report = solve_full(config, options)
    theory = {"q": report.theta.q, "m": report.theta.m,
              "v": report.theta.v, "b": report.theta.b}
    probe = concentration_probe(config, [args.n], args.reps, seed,
                                k_real=args.k_real)
    rows = []
    for entry in probe:
        name = entry["quantity"]
        t = theory[name]
        std = entry["std"]
        n_sigma = abs(entry["mean"] - t) / std if std and std > 0 else float("nan")
        rows.append({"quantity": name, "theory": t, "sim_mean": entry["mean"],
                     "sim_std": std, "abs_diff": abs(entry["mean"] - t),
                     "n_sigma": n_sigma})
    out = Path(args.out)
    write_rows_csv(out, "compare", rows)
    resolved = {"config": config_to_dict(config), "n": args.n,
                "reps": args.reps, "k_real": args.k_real}
    _emit_manifest(args, "compare", resolved, [out], seed, started)
    worst = max((r["n_sigma"] for r in rows if not math.isnan(r["n_sigma"])),
                default=float("nan"))
    print(f"wrote {out}; worst |theory-sim| = {worst:.2f} standard deviations")
    return EXIT_OK


def _cmd_tune(args) -> int:
    from .io import config_to_dict
    from .tuner import WeightSearchSpec, find_bias_zero_rate, optimize_weights

    started = _now()
    config = _problem_config(args)
    options = _solver_options(args)
    if args.target == "rate":
        result = find_bias_zero_rate(config, options)
        payload = result.as_dict()
        summary = f"mu_star={result.mu_star:.6f} f={result.f_value:.6f}"
    elif args.target == "weights":
        lam_ub = args.lambda_ub if args.lambda_ub is not None else config.lam
        spec = WeightSearchSpec(lambda_ub=lam_ub)
        result = optimize_weights(config, spec, options)
        payload = result.as_dict()
        summary = (f"gamma_plus={result.gamma_plus:.6g} "
                   f"gamma_minus={result.gamma_minus:.6g} f={result.f_value:.6f}")
    else:
        raise ConfigurationError(f"unknown tune target {args.target!r}")
    payload["config"] = config_to_dict(config)
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    _emit_manifest(args, "tune", payload["config"], [args.out], None, started)
    print(summary)
    return EXIT_OK


def _cmd_threshold(args) -> int:
    import numpy as np

    from .io import config_to_dict, write_rows_csv
    from .metrics import find_variance_peak
    from .simulate import probe_separability

    started = _now()
    config = _problem_config(args)
    options = _solver_options(args)
    lo, hi, npts = (float(tok) for tok in args.alpha_grid.split(":"))
    grid = [float(a) for a in np.geomspace(lo, hi, int(npts))]
    rows = []
    resolved = {"config": config_to_dict(config), "mode": args.mode,
                "alpha_grid": args.alpha_grid}
    if args.mode == "variance":
        peak = find_variance_peak(config, grid, options)
        for a, rv in zip(peak.grid, peak.profile):
            rows.append({"alpha_plus": a, "value": rv, "kind": "rel_var"})
        summary = (f"peak at alpha_plus={peak.alpha_plus:.4g} (value {peak.value:.4g})"
                   if peak.found else "no interior peak")
    else:
        seed = _seed(args)
        for a in grid:
            frac = probe_separability(a, config.delta, args.n, args.reps, seed)
            rows.append({"alpha_plus": a, "value": frac, "kind": "separable_fraction"})
        summary = "separability profile written"
    out = Path(args.out)
    write_rows_csv(out, "threshold", rows)
    _emit_manifest(args, "threshold", resolved, [out], None, started)
    print(summary)
    return EXIT_OK


def _cmd_rerun(args) -> int:
    manifest = load_manifest(args.manifest)
    argv = manifest["argv"]
    print(f"re-running: underbag {' '.join(argv)}")
    return main(argv)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="underbag",
        description="asymptotics and finite-size experiments for "
                    "under-bagged linear classification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the order-parameter system")
    _add_config_flags(p)
    _add_solver_flags(p)
    p.add_argument("--method", choices=("full", "ub", "us"), default="full")
    p.add_argument("--out", default="solve_report.json")
    p.set_defaults(fn=_cmd_solve)

    p = sub.add_parser("sweep", help="run a grid study from a plan file")
    p.add_argument("--plan", required=True)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--threads", type=int)
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("simulate", help="finite-size ensemble experiment")
    _add_config_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--k-list", default="1")
    p.add_argument("--n-test", type=int, default=100000)
    p.add_argument("--exact-count", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir", default=".")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("compare", help="theory vs finite-size order parameters")
    _add_config_flags(p)
    _add_solver_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=8)
    p.add_argument("--k-real", type=int, default=128)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", default="compare.csv")
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("tune", help="tune resampling rate or weights")
    _add_config_flags(p)
    _add_solver_flags(p)
    p.add_argument("--target", choices=("rate", "weights"), required=True)
    p.add_argument("--lambda-ub", type=float)
    p.add_argument("--out", default="tune_report.json")
    p.set_defaults(fn=_cmd_tune)

    p = sub.add_parser("threshold", help="locate the interpolation threshold")
    _add_config_flags(p)
    _add_solver_flags(p)
    p.add_argument("--alpha-grid", default="0.2:20:13",
                   help="lo:hi:npts, geometric")
    p.add_argument("--mode", choices=("variance", "probe"), default="variance")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="threshold.csv")
    p.set_defaults(fn=_cmd_threshold)

    p = sub.add_parser("rerun", help="re-execute a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(fn=_cmd_rerun)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    args._argv = list(argv) if argv is not None else list(sys.argv[1:])
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UnderbagError as exc:
        print(f"solver fault: {exc}", file=sys.stderr)
        return EXIT_SOLVER_FAULT


if __name__ == "__main__":
    sys.exit(main())
