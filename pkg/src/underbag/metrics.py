"""Generalization metrics of a solved state.

The ensemble-averaged logit for a fresh input from class ``+/-`` is
Gaussian with mean ``b +/- m`` and variance ``delta * (q + v/k)``, where
``k`` is the number of averaged coefficient realizations.  Specificity,
recall, and their harmonic mean follow from Gaussian tail masses:

    S = H(-(m + b) / sigma),   R = 1 - H((m - b) / sigma),
    F = 2 / (1/S + 1/R),       sigma^2 = delta * (q + v/k),

with ``H`` the standard-normal upper tail.  ``v / (q + v)`` is the share
of the logit variance caused by the resampling randomness; its profile
over ``alpha_plus`` peaks at the separable/inseparable boundary when the
ridge strength is small.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .config import OrderParams, ProblemConfig
from .errors import ConfigurationError

__all__ = [
    "gaussian_tail",
    "FMeasure",
    "f_measure",
    "PredictionLaw",
    "prediction_law",
    "relative_variance",
    "MetricsBlock",
    "compute_metrics",
    "VariancePeak",
    "find_variance_peak",
]


def gaussian_tail(x):
    """Upper-tail probability of the standard normal, stable far out."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


@dataclass(frozen=True)
class FMeasure:
    specificity: float
    recall: float
    f_value: float
    degenerate: bool = False


def _harmonic(s: float, r: float) -> float:
    if s + r <= 0.0:
        return 0.0
    return 2.0 * s * r / (s + r)


def f_measure(theta: OrderParams, delta: float, k: float) -> FMeasure:
    """Specificity, recall, and F-measure of the k-averaged predictor."""
    if k != math.inf and k < 1:
        raise ConfigurationError(f"k must be >= 1 or inf, got {k!r}")
    var_logit = theta.q + (0.0 if k == math.inf else theta.v / k)
    sigma2 = delta * var_logit
    if sigma2 <= 0.0:
        # point-mass logits: step metrics
        s = 0.5 if theta.m + theta.b == 0.0 else float(theta.m + theta.b > 0.0)
        r = 0.5 if theta.m - theta.b == 0.0 else float(theta.m - theta.b > 0.0)
        return FMeasure(s, r, _harmonic(s, r), degenerate=True)
    sigma = math.sqrt(sigma2)
    s = float(gaussian_tail(-(theta.m + theta.b) / sigma))
    r = float(1.0 - gaussian_tail((theta.m - theta.b) / sigma))
    return FMeasure(s, r, _harmonic(s, r))


@dataclass(frozen=True)
class PredictionLaw:
    """Two-class Gaussian law of the k-averaged logit."""

    center_plus: float
    center_minus: float
    variance: float

    def as_dict(self) -> dict:
        return {"center_plus": self.center_plus,
                "center_minus": self.center_minus,
                "variance": self.variance}


def prediction_law(theta: OrderParams, delta: float, k: float) -> PredictionLaw:
    var_logit = theta.q + (0.0 if k == math.inf else theta.v / k)
    return PredictionLaw(center_plus=theta.b + theta.m,
                         center_minus=theta.b - theta.m,
                         variance=delta * var_logit)


def relative_variance(theta: OrderParams) -> float:
    """Share of the logit variance due to resampling randomness, v/(q+v)."""
    total = theta.q + theta.v
    if total <= 0.0:
        raise ConfigurationError("relative variance needs q + v > 0")
    return theta.v / total


@dataclass(frozen=True)
class MetricsBlock:
    """Metric bundle embedded in solver reports."""

    specificity: float
    recall: float
    f_value: float
    relative_variance: float
    k: float

    def as_dict(self) -> dict:
        return {"specificity": self.specificity, "recall": self.recall,
                "f_value": self.f_value,
                "relative_variance": self.relative_variance,
                "k": "inf" if self.k == math.inf else self.k}


def compute_metrics(theta: OrderParams, delta: float, k: float) -> MetricsBlock:
    fm = f_measure(theta, delta, k)
    total = theta.q + theta.v
    rel = theta.v / total if total > 0 else float("nan")
    return MetricsBlock(specificity=fm.specificity, recall=fm.recall,
                        f_value=fm.f_value, relative_variance=rel, k=k)


@dataclass(frozen=True)
class VariancePeak:
    found: bool
    alpha_plus: float
    value: float
    grid: tuple
    profile: tuple


def find_variance_peak(config_template: ProblemConfig, alpha_plus_grid,
                       options=None) -> VariancePeak:
    """Locate the resampling-variance peak along an ``alpha_plus`` grid.

    Solves the system at each grid point (warm-started along the grid,
    majority excess held fixed) and refines the grid argmax of
    ``v / (q + v)`` with a three-point quadratic fit in ``log10 alpha``.
    Returns ``found=False`` for flat profiles or boundary maxima.
    """
    from .saddle import SolverOptions, solve_full

    grid = [float(a) for a in alpha_plus_grid]
    if sorted(grid) != grid or len(grid) < 3:
        raise ConfigurationError("alpha_plus grid must be sorted with >= 3 points")
    options = options or SolverOptions()
    gap = config_template.alpha_gap

    profile = []
    warm = options.init
    for a in grid:
        cfg = config_template.replace(alpha_plus=a, alpha_minus=a + gap)
        import dataclasses

        report = solve_full(cfg, dataclasses.replace(options, init=warm))
        warm = report.theta
        profile.append(relative_variance(report.theta))

    values = np.asarray(profile)
    idx = int(np.argmax(values))
    flat = values.max() - values.min() < 1e-12
    if flat or idx == 0 or idx == len(grid) - 1:
        return VariancePeak(found=False, alpha_plus=float("nan"),
                            value=float(values.max()), grid=tuple(grid),
                            profile=tuple(profile))
    x = np.log10(grid[idx - 1:idx + 2])
    y = values[idx - 1:idx + 2]
    # vertex of the parabola through the three bracketing points
    denom = (x[0] - x[1]) * (x[0] - x[2]) * (x[1] - x[2])
    a_coef = (x[2] * (y[1] - y[0]) + x[1] * (y[0] - y[2]) + x[0] * (y[2] - y[1])) / denom
    b_coef = (x[2] ** 2 * (y[0] - y[1]) + x[1] ** 2 * (y[2] - y[0])
              + x[0] ** 2 * (y[1] - y[2])) / denom
    if a_coef >= 0:
        x_star, y_star = x[1], y[1]
    else:
        x_star = -b_coef / (2 * a_coef)
        x_star = min(max(x_star, x[0]), x[2])
        c_coef = y[1] - a_coef * x[1] ** 2 - b_coef * x[1]
        y_star = a_coef * x_star ** 2 + b_coef * x_star + c_coef
    return VariancePeak(found=True, alpha_plus=float(10 ** x_star),
                        value=float(y_star), grid=tuple(grid),
                        profile=tuple(profile))
