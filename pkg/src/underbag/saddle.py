"""Damped fixed-point solver for the order-parameter system.

The macroscopic behavior of the randomly reweighted ridge estimator is
characterized by scalars ``theta = (q, m, chi, v, b)`` coupled to
conjugates ``theta_hat = (q_hat, m_hat, chi_hat, v_hat)`` through two
scalar optimization problems (see :mod:`underbag.prox`).

Weight side (ridge regularizer, closed form):

    chi = 1 / (q_hat + lam)
    m   = m_hat * chi
    q   = (m_hat^2 + chi_hat) * chi^2
    v   = v_hat * chi^2

Data side, with per-class fields ``h = b +/- m + sqrt(q) xi + sqrt(v) eta``
(``xi, eta ~ N(0, delta)``), coefficients ``c`` from the class scheme, and
``u = u*(h, c)`` the loss prox at scale ``chi * delta``:

    q_hat   = -(ap E[du+/dh] + am E[du-/dh]) / chi
    chi_hat =  (ap E_xi[E_{eta,c}[u+]^2] + am E_xi[E_{eta,c}[u-]^2]) / (delta chi^2)
    m_hat   =  (ap E[u+] - am E[u-]) / (delta chi)
    v_hat   =  (ap E_xi[Var_{eta,c}[u+]] + am E_xi[Var_{eta,c}[u-]]) / (delta chi^2)

with ``ap = alpha_plus`` and ``am = alpha_minus``.  When the bias is
estimated, ``b`` solves ``ap E[u+] + am E[u-] = 0``.

``solve_full`` iterates the damped alternation (hats, then the closed
form, then the bias root).  ``solve_us`` solves the reduced
single-Gaussian system obeyed by the aggregate ``q_bar = q + v`` under
subsampling, which depends on the data only through ``alpha_plus``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import HatOrderParams, OrderParams, ProblemConfig
from .errors import ConfigurationError, DivergenceError, NonConvergenceError
from .metrics import MetricsBlock, compute_metrics
from .prox import LossSide, prox_loss_with_dh
from .quadrature import (CoeffSupport, QuadratureRule, coeff_support,
                         gauss_hermite, nested_mean_var)

__all__ = [
    "SolverOptions",
    "SolveReport",
    "sweep_theta",
    "sweep_theta_hat",
    "bias_residual",
    "solve_full",
    "solve_us",
    "verify_residual",
]

CHI_CAP = 1e8
SMALL_LAMBDA = 1e-5
BIAS_BRACKET = 20.0
BIAS_CAP = 512.0  # extreme naive-weighting instances need |b| > 20
BIAS_TOL = 1e-10
DAMPING_FLOOR = 0.05


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.5
    tol: float = 1e-9
    max_iter: int = 5000
    quad_order: int = 61
    init: object = None  # OrderParams, or (OrderParams, HatOrderParams)

    def __post_init__(self):
        if not 0.0 < self.damping <= 1.0:
            raise ConfigurationError(f"damping must be in (0, 1], got {self.damping!r}")
        if self.tol < 1e-12:
            raise ConfigurationError(f"tol must be >= 1e-12, got {self.tol!r}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be positive, got {self.max_iter!r}")

    def as_dict(self) -> dict:
        return {"damping": self.damping, "tol": self.tol,
                "max_iter": self.max_iter, "quad_order": self.quad_order}


@dataclass(frozen=True)
class SolveReport:
    theta: OrderParams
    theta_hat: HatOrderParams
    residual: float
    iterations: int
    converged: bool
    metrics: MetricsBlock
    config: ProblemConfig
    options: SolverOptions
    us_reduced: bool = False
    near_interpolation: bool = False

    def as_dict(self) -> dict:
        return {
            "theta": self.theta.as_dict(),
            "theta_hat": self.theta_hat.as_dict(),
            "residual": self.residual,
            "iterations": self.iterations,
            "converged": self.converged,
            "metrics": self.metrics.as_dict(),
            "us_reduced": self.us_reduced,
            "near_interpolation": self.near_interpolation,
            "options": self.options.as_dict(),
        }


# ---------------------------------------------------------------------------
# sweeps of the full system


def _side_moments(side: LossSide, b, m, q, v, chi, config, rule,
                  support: CoeffSupport):
    """Nested moments of the data-side prox for one class."""
    delta = config.delta
    scale = chi * delta
    center = b + side.value * m

    def f(xi, eta, c):
        return prox_loss_with_dh(center + xi + eta, c, scale, side)

    return nested_mean_var(f, math.sqrt(q * delta), math.sqrt(v * delta),
                           support, rule)


def _supports(config: ProblemConfig):
    return coeff_support(config.coeff_plus), coeff_support(config.coeff_minus)


def sweep_theta_hat(theta: OrderParams, config: ProblemConfig,
                    rule: QuadratureRule, supports=None) -> HatOrderParams:
    """One data-side sweep: conjugate parameters from the current state."""
    if theta.chi <= 0:
        raise DivergenceError(f"chi must be positive, got {theta.chi!r}", state=theta)
    sup_p, sup_m = supports if supports is not None else _supports(config)
    mom_p = _side_moments(LossSide.PLUS, theta.b, theta.m, theta.q, theta.v,
                          theta.chi, config, rule, sup_p)
    mom_m = _side_moments(LossSide.MINUS, theta.b, theta.m, theta.q, theta.v,
                          theta.chi, config, rule, sup_m)
    ap, am = config.alpha_plus, config.alpha_minus
    delta, chi = config.delta, theta.chi
    q_hat = -(ap * mom_p.mean_dh + am * mom_m.mean_dh) / chi
    chi_hat = (ap * mom_p.mean_sq_inner + am * mom_m.mean_sq_inner) / (delta * chi ** 2)
    m_hat = (ap * mom_p.mean - am * mom_m.mean) / (delta * chi)
    v_hat = (ap * mom_p.var_inner + am * mom_m.var_inner) / (delta * chi ** 2)
    return HatOrderParams(q_hat=q_hat, m_hat=m_hat, chi_hat=chi_hat,
                          v_hat=max(v_hat, 0.0))


def sweep_theta(theta_hat: HatOrderParams, config: ProblemConfig,
                b: float = 0.0) -> OrderParams:
    """Closed-form weight-side sweep (ridge makes the scalar problem linear)."""
    denom = theta_hat.q_hat + config.lam
    if not denom > 0.0:
        raise DivergenceError(
            f"q_hat + lambda = {denom!r} is not positive", state=theta_hat)
    chi = 1.0 / denom
    if config.lam < SMALL_LAMBDA and chi > CHI_CAP:
        chi = CHI_CAP
    m = theta_hat.m_hat * chi
    q = (theta_hat.m_hat ** 2 + theta_hat.chi_hat) * chi ** 2
    v = theta_hat.v_hat * chi ** 2
    return OrderParams(q=q, m=m, chi=chi, v=max(v, 0.0), b=b)


def bias_residual(theta: OrderParams, theta_hat: HatOrderParams, b: float,
                  config: ProblemConfig, rule: QuadratureRule,
                  supports=None) -> float:
    """Stationarity of the bias: ``ap E[u+] + am E[u-]`` at trial bias ``b``.

    The estimated-bias branch drives this to zero; it is decreasing in
    ``b`` because both prox means are.
    """
    sup_p, sup_m = supports if supports is not None else _supports(config)
    mom_p = _side_moments(LossSide.PLUS, b, theta.m, theta.q, theta.v,
                          theta.chi, config, rule, sup_p)
    mom_m = _side_moments(LossSide.MINUS, b, theta.m, theta.q, theta.v,
                          theta.chi, config, rule, sup_m)
    return config.alpha_plus * mom_p.mean + config.alpha_minus * mom_m.mean


def _decreasing_root(eval_fn, b0: float, tol: float = BIAS_TOL,
                     bracket: float = BIAS_BRACKET, cap: float = BIAS_CAP,
                     max_evals: int = 120) -> float:
    """Safeguarded Newton for a decreasing scalar residual ``r(b)``.

    ``eval_fn(b)`` returns ``(r, dr/db)``.  The sign of ``r`` locates the
    root (positive residual means the root lies to the right); sign
    bookkeeping backs up the Newton steps with bisection once a bracket
    exists, and walks outward geometrically from the initial ``bracket``
    when the root sits beyond it (up to ``cap``).
    """
    lo = hi = None  # tightest known sign-change bracket
    b = min(max(b0, -bracket), bracket)
    r = None
    for _ in range(max_evals):
        r, rp = eval_fn(b)
        if abs(r) < tol:
            return b
        if r > 0:
            lo = b if lo is None else max(lo, b)
        else:
            hi = b if hi is None else min(hi, b)
        if lo is not None and hi is not None:
            if hi - lo < 1e-15:
                return b
            b_next = b - r / rp if rp < 0 else None
            if (b_next is None or not (lo < b_next < hi)
                    or not math.isfinite(b_next)):
                b_next = 0.5 * (lo + hi)
        else:
            direction = 1.0 if r > 0 else -1.0
            b_next = b - r / rp if rp < 0 and math.isfinite(rp) else None
            if (b_next is None or not math.isfinite(b_next)
                    or (b_next - b) * direction <= 0):
                b_next = b + direction * max(1.0, abs(b))
            b_next = min(max(b_next, -cap), cap)
            if b_next == b:
                raise DivergenceError(
                    f"bias root lies outside +-{cap:g} (residual {r:.3e})")
        b = b_next
    raise NonConvergenceError("bias root search exhausted its budget",
                              residual=abs(r))


def _solve_bias_root(theta: OrderParams, config: ProblemConfig,
                     rule: QuadratureRule, supports, b0: float) -> float:
    sup_p, sup_m = supports
    ap, am = config.alpha_plus, config.alpha_minus

    def eval_fn(b):
        mom_p = _side_moments(LossSide.PLUS, b, theta.m, theta.q, theta.v,
                              theta.chi, config, rule, sup_p)
        mom_m = _side_moments(LossSide.MINUS, b, theta.m, theta.q, theta.v,
                              theta.chi, config, rule, sup_m)
        r = ap * mom_p.mean + am * mom_m.mean
        rp = ap * mom_p.mean_dh + am * mom_m.mean_dh
        return r, rp

    return _decreasing_root(eval_fn, b0)


def _rel(new: float, old: float) -> float:
    return abs(new - old) / max(1.0, abs(old))


def _theta_residual(theta_prop: OrderParams, theta: OrderParams,
                    hat_prop: HatOrderParams, theta_hat: HatOrderParams) -> float:
    return max(
        _rel(theta_prop.q, theta.q),
        _rel(theta_prop.m, theta.m),
        _rel(theta_prop.chi, theta.chi),
        _rel(theta_prop.v, theta.v),
        _rel(hat_prop.q_hat, theta_hat.q_hat),
        _rel(hat_prop.m_hat, theta_hat.m_hat),
        _rel(hat_prop.chi_hat, theta_hat.chi_hat),
        _rel(hat_prop.v_hat, theta_hat.v_hat),
    )


def _initial_state(config: ProblemConfig, options: SolverOptions):
    init = options.init
    theta_hat0 = None
    if isinstance(init, tuple):
        theta0, theta_hat0 = init
    elif isinstance(init, OrderParams):
        theta0 = init
    else:
        v0 = 0.0 if config.deterministic_coeffs else 0.1
        b0 = 0.0 if config.bias.estimated else config.bias.value
        theta0 = OrderParams(q=1.0, m=0.5, chi=1.0, v=v0, b=b0)
    if not config.bias.estimated:
        theta0 = replace(theta0, b=config.bias.value)
    if config.deterministic_coeffs:
        theta0 = replace(theta0, v=0.0)
    return theta0, theta_hat0


def solve_full(config: ProblemConfig, options: SolverOptions | None = None) -> SolveReport:
    """Solve the full system by damped alternation.

    Raises :class:`NonConvergenceError` when the iteration budget is
    exhausted (the exception carries the last state and residual) and
    :class:`DivergenceError` when an iterate leaves its domain.
    """
    options = options or SolverOptions()
    rule = gauss_hermite(options.quad_order)
    supports = _supports(config)
    theta, theta_hat = _initial_state(config, options)
    if theta_hat is None:
        theta_hat = sweep_theta_hat(theta, config, rule, supports)

    damping = options.damping
    res_prev = math.inf
    res = math.inf
    iterations = 0
    for iterations in range(1, options.max_iter + 1):
        hat_prop = sweep_theta_hat(theta, config, rule, supports)
        theta_prop = sweep_theta(hat_prop, config, b=theta.b)
        res = _theta_residual(theta_prop, theta, hat_prop, theta_hat)

        theta_hat = hat_prop
        d = damping
        mixed = OrderParams(
            q=(1 - d) * theta.q + d * theta_prop.q,
            m=(1 - d) * theta.m + d * theta_prop.m,
            chi=(1 - d) * theta.chi + d * theta_prop.chi,
            v=(1 - d) * theta.v + d * theta_prop.v,
            b=theta.b,
        )
        if config.bias.estimated:
            b_root = _solve_bias_root(mixed, config, rule, supports, theta.b)
            res = max(res, _rel(b_root, theta.b))
            mixed = replace(mixed, b=(1 - d) * theta.b + d * b_root)
        theta = mixed.validate()

        if res < options.tol:
            break
        if res > res_prev:
            damping = max(damping / 2.0, DAMPING_FLOOR)
        else:
            damping = min(damping * 1.02, options.damping)
        res_prev = res
    converged = res < options.tol
    if not converged:
        raise NonConvergenceError(
            f"no fixed point within {options.max_iter} iterations "
            f"(residual {res:.3e})", state=(theta, theta_hat),
            residual=res, iterations=iterations)

    residual = _certified_residual(theta, theta_hat, config, rule, supports)
    near = config.lam < SMALL_LAMBDA and theta.chi >= CHI_CAP
    metrics = compute_metrics(theta, config.delta, config.ensemble_k)
    return SolveReport(theta=theta, theta_hat=theta_hat, residual=residual,
                       iterations=iterations, converged=True, metrics=metrics,
                       config=config, options=options, near_interpolation=near)


def _certified_residual(theta, theta_hat, config, rule, supports=None) -> float:
    supports = supports if supports is not None else _supports(config)
    hat_prop = sweep_theta_hat(theta, config, rule, supports)
    theta_prop = sweep_theta(hat_prop, config, b=theta.b)
    res = _theta_residual(theta_prop, theta, hat_prop, theta_hat)
    if config.bias.estimated:
        res = max(res, abs(bias_residual(theta, theta_hat, theta.b, config,
                                         rule, supports)))
    else:
        res = max(res, _rel(config.bias.value, theta.b) if theta.b != config.bias.value else 0.0)
    return res


# ---------------------------------------------------------------------------
# reduced system for under-sampling without replacement


def _us_effective(config: ProblemConfig):
    if config.scheme != "subsample":
        raise ConfigurationError(
            "the reduced solver applies to subsampling configs only, "
            f"got scheme {config.scheme!r}")
    gamma_plus = config.coeff_plus.gamma
    a_plus = config.alpha_plus
    a_minus = config.alpha_minus * config.coeff_minus.mu
    return gamma_plus, a_plus, a_minus


def _us_side_moments(side: LossSide, b, m, q_bar, chi, config, rule, c_value):
    support = CoeffSupport(values=np.asarray([c_value]),
                           probabilities=np.asarray([1.0]),
                           truncation_mass=0.0)
    return _side_moments(side, b, m, q_bar, 0.0, chi, config, rule, support)


def _us_sweep(theta: OrderParams, config, rule, gamma_plus, a_plus, a_minus):
    delta, chi = config.delta, theta.chi
    mom_p = _us_side_moments(LossSide.PLUS, theta.b, theta.m, theta.q, chi,
                             config, rule, gamma_plus)
    mom_m = _us_side_moments(LossSide.MINUS, theta.b, theta.m, theta.q, chi,
                             config, rule, 1.0)
    q_hat = -(a_plus * mom_p.mean_dh + a_minus * mom_m.mean_dh) / chi
    chi_hat = (a_plus * mom_p.mean_sq_inner + a_minus * mom_m.mean_sq_inner) / (delta * chi ** 2)
    m_hat = (a_plus * mom_p.mean - a_minus * mom_m.mean) / (delta * chi)
    bias_res = a_plus * mom_p.mean + a_minus * mom_m.mean
    return HatOrderParams(q_hat=q_hat, m_hat=m_hat, chi_hat=chi_hat, v_hat=0.0), bias_res


def _us_bias_root(theta, config, rule, gamma_plus, a_plus, a_minus, b0):
    def eval_fn(b):
        mom_p = _us_side_moments(LossSide.PLUS, b, theta.m, theta.q, theta.chi,
                                 config, rule, gamma_plus)
        mom_m = _us_side_moments(LossSide.MINUS, b, theta.m, theta.q, theta.chi,
                                 config, rule, 1.0)
        r = a_plus * mom_p.mean + a_minus * mom_m.mean
        rp = a_plus * mom_p.mean_dh + a_minus * mom_m.mean_dh
        return r, rp

    return _decreasing_root(eval_fn, b0)


def solve_us(config: ProblemConfig, options: SolverOptions | None = None) -> SolveReport:
    """Solve the reduced aggregate system for subsampling.

    The aggregate ``q_bar = q + v`` obeys a single-Gaussian system with
    both classes entering at effective size ``alpha_plus`` (for the
    default resampling rate), so the result is independent of the
    majority-class excess.  The report stores ``q_bar`` in the ``q`` slot
    with ``v = 0`` and ``us_reduced=True``.
    """
    options = options or SolverOptions()
    rule = gauss_hermite(options.quad_order)
    gamma_plus, a_plus, a_minus = _us_effective(config)

    init = options.init
    if isinstance(init, tuple):
        theta, theta_hat = init
    elif isinstance(init, OrderParams):
        theta, theta_hat = init, None
    else:
        b0 = 0.0 if config.bias.estimated else config.bias.value
        theta = OrderParams(q=1.0, m=0.5, chi=1.0, v=0.0, b=b0)
        theta_hat = None
    theta = replace(theta, v=0.0)
    if not config.bias.estimated:
        theta = replace(theta, b=config.bias.value)
    if theta_hat is None:
        theta_hat, _ = _us_sweep(theta, config, rule, gamma_plus, a_plus, a_minus)

    damping = options.damping
    res_prev = math.inf
    res = math.inf
    iterations = 0
    for iterations in range(1, options.max_iter + 1):
        hat_prop, _ = _us_sweep(theta, config, rule, gamma_plus, a_plus, a_minus)
        theta_prop = sweep_theta(hat_prop, config, b=theta.b)
        res = max(
            _rel(theta_prop.q, theta.q),
            _rel(theta_prop.m, theta.m),
            _rel(theta_prop.chi, theta.chi),
            _rel(hat_prop.q_hat, theta_hat.q_hat),
            _rel(hat_prop.m_hat, theta_hat.m_hat),
            _rel(hat_prop.chi_hat, theta_hat.chi_hat),
        )
        theta_hat = hat_prop
        d = damping
        mixed = OrderParams(
            q=(1 - d) * theta.q + d * theta_prop.q,
            m=(1 - d) * theta.m + d * theta_prop.m,
            chi=(1 - d) * theta.chi + d * theta_prop.chi,
            v=0.0,
            b=theta.b,
        )
        if config.bias.estimated:
            b_root = _us_bias_root(mixed, config, rule, gamma_plus, a_plus,
                                   a_minus, theta.b)
            res = max(res, _rel(b_root, theta.b))
            mixed = replace(mixed, b=(1 - d) * theta.b + d * b_root)
        theta = mixed.validate()
        if res < options.tol:
            break
        if res > res_prev:
            damping = max(damping / 2.0, DAMPING_FLOOR)
        else:
            damping = min(damping * 1.02, options.damping)
        res_prev = res
    if not res < options.tol:
        raise NonConvergenceError(
            f"no fixed point within {options.max_iter} iterations "
            f"(reduced system, residual {res:.3e})",
            state=(theta, theta_hat), residual=res, iterations=iterations)

    residual = _us_certified_residual(theta, theta_hat, config, rule)
    near = config.lam < SMALL_LAMBDA and theta.chi >= CHI_CAP
    metrics = compute_metrics(theta, config.delta, config.ensemble_k)
    return SolveReport(theta=theta, theta_hat=theta_hat, residual=residual,
                       iterations=iterations, converged=True, metrics=metrics,
                       config=config, options=options, us_reduced=True,
                       near_interpolation=near)


def _us_certified_residual(theta, theta_hat, config, rule) -> float:
    gamma_plus, a_plus, a_minus = _us_effective(config)
    hat_prop, bias_res = _us_sweep(theta, config, rule, gamma_plus, a_plus, a_minus)
    theta_prop = sweep_theta(hat_prop, config, b=theta.b)
    res = max(
        _rel(theta_prop.q, theta.q),
        _rel(theta_prop.m, theta.m),
        _rel(theta_prop.chi, theta.chi),
        _rel(hat_prop.q_hat, theta_hat.q_hat),
        _rel(hat_prop.m_hat, theta_hat.m_hat),
        _rel(hat_prop.chi_hat, theta_hat.chi_hat),
    )
    if config.bias.estimated:
        res = max(res, abs(bias_res))
    return res


def verify_residual(report: SolveReport, config: ProblemConfig,
                    rule: QuadratureRule | None = None) -> float:
    """Re-evaluate every equation at the reported point with a doubled
    quadrature order; returns the sup-norm residual."""
    base = rule or gauss_hermite(report.options.quad_order)
    dense = gauss_hermite(min(2 * base.order - 1, 200))
    if report.us_reduced:
        return _us_certified_residual(report.theta, report.theta_hat, config, dense)
    return _certified_residual(report.theta, report.theta_hat, config, dense)
