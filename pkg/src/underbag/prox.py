"""Scalar proximal maps of the effective one-dimensional problems.

Two randomized scalar problems drive every expectation in the fixed-point
system:

* weight side (ridge):   w*(h) = argmin_w  (q_hat/2) w^2 - h w + (lam/2) w^2,
  which is the closed form ``h / (q_hat + lam)``;
* data side (loss):      u*(h) = argmin_u  u^2 / (2 s) + c * l(u + h),
  with ``s = chi * delta`` and ``l`` one side of the margin-loss pair.

The data-side minimizer solves the stationarity equation

    u / s + c * l'(u + h) = 0,

by Newton iteration safeguarded with bisection on the bracket
``[-s c, s c]`` (valid because ``|l'| < 1``).  All entry points are
vectorized over numpy arrays; scalars pass through unchanged.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from scipy.special import expit

from .errors import NonConvergenceError, ConfigurationError

__all__ = [
    "LossSide",
    "CrossEntropyLoss",
    "prox_ridge",
    "prox_loss",
    "prox_loss_dh",
    "prox_loss_with_dh",
]

_STATIONARITY_TOL = 1e-13
_MAX_NEWTON_ITER = 100


class LossSide(Enum):
    """Selects the margin loss applied to one class."""

    PLUS = 1
    MINUS = -1


class CrossEntropyLoss:
    """Logistic margin-loss pair in overflow-safe form.

    ``value(x, PLUS) = log(1 + exp(-x))`` and ``value(x, MINUS) =
    log(1 + exp(x))``; both are convex with ``|l'| < 1`` and
    ``l'' = sigmoid(x) sigmoid(-x) in (0, 1/4]``.
    """

    @staticmethod
    def value(x, side: LossSide):
        return np.logaddexp(0.0, -side.value * np.asarray(x, dtype=float))

    @staticmethod
    def d1(x, side: LossSide):
        # d/dx log(1 + e^{-sx}) = -s * sigmoid(-s x)
        s = side.value
        return -s * expit(-s * np.asarray(x, dtype=float))

    @staticmethod
    def d2(x, side: LossSide):
        x = np.asarray(x, dtype=float)
        return expit(x) * expit(-x)

    @staticmethod
    def d1_d2(x, side: LossSide):
        # one sigmoid evaluation serves both derivatives
        s = side.value
        e = expit(-s * np.asarray(x, dtype=float))
        return -s * e, e * (1.0 - e)


def prox_ridge(h_w, q_hat, lam):
    """Minimizer of ``(q_hat/2) w^2 - h_w w + (lam/2) w^2``."""
    denom = q_hat + lam
    if not denom > 0.0:
        raise ConfigurationError(f"prox_ridge needs q_hat + lambda > 0, got {denom!r}")
    return h_w / denom


def _solve_stationarity(h, c, scale, side, loss):
    """Vectorized safeguarded Newton for the data-side minimizer."""
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    h, c = np.broadcast_arrays(h, c)

    shape = h.shape
    hf = h.reshape(-1)
    cf = c.reshape(-1)
    out = np.zeros(hf.shape)

    # active-set iteration: converged entries drop out so the slow
    # bisection tail runs on ever-smaller arrays
    idx = np.arange(hf.size)
    ha, ca = hf.copy(), cf.copy()
    ua = np.zeros_like(ha)
    lo = -scale * ca
    hi = scale * ca
    dx_old = hi - lo
    tol = _STATIONARITY_TOL * np.maximum(1.0, ca)

    deriv_pair = getattr(loss, "d1_d2", None)
    if deriv_pair is None:
        def deriv_pair(x, s):
            return loss.d1(x, s), loss.d2(x, s)

    for _ in range(_MAX_NEWTON_ITER):
        d1, d2 = deriv_pair(ua + ha, side)
        g = ua / scale + ca * d1
        lo = np.where(g < 0, ua, lo)
        hi = np.where(g > 0, ua, hi)
        done = np.abs(g) <= tol
        if done.any():
            out[idx[done]] = ua[done]
            if done.all():
                idx = idx[:0]
                break
            keep = ~done
            idx, ha, ca, ua = idx[keep], ha[keep], ca[keep], ua[keep]
            lo, hi, dx_old, tol = lo[keep], hi[keep], dx_old[keep], tol[keep]
            g, d2 = g[keep], d2[keep]
        gp = 1.0 / scale + ca * d2
        u_newton = ua - g / gp
        # Newton must stay bracketed AND keep halving the step, else bisect
        # (prevents 2-cycles across the sigmoid plateau)
        take = ((u_newton > lo) & (u_newton < hi)
                & (np.abs(2.0 * g) <= np.abs(dx_old * gp))
                & np.isfinite(u_newton))
        u_new = np.where(take, u_newton, 0.5 * (lo + hi))
        dx_old = np.abs(u_new - ua)
        ua = u_new
    if idx.size:
        worst = float(np.max(np.abs(ua / scale + ca * loss.d1(ua + ha, side))))
        raise NonConvergenceError(
            f"data-side prox failed to reach stationarity (worst residual {worst:.3e})")
    return out.reshape(shape), c, h


def prox_loss(h_u, c, scale, side: LossSide, loss=CrossEntropyLoss):
    """Minimizer of ``u^2/(2 scale) + c * l_side(u + h_u)``."""
    if not scale > 0.0:
        raise ConfigurationError(f"prox scale must be positive, got {scale!r}")
    u, _, _ = _solve_stationarity(h_u, c, scale, side, loss)
    if u.ndim == 0:
        return float(u)
    return u


def prox_loss_with_dh(h_u, c, scale, side: LossSide, loss=CrossEntropyLoss):
    """Return ``(u*, du*/dh)`` in one pass (the derivative is free once
    the minimizer is known, by implicit differentiation of stationarity)."""
    if not scale > 0.0:
        raise ConfigurationError(f"prox scale must be positive, got {scale!r}")
    u, c, h = _solve_stationarity(h_u, c, scale, side, loss)
    curv = c * loss.d2(u + h, side)
    du = -curv / (1.0 / scale + curv)
    return u, du


def prox_loss_dh(h_u, c, scale, side: LossSide, loss=CrossEntropyLoss):
    """Derivative of the data-side minimizer with respect to the field.

    Always lies in ``[-1, 0]`` (nonexpansiveness of the proximal map).
    """
    _, du = prox_loss_with_dh(h_u, c, scale, side, loss)
    if du.ndim == 0:
        return float(du)
    return du
