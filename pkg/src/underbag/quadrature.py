"""Gaussian quadrature and coefficient expectations.

All expectations in the fixed-point system have one of four shapes, taken
over an outer Gaussian ``xi``, an inner Gaussian ``eta``, and the discrete
reweighting coefficient ``c``:

    E_xi[ E_{eta,c}[X]^2 ],   E_xi[ Var_{eta,c}[X] ],   E[X],   E[dX/dh].

``nested_mean_var`` evaluates all four in one pass on a tensor grid of
probabilists' Gauss-Hermite nodes (exact for standard-normal polynomial
moments) crossed with the coefficient support atoms.  Nonstandard Gaussian
variances are folded in by scaling the nodes, never by re-deriving rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .config import CoeffScheme
from .errors import ConfigurationError, EvaluationFault

__all__ = [
    "QuadratureRule",
    "CoeffSupport",
    "NestedMoments",
    "gauss_hermite",
    "coeff_support",
    "nested_mean_var",
]

MAX_ORDER = 200
POISSON_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights for expectations under the standard normal.

    Weights sum to one; nodes are exactly symmetric about zero, so odd
    moments vanish by construction.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray

    def doubled(self) -> "QuadratureRule":
        return gauss_hermite(2 * self.order - 1)


@lru_cache(maxsize=32)
def gauss_hermite(order: int) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule, exact for degree <= 2*order - 1."""
    if order < 1:
        raise ConfigurationError(f"quadrature order must be >= 1, got {order!r}")
    if order > MAX_ORDER:
        raise ConfigurationError(
            f"quadrature order {order} exceeds {MAX_ORDER}; node accuracy degrades")
    nodes, weights = hermegauss(order)
    weights = weights / weights.sum()
    # enforce exact symmetry so odd moments cancel pairwise
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureRule(order=order, nodes=nodes, weights=weights)


@dataclass(frozen=True)
class CoeffSupport:
    """Discrete support of a coefficient scheme, with truncation bookkeeping."""

    values: np.ndarray
    probabilities: np.ndarray
    truncation_mass: float

    def mean(self) -> float:
        return float(np.dot(self.values, self.probabilities))


def coeff_support(scheme: CoeffScheme, tail_tol: float = POISSON_TAIL_TOL) -> CoeffSupport:
    """Atomize a coefficient scheme; Poisson tails are cut below ``tail_tol``."""
    if scheme.kind == "delta":
        values, probs, trunc = [scheme.gamma], [1.0], 0.0
    elif scheme.kind == "bernoulli":
        values, probs, trunc = [1.0, 0.0], [scheme.mu, 1.0 - scheme.mu], 0.0
    elif scheme.kind == "poisson":
        mu = scheme.mu
        values, probs = [], []
        pmf = math.exp(-mu)
        mass = 0.0
        k = 0
        while 1.0 - mass >= tail_tol:
            values.append(float(k))
            probs.append(pmf)
            mass += pmf
            k += 1
            pmf *= mu / k
        trunc = max(1.0 - mass, 0.0)
    else:  # pragma: no cover - exhaustive over CoeffScheme
        raise ConfigurationError(f"unknown coefficient scheme {scheme!r}")
    vals = np.asarray(values, dtype=float)
    prob = np.asarray(probs, dtype=float)
    vals.setflags(write=False)
    prob.setflags(write=False)
    return CoeffSupport(values=vals, probabilities=prob, truncation_mass=trunc)


@dataclass(frozen=True)
class NestedMoments:
    """The four expectation shapes of the fixed-point system for one side.

    ``mean_sq_inner`` = E_xi[(E_{eta,c} X)^2], ``var_inner`` =
    E_xi[Var_{eta,c} X], ``mean`` = E[X], ``mean_dh`` = E[dX/dh].
    """

    mean_sq_inner: float
    var_inner: float
    mean: float
    mean_dh: float


def nested_mean_var(f, sigma_xi: float, sigma_eta: float,
                    support: CoeffSupport, rule: QuadratureRule) -> NestedMoments:
    """Evaluate the nested moments of ``X = f(xi, eta, c)``.

    ``f`` must accept broadcastable arrays ``(xi, eta, c)`` and return the
    pair ``(value, d value/dh)``; it receives ``xi ~ N(0, sigma_xi^2)`` and
    ``eta ~ N(0, sigma_eta^2)`` samples directly (node scaling is done
    here).  A zero ``sigma_eta`` collapses the inner Gaussian layer to a
    single node, which is exact.
    """
    xi = sigma_xi * rule.nodes
    w_xi = rule.weights
    if sigma_eta == 0.0:
        eta = np.zeros(1)
        w_eta = np.ones(1)
    else:
        eta = sigma_eta * rule.nodes
        w_eta = rule.weights

    val, dval = f(xi[:, None, None], eta[None, :, None],
                  support.values[None, None, :])
    val = np.broadcast_to(np.asarray(val, dtype=float),
                          (xi.size, eta.size, support.values.size))
    dval = np.broadcast_to(np.asarray(dval, dtype=float), val.shape)
    if not np.isfinite(val).all() or not np.isfinite(dval).all():
        bad = np.argwhere(~(np.isfinite(val) & np.isfinite(dval)))[0]
        raise EvaluationFault(
            "non-finite integrand at node xi={:.6g}, eta={:.6g}, c={:.6g}".format(
                xi[bad[0]], eta[bad[1]], support.values[bad[2]]))

    w_inner = w_eta[:, None] * support.probabilities[None, :]
    m1 = np.tensordot(val, w_inner, axes=([1, 2], [0, 1]))
    m2 = np.tensordot(val * val, w_inner, axes=([1, 2], [0, 1]))
    d1 = np.tensordot(dval, w_inner, axes=([1, 2], [0, 1]))

    mean_sq_inner = float(np.dot(w_xi, m1 * m1))
    var_inner = float(np.dot(w_xi, m2 - m1 * m1))
    mean = float(np.dot(w_xi, m1))
    mean_dh = float(np.dot(w_xi, d1))
    return NestedMoments(mean_sq_inner=mean_sq_inner, var_inner=var_inner,
                         mean=mean, mean_dh=mean_dh)
