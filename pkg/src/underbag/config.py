"""Problem instances and reweighting-coefficient schemes.

A problem instance fixes the data geometry (class sizes ``alpha_plus <=
alpha_minus`` relative to the input dimension, cluster-noise variance
``delta``), the ridge strength ``lam``, the per-class distributions of the
random loss coefficients, the bias handling, and the ensemble size ``k``.

Three coefficient schemes cover the methods under study:

* subsampling (without replacement): positives keep coefficient 1, each
  negative is kept independently with probability ``mu`` (Bernoulli);
* bootstrap (with replacement): negatives receive Poisson(``mu``) counts;
* simple weighting: both classes receive deterministic weights ``gamma``.

All types are immutable and safe to share between parallel workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConfigurationError

__all__ = [
    "DeltaScheme",
    "BernoulliScheme",
    "PoissonScheme",
    "CoeffScheme",
    "BiasMode",
    "ProblemConfig",
    "OrderParams",
    "HatOrderParams",
    "make_subsampling_config",
    "make_bootstrap_config",
    "make_weighting_config",
]


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigurationError(message)


def _finite(x: float, name: str) -> float:
    x = float(x)
    _require(math.isfinite(x), f"{name} must be finite, got {x!r}")
    return x


@dataclass(frozen=True)
class DeltaScheme:
    """Coefficient fixed at a single value ``gamma`` (no randomness)."""

    gamma: float

    def __post_init__(self):
        _require(math.isfinite(self.gamma) and self.gamma >= 0.0,
                 f"delta scheme needs gamma >= 0, got {self.gamma!r}")

    kind = "delta"

    @property
    def deterministic(self) -> bool:
        return True

    def mean(self) -> float:
        return self.gamma

    def variance(self) -> float:
        return 0.0


@dataclass(frozen=True)
class BernoulliScheme:
    """Coefficient in {0, 1}; a point is kept with probability ``mu``."""

    mu: float

    def __post_init__(self):
        _require(math.isfinite(self.mu) and 0.0 < self.mu <= 1.0,
                 f"bernoulli scheme needs mu in (0, 1], got {self.mu!r}")

    kind = "bernoulli"

    @property
    def deterministic(self) -> bool:
        # keep-all resampling carries no randomness
        return self.mu == 1.0

    def mean(self) -> float:
        return self.mu

    def variance(self) -> float:
        return self.mu * (1.0 - self.mu)


@dataclass(frozen=True)
class PoissonScheme:
    """Nonnegative-integer coefficient with mean ``mu`` (duplication counts)."""

    mu: float

    def __post_init__(self):
        _require(math.isfinite(self.mu) and 0.0 < self.mu <= 1.0,
                 f"poisson scheme needs mu in (0, 1], got {self.mu!r}")

    kind = "poisson"

    @property
    def deterministic(self) -> bool:
        return False

    def mean(self) -> float:
        return self.mu

    def variance(self) -> float:
        return self.mu


CoeffScheme = DeltaScheme | BernoulliScheme | PoissonScheme


@dataclass(frozen=True)
class BiasMode:
    """Bias handling: estimated by the optimizer, or fixed at ``value``."""

    mode: str
    value: float = 0.0

    def __post_init__(self):
        _require(self.mode in ("estimate", "fixed"),
                 f"bias mode must be 'estimate' or 'fixed', got {self.mode!r}")
        _finite(self.value, "bias value")

    @property
    def estimated(self) -> bool:
        return self.mode == "estimate"

    @staticmethod
    def estimate() -> "BiasMode":
        return BiasMode("estimate")

    @staticmethod
    def fixed(value: float = 0.0) -> "BiasMode":
        return BiasMode("fixed", float(value))


@dataclass(frozen=True)
class ProblemConfig:
    """A fully specified theory instance.

    ``alpha_plus``/``alpha_minus`` are the class sizes per input dimension
    (positives are the minority), ``delta`` the per-coordinate noise
    variance, ``lam`` the ridge strength, ``ensemble_k`` the number of
    coefficient realizations averaged at prediction time (``math.inf``
    for the fully averaged ensemble).
    """

    alpha_plus: float
    alpha_minus: float
    delta: float
    lam: float
    coeff_plus: CoeffScheme
    coeff_minus: CoeffScheme
    bias: BiasMode = field(default_factory=BiasMode.estimate)
    ensemble_k: float = math.inf

    def __post_init__(self):
        _require(_finite(self.alpha_plus, "alpha_plus") > 0.0,
                 f"alpha_plus must be positive, got {self.alpha_plus!r}")
        _require(_finite(self.alpha_minus, "alpha_minus") > 0.0,
                 f"alpha_minus must be positive, got {self.alpha_minus!r}")
        _require(self.alpha_plus <= self.alpha_minus,
                 "positives must be the minority class: alpha_plus "
                 f"({self.alpha_plus!r}) > alpha_minus ({self.alpha_minus!r})")
        _require(_finite(self.delta, "delta") > 0.0,
                 f"delta must be positive, got {self.delta!r}")
        _require(_finite(self.lam, "lambda") > 0.0,
                 f"lambda must be positive, got {self.lam!r}")
        k = self.ensemble_k
        _require(k == math.inf or (float(k).is_integer() and k >= 1),
                 f"ensemble_k must be a positive integer or inf, got {k!r}")

    @property
    def alpha_gap(self) -> float:
        return self.alpha_minus - self.alpha_plus

    @property
    def scheme(self) -> str:
        """CLI scheme name derived from the coefficient pair."""
        if self.coeff_minus.kind == "bernoulli":
            return "subsample"
        if self.coeff_minus.kind == "poisson":
            return "bootstrap"
        return "weight"

    @property
    def deterministic_coeffs(self) -> bool:
        return self.coeff_plus.deterministic and self.coeff_minus.deterministic

    def replace(self, **kwargs) -> "ProblemConfig":
        import dataclasses

        return dataclasses.replace(self, **kwargs)


@dataclass(frozen=True)
class OrderParams:
    """Macroscopic state of the averaged estimator.

    ``q``: squared norm of the coefficient-averaged weight vector;
    ``m``: overlap with the cluster-center direction;
    ``chi``: susceptibility of the single-instance optimizer;
    ``v``: per-coordinate variance induced by the random coefficients;
    ``b``: bias term.
    """

    q: float
    m: float
    chi: float
    v: float
    b: float

    def validate(self) -> "OrderParams":
        from .errors import DivergenceError

        vals = (self.q, self.m, self.chi, self.v, self.b)
        if not all(math.isfinite(x) for x in vals):
            raise DivergenceError(f"non-finite order parameters: {self}", state=self)
        if self.q < 0 or self.v < 0 or self.chi <= 0:
            raise DivergenceError(f"order parameters left their domain: {self}", state=self)
        return self

    def as_dict(self) -> dict:
        return {"q": self.q, "m": self.m, "chi": self.chi, "v": self.v, "b": self.b}


@dataclass(frozen=True)
class HatOrderParams:
    """Conjugate state driving the effective scalar problems."""

    q_hat: float
    m_hat: float
    chi_hat: float
    v_hat: float

    def validate(self) -> "HatOrderParams":
        from .errors import DivergenceError

        vals = (self.q_hat, self.m_hat, self.chi_hat, self.v_hat)
        if not all(math.isfinite(x) for x in vals):
            raise DivergenceError(f"non-finite conjugate parameters: {self}", state=self)
        if self.q_hat <= 0 or self.chi_hat < 0 or self.v_hat < 0:
            raise DivergenceError(f"conjugate parameters left their domain: {self}", state=self)
        return self

    def as_dict(self) -> dict:
        return {
            "q_hat": self.q_hat,
            "m_hat": self.m_hat,
            "chi_hat": self.chi_hat,
            "v_hat": self.v_hat,
        }


def make_subsampling_config(alpha_plus, alpha_minus, delta, lam, k=math.inf,
                            mu=None, bias=None) -> ProblemConfig:
    """Under-sampling without replacement.

    Negatives are kept iid with probability ``mu`` (default: the class-size
    ratio ``alpha_plus / alpha_minus``, which balances the resampled data in
    expectation).  The bias is fixed at zero by default because the
    resampled classes are balanced; pass ``bias=BiasMode.estimate()`` to
    estimate it instead.
    """
    _require(alpha_plus <= alpha_minus,
             f"alpha_plus ({alpha_plus!r}) must not exceed alpha_minus ({alpha_minus!r})")
    if mu is None:
        mu = alpha_plus / alpha_minus
    return ProblemConfig(
        alpha_plus=alpha_plus,
        alpha_minus=alpha_minus,
        delta=delta,
        lam=lam,
        coeff_plus=DeltaScheme(1.0),
        coeff_minus=BernoulliScheme(mu),
        bias=BiasMode.fixed(0.0) if bias is None else bias,
        ensemble_k=k,
    )


def make_bootstrap_config(alpha_plus, alpha_minus, delta, lam, k=math.inf,
                          mu=None, bias=None) -> ProblemConfig:
    """Under-sampling with replacement: Poisson(``mu``) duplication counts."""
    _require(mu is not None, "bootstrap scheme requires a resampling rate mu")
    return ProblemConfig(
        alpha_plus=alpha_plus,
        alpha_minus=alpha_minus,
        delta=delta,
        lam=lam,
        coeff_plus=DeltaScheme(1.0),
        coeff_minus=PoissonScheme(mu),
        bias=BiasMode.estimate() if bias is None else bias,
        ensemble_k=k,
    )


def make_weighting_config(alpha_plus, alpha_minus, delta, lam,
                          gamma_plus, gamma_minus, bias=None) -> ProblemConfig:
    """Deterministic class weights; the ensemble size is irrelevant (v = 0)."""
    _require(gamma_plus > 0 and gamma_minus > 0,
             f"weighting coefficients must be positive, got "
             f"({gamma_plus!r}, {gamma_minus!r})")
    return ProblemConfig(
        alpha_plus=alpha_plus,
        alpha_minus=alpha_minus,
        delta=delta,
        lam=lam,
        coeff_plus=DeltaScheme(gamma_plus),
        coeff_minus=DeltaScheme(gamma_minus),
        bias=BiasMode.estimate() if bias is None else bias,
        ensemble_k=math.inf,
    )
