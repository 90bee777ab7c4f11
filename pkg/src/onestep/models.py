"""Statistical models used by the experiments.

* Cauchy location with known scale, optionally with a Laplace prior (MAP).
* Bivariate normal mean with known diagonal covariance.
* Bernoulli logistic matrix model with a nuclear-norm penalty.

All negative log-likelihoods drop additive constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit, logit

from .core import (
    CompositeObjective,
    ContractViolation,
    SmoothTerm,
    l1_term,
    nuclear_term,
)

__all__ = [
    "SampleBatch",
    "CauchyModel",
    "cauchy_sample",
    "cauchy_nll",
    "cauchy_map_objective",
    "cauchy_fisher",
    "BivariateNormalModel",
    "normal_sample",
    "normal_nll",
    "LogisticMatrixModel",
    "logistic_objective",
    "logistic_sample",
    "probability_matrix",
]


@dataclass(frozen=True)
class SampleBatch:
    observations: np.ndarray

    def __post_init__(self):
        if len(self.observations) < 1:
            raise ContractViolation("a batch needs at least one observation")

    @property
    def n(self) -> int:
        return len(self.observations)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# Cauchy


@dataclass(frozen=True)
class CauchyModel:
    location: float = 0.0
    scale: float = 1.0
    prior_gamma: Optional[float] = None

    def __post_init__(self):
        if not self.scale > 0:
            raise ContractViolation("Cauchy scale must be positive")
        if self.prior_gamma is not None and not self.prior_gamma > 0:
            raise ContractViolation("Laplace prior scale must be positive")


def cauchy_sample(model: CauchyModel, n: int, seed) -> SampleBatch:
    """Inverse-CDF draws ``location + scale * tan(pi (U - 1/2))``."""
    if n < 1:
        raise ContractViolation("n must be at least 1")
    u = _rng(seed).uniform(size=n)
    return SampleBatch(model.location + model.scale * np.tan(np.pi * (u - 0.5)))


def cauchy_nll(model: CauchyModel, batch: SampleBatch) -> SmoothTerm:
    """``(1/n) sum log(1 + ((x_i - theta) / scale)^2)`` with gradient and Hessian.

    The Hessian is indefinite away from the bulk of the data.
    """
    x = np.asarray(batch.observations, dtype=float)
    s2 = model.scale ** 2

    def value(theta):
        r = x - theta[0]
        return float(np.mean(np.log1p(r * r / s2)))

    def gradient(theta):
        r = x - theta[0]
        return np.array([np.mean(-2.0 * r / (s2 + r * r))])

    def hessian(theta):
        r2 = (x - theta[0]) ** 2
        return np.array([[np.mean(2.0 * (s2 - r2) / (s2 + r2) ** 2)]])

    return SmoothTerm(value, gradient, 1, hessian)


def cauchy_map_objective(model: CauchyModel, batch: SampleBatch) -> CompositeObjective:
    """Negative log-likelihood plus the Laplace prior penalty ``|theta| / (n gamma)``."""
    if model.prior_gamma is None:
        raise ContractViolation("MAP objective needs a prior scale; use cauchy_nll for the MLE")
    weight = 1.0 / (batch.n * model.prior_gamma)
    return CompositeObjective(cauchy_nll(model, batch), l1_term(1, weight))


def cauchy_fisher(model: CauchyModel) -> float:
    """Fisher information of the location parameter, ``1 / (2 scale^2)``."""
    return 0.5 / model.scale ** 2


# ---------------------------------------------------------------------------
# bivariate normal


@dataclass(frozen=True)
class BivariateNormalModel:
    mean: tuple = (0.0, 0.0)
    sigma1: float = 10.0
    sigma2: float = 1.0

    def __post_init__(self):
        if len(self.mean) != 2:
            raise ContractViolation("mean must have two entries")
        if not (self.sigma1 > self.sigma2 > 0):
            raise ContractViolation("need sigma1 > sigma2 > 0")

    @property
    def precision(self) -> np.ndarray:
        return np.array([self.sigma1 ** -2, self.sigma2 ** -2])


def normal_sample(model: BivariateNormalModel, n: int, seed) -> SampleBatch:
    if n < 1:
        raise ContractViolation("n must be at least 1")
    z = _rng(seed).standard_normal((n, 2))
    return SampleBatch(np.asarray(model.mean) + z * np.array([model.sigma1, model.sigma2]))


def normal_nll(model: BivariateNormalModel, batch: SampleBatch) -> SmoothTerm:
    """``(1/n) sum 1/2 (theta - x_i)^T Sigma^{-1} (theta - x_i)``.

    Evaluated through the sample mean: the value equals
    ``1/2 (theta - xbar)^T P (theta - xbar)`` plus the within-sample spread.
    """
    x = np.asarray(batch.observations, dtype=float).reshape(-1, 2)
    prec = model.precision
    xbar = x.mean(axis=0)
    spread = 0.5 * float(np.mean(((x - xbar) ** 2) @ prec))

    def value(theta):
        d = theta - xbar
        return 0.5 * float(d @ (prec * d)) + spread

    return SmoothTerm(value, lambda theta: prec * (theta - xbar), 2, lambda theta: np.diag(prec))


# ---------------------------------------------------------------------------
# logistic matrix


@dataclass(frozen=True)
class LogisticMatrixModel:
    """Per-cell success frequencies over ``trials_per_cell`` Bernoulli trials."""

    freq: np.ndarray
    trials_per_cell: int = 49
    penalty: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.freq, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ContractViolation("frequency matrix must be square")
        if np.any(f < 0) or np.any(f > 1):
            raise ContractViolation("frequencies must lie in [0, 1]")
        counts = f * self.trials_per_cell
        if np.max(np.abs(counts - np.round(counts))) > 1e-9:
            raise ContractViolation("frequencies must be multiples of 1/trials_per_cell")
        if self.penalty < 0:
            raise ContractViolation("penalty must be nonnegative")
        object.__setattr__(self, "freq", f)

    @property
    def N(self) -> int:
        return self.freq.shape[0]

    @property
    def effective_n(self) -> int:
        return self.N * self.N * self.trials_per_cell

    def with_penalty(self, penalty: float) -> "LogisticMatrixModel":
        return LogisticMatrixModel(self.freq, self.trials_per_cell, penalty)


def logistic_objective(model: LogisticMatrixModel) -> CompositeObjective:
    """``sum_ij log(1 + exp(theta_ij)) - xbar_ij theta_ij + penalty ||theta||_*``.

    The parameter is the row-major flattening of the ``N x N`` matrix; the
    Hessian of the smooth part is diagonal and returned as a vector.
    """
    xbar = model.freq.reshape(-1)

    def value(theta):
        return float(np.sum(np.logaddexp(0.0, theta) - xbar * theta))

    def gradient(theta):
        return expit(theta) - xbar

    def hessian(theta):
        p = expit(theta)
        return p * (1.0 - p)

    smooth = SmoothTerm(value, gradient, xbar.size, hessian)
    return CompositeObjective(smooth, nuclear_term((model.N, model.N), model.penalty))


def probability_matrix(theta, shape=None) -> np.ndarray:
    """Elementwise logistic transform ``exp(theta) / (1 + exp(theta))``."""
    theta = np.asarray(theta, dtype=float)
    if shape is not None:
        theta = theta.reshape(shape)
    return expit(theta)


def logistic_sample(theta_true, trials_per_cell: int, seed, penalty: float = 0.0
                    ) -> LogisticMatrixModel:
    """Draw binomial frequencies for each cell of ``expit(theta_true)``."""
    p = expit(np.asarray(theta_true, dtype=float))
    k = _rng(seed).binomial(trials_per_cell, p)
    return LogisticMatrixModel(k / trials_per_cell, trials_per_cell, penalty)


def logit_matrix(p) -> np.ndarray:
    return logit(np.asarray(p, dtype=float))
