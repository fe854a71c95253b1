"""Input uncertainty models and their discrete representations.

Continuous inputs are discretized with an equiprobable inverse-CDF rule
(midpoints ``(i - 0.5) / n``), so moments are deterministic for a given
sample count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special, stats


class DegenerateDistribution(ValueError):
    """The distribution has zero spread; standardized moments are undefined."""


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    support: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if support.shape != probs.shape or support.ndim != 1 or support.size == 0:
            raise ValueError("support and probs must be equal-length 1-D arrays")
        if np.any(probs < 0):
            raise ValueError("negative probability")
        total = probs.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"probabilities sum to {total}, not 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs / total)
        mean = float(np.dot(self.probs, support))
        var = float(np.dot(self.probs, (support - mean) ** 2))
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", math.sqrt(max(var, 0.0)))

    @property
    def variance(self) -> float:
        return self.std**2

    @property
    def deterministic(self) -> bool:
        # relative threshold: a spread at round-off level is no spread
        return self.std <= 1e-12 * max(1.0, abs(self.mean))

    @property
    def cov(self) -> float:
        """Mean over standard deviation, the ratio used as nu_x."""
        if self.std == 0:
            return math.inf
        return self.mean / self.std

    @property
    def skewness(self) -> float:
        return central_moments(self, 3)[1]

    @property
    def kurtosis(self) -> float:
        return central_moments(self, 4)[1]

    @classmethod
    def point(cls, value: float) -> "DiscreteDistribution":
        return cls(np.array([value]), np.array([1.0]))


def central_moments(dist: DiscreteDistribution, t: int) -> tuple[float, float]:
    """Return the t-th central moment and its standardized ratio lambda_t."""
    m_t = float(np.dot(dist.probs, (dist.support - dist.mean) ** t))
    if t == 0:
        return m_t, m_t
    if dist.deterministic:
        raise DegenerateDistribution("standardized moment of a zero-variance distribution")
    return m_t, m_t / dist.std**t


def transform_distribution(dist: DiscreteDistribution, fn: Callable[[np.ndarray], np.ndarray]) -> DiscreteDistribution:
    return DiscreteDistribution(np.asarray(fn(dist.support), dtype=float), dist.probs)


# -- wind -------------------------------------------------------------------

@dataclass(frozen=True)
class WindModel:
    alpha: float  # scale, m/s
    beta: float  # shape
    u_ci: float
    u_rt: float
    u_co: float
    p_rt: float

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("Weibull scale and shape must be positive")
        if not self.u_ci < self.u_rt <= self.u_co:
            raise ValueError("turbine speeds must satisfy u_ci < u_rt <= u_co")
        if self.p_rt <= 0:
            raise ValueError("rated output must be positive")

    @property
    def mean_speed(self) -> float:
        return self.alpha * special.gamma(1 + 1 / self.beta)


def weibull_from_mean_std(mean: float, std: float) -> tuple[float, float]:
    """Scale and shape of the Weibull law with the given mean and SD."""
    if mean <= 0 or std <= 0:
        raise ValueError("mean and std must be positive")
    target = std / mean

    def cv(k):
        g1 = special.gamma(1 + 1 / k)
        g2 = special.gamma(1 + 2 / k)
        return math.sqrt(g2 - g1 * g1) / g1 - target

    shape = optimize.brentq(cv, 0.05, 100.0, xtol=1e-14)
    scale = mean / special.gamma(1 + 1 / shape)
    return scale, shape


def _midpoints(n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("need at least two samples")
    return (np.arange(n) + 0.5) / n


def discretize_weibull(model: WindModel, n_samples: int = 10_000) -> DiscreteDistribution:
    q = _midpoints(n_samples)
    u = model.alpha * (-np.log1p(-q)) ** (1.0 / model.beta)
    return DiscreteDistribution(u, np.full(n_samples, 1.0 / n_samples))


def wind_power(u, model: WindModel):
    """Turbine output (MW) for wind speed ``u``; accepts scalars or arrays."""
    u = np.asarray(u, dtype=float)
    ramp = model.p_rt * (u - model.u_ci) / (model.u_rt - model.u_ci)
    out = np.where(u < model.u_ci, 0.0, np.where(u < model.u_rt, ramp, model.p_rt))
    out = np.where(u > model.u_co, 0.0, out)
    return out if out.ndim else float(out)


def wind_power_distribution(model: WindModel, n_samples: int = 10_000) -> DiscreteDistribution:
    return transform_distribution(discretize_weibull(model, n_samples), lambda u: wind_power(u, model))


# -- load -------------------------------------------------------------------

@dataclass(frozen=True)
class LoadModel:
    mu: float
    sigma_pct: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mean load must be positive")
        if self.sigma_pct < 0:
            raise ValueError("sigma_pct must be non-negative")

    @property
    def sigma(self) -> float:
        return self.mu * self.sigma_pct / 100.0


def discretize_normal(model: LoadModel, n_samples: int = 10_000) -> DiscreteDistribution:
    if model.sigma == 0:
        return DiscreteDistribution.point(model.mu)
    values = stats.norm.ppf(_midpoints(n_samples), loc=model.mu, scale=model.sigma)
    return DiscreteDistribution(values, np.full(n_samples, 1.0 / n_samples))


# -- line availability ------------------------------------------------------

@dataclass(frozen=True)
class OutageModel:
    rho: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("forced outage rate must lie in [0, 1]")


def bernoulli_outage(model: OutageModel) -> DiscreteDistribution:
    """Availability H: 1 in service with probability 1 - rho, 0 on outage.

    At rho = 0 or 1 the result is a single point (``deterministic`` is True)
    and callers keep it out of the point-estimate variable set.
    """
    if model.rho == 0.0:
        return DiscreteDistribution.point(1.0)
    if model.rho == 1.0:
        return DiscreteDistribution.point(0.0)
    return DiscreteDistribution(np.array([0.0, 1.0]), np.array([model.rho, 1.0 - model.rho]))
