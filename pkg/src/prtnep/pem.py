"""Three-point (2m+1) point estimate scheme for expectations of E[h(X)].

Each non-degenerate input gets two off-mean concentration points chosen so
that the weighted standardized locations reproduce its first four moments.
All m "third" points coincide at the joint mean and are evaluated once with
the pooled weight ``p0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .uncertainty import DegenerateDistribution, DiscreteDistribution


class MomentInfeasible(ValueError):
    """lambda_4 - 3 (lambda_3 / 2)^2 <= 0: no real concentration locations."""


class NegativeMeanWeight(UserWarning):
    pass


@dataclass(frozen=True)
class Concentration:
    xi1: float
    xi2: float
    p1: float
    p2: float
    p3: float
    mean: float
    std: float

    xi3 = 0.0

    @property
    def x1(self) -> float:
        return self.mean + self.xi1 * self.std

    @property
    def x2(self) -> float:
        return self.mean + self.xi2 * self.std

    @property
    def x3(self) -> float:
        return self.mean

    def moment_residuals(self, skew: float, kurt: float) -> np.ndarray:
        """Residuals of the four standardized moment-matching identities."""
        p, xi = np.array([self.p1, self.p2]), np.array([self.xi1, self.xi2])
        return np.array([
            p @ xi,
            p @ xi**2 - 1.0,
            p @ xi**3 - skew,
            p @ xi**4 - kurt,
        ])


def build_concentration(dist: DiscreteDistribution, m: int = 1) -> Concentration:
    if m < 1:
        raise ValueError("m must be at least 1")
    if dist.deterministic:
        raise DegenerateDistribution("zero-variance input cannot be a point-estimate variable")
    skew, kurt = dist.skewness, dist.kurtosis
    disc = kurt - 3.0 * (skew / 2.0) ** 2
    if disc <= 0:
        raise MomentInfeasible(f"kurtosis {kurt:.6g} too small for skewness {skew:.6g}")
    root = math.sqrt(disc)
    xi2 = skew / 2.0 + root
    xi1 = skew / 2.0 - root
    p1 = 1.0 / (xi1 * (xi1 - xi2))
    p2 = -1.0 / (xi2 * (xi1 - xi2))
    # single variable: p3 closes the unit total; m variables share 1/m each
    p3 = (1.0 if m == 1 else 1.0 / m) - p1 - p2
    return Concentration(xi1, xi2, p1, p2, p3, dist.mean, dist.std)


@dataclass(frozen=True)
class EvalPoint:
    weight: float
    values: np.ndarray
    variable: int | None  # None for the shared mean point
    location: int  # 1 or 2 for off-mean points, 3 for the mean point


@dataclass(frozen=True)
class PEMScheme:
    """Concentrations for the random inputs plus pinned deterministic ones."""

    concentrations: tuple[Concentration, ...]
    active: tuple[int, ...]  # input index of each concentration
    means: np.ndarray  # value of every input at the mean point
    p0: float
    warnings: tuple[str, ...] = field(default=())

    @property
    def m(self) -> int:
        return len(self.concentrations)

    @property
    def n_points(self) -> int:
        return 2 * self.m + 1

    def points(self) -> Iterator[EvalPoint]:
        """Mean point first, then both locations of each variable in order."""
        yield EvalPoint(self.p0, self.means.copy(), None, 3)
        for b, (idx, c) in enumerate(zip(self.active, self.concentrations)):
            for loc, (x, w) in enumerate(((c.x1, c.p1), (c.x2, c.p2)), start=1):
                values = self.means.copy()
                values[idx] = x
                yield EvalPoint(w, values, b, loc)

    @property
    def weights(self) -> np.ndarray:
        return np.array([pt.weight for pt in self.points()])

    @property
    def total_weight(self) -> float:
        return math.fsum(self.weights)


def build_scheme(dists: Sequence[DiscreteDistribution]) -> PEMScheme:
    """Scheme over ``dists``; zero-variance inputs are pinned, not counted in m."""
    means = np.array([d.mean for d in dists], dtype=float)
    active = tuple(i for i, d in enumerate(dists) if not d.deterministic)
    m = len(active)
    concs = tuple(build_concentration(dists[i], m) for i in active)
    p0 = math.fsum(c.p3 for c in concs) if m else 1.0
    notes = []
    # two-point inputs put p3 at zero up to rounding
    if p0 < -1e-12:
        notes.append(f"negative mean-point weight p0={p0:.6g}")
        warnings.warn(notes[-1], NegativeMeanWeight, stacklevel=2)
    return PEMScheme(concs, active, means, p0, tuple(notes))


@dataclass(frozen=True)
class ProbabilisticResult:
    """Outcome of a point-estimate expectation.

    ``expected`` of a truncated run is only a partial sum; ``final`` refuses
    to hand it out.
    """

    expected: float
    completed: bool
    evaluations: int
    truncated_at: tuple[int | None, int] | None = None
    partial_weight: float = 0.0
    abs_weighted: float = 0.0  # sum |w| * h over the evaluated points
    values: tuple[float, ...] = ()

    @property
    def final(self) -> float:
        if not self.completed:
            raise RuntimeError("truncated point-estimate run has no final expectation")
        return self.expected


def estimate_expectation(
    scheme: PEMScheme,
    evaluator: Callable[[np.ndarray], float],
    stop_when: Callable[[float], bool] | None = None,
) -> ProbabilisticResult:
    """Weighted sum of ``evaluator`` over the 2m+1 points.

    With ``stop_when`` given, evaluation halts at the first point whose value
    satisfies it; ``partial_weight`` then holds the share of absolute weight
    not yet evaluated.
    """
    pts = list(scheme.points())
    abs_total = math.fsum(abs(p.weight) for p in pts) or 1.0
    terms, abs_terms, values = [], [], []
    done_abs = 0.0
    for n, pt in enumerate(pts, start=1):
        v = float(evaluator(pt.values))
        values.append(v)
        terms.append(pt.weight * v)
        abs_terms.append(abs(pt.weight) * v)
        done_abs += abs(pt.weight)
        if stop_when is not None and stop_when(v) and n < len(pts):
            return ProbabilisticResult(
                math.fsum(terms),
                False,
                n,
                (pt.variable, pt.location),
                max(0.0, 1.0 - done_abs / abs_total),
                math.fsum(abs_terms),
                tuple(values),
            )
    return ProbabilisticResult(math.fsum(terms), True, len(pts), None, 0.0, math.fsum(abs_terms), tuple(values))


@dataclass(frozen=True)
class MCSEstimate:
    mean: float
    std_error: float
    n_samples: int


def sample_joint(dists: Sequence[DiscreteDistribution], n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Independent draws, one column per input."""
    cols = [rng.choice(d.support, size=n_samples, p=d.probs) for d in dists]
    return np.column_stack(cols) if cols else np.empty((n_samples, 0))


def mcs_expectation(
    dists: Sequence[DiscreteDistribution],
    evaluator: Callable[[np.ndarray], float],
    n_samples: int = 100_000,
    seed: int = 0,
) -> MCSEstimate:
    if n_samples < 100:
        raise ValueError("use at least 100 samples")
    rng = np.random.default_rng(seed)
    draws = sample_joint(dists, n_samples, rng)
    vals = np.array([evaluator(row) for row in draws], dtype=float)
    se = float(vals.std(ddof=1) / math.sqrt(n_samples))
    return MCSEstimate(float(vals.mean()), se, n_samples)
