"""Modified artificial bee colony over integer expansion plans.

Moves combine the usual ABC difference term with an attraction toward the
best source found so far, weighted by ``w_g``.  Plans are rounded and clipped
to ``[0, n_bar]`` after every move, so every evaluated plan is in bounds.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .network import ExpansionPlan

ROULETTE_FLOOR = 1e-12


@dataclass(frozen=True)
class MABCConfig:
    cs_n: int = 20
    psi: int = 2
    lim: int = 6
    iter: int = 30
    w_g: float = 1.5
    seed: int = 0
    trials: int = 1
    perturb: int = 2  # max +/- step when seeding around a given plan

    def __post_init__(self):
        if self.cs_n < 2 or self.psi < 1 or self.lim < 1 or self.iter < 1 or self.trials < 1:
            raise ValueError("cs_n >= 2, psi >= 1, lim >= 1, iter >= 1 and trials >= 1 are required")
        if self.w_g < 0:
            raise ValueError("w_g must be non-negative")

    def trial_seeds(self) -> list[int]:
        """Independent, reproducible seeds for each restart."""
        children = np.random.SeedSequence(self.seed).spawn(self.trials)
        return [int(c.generate_state(1, dtype=np.uint32)[0]) for c in children]


@dataclass
class FoodSource:
    plan: ExpansionPlan
    v_aug: float
    trials: int = 0

    @property
    def fitness(self) -> float:
        return 1.0 / self.v_aug

    def better_than(self, other: "FoodSource") -> bool:
        if self.v_aug != other.v_aug:
            return self.v_aug < other.v_aug
        return self.plan.additions < other.plan.additions


@dataclass
class TraceRow:
    cycle: int
    best_v_aug: float
    evaluations: int


@dataclass
class RunResult:
    best: FoodSource
    trace: list[TraceRow] = field(default_factory=list)
    evaluations: int = 0
    population: list[FoodSource] = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "best_v_aug", "evaluations"])
        for r in self.trace:
            w.writerow([r.cycle, repr(r.best_v_aug), r.evaluations])
        return buf.getvalue()


def _random_plan(n_bar: np.ndarray, rng: np.random.Generator, around: ExpansionPlan | None, step: int) -> ExpansionPlan:
    if around is None:
        vals = rng.integers(0, n_bar + 1)
    else:
        vals = around.as_array() + rng.integers(-step, step + 1, size=len(n_bar))
    return ExpansionPlan.from_array(np.clip(vals, 0, n_bar))


def initialize_population(
    seed_plan: ExpansionPlan | None,
    config: MABCConfig,
    n_bar,
    rng: np.random.Generator,
) -> list[ExpansionPlan]:
    n_bar = np.asarray(n_bar, dtype=int)
    if seed_plan is not None and not seed_plan.within(n_bar):
        raise ValueError("seed plan violates the addition bounds")
    plans = [seed_plan] if seed_plan is not None else []
    while len(plans) < config.cs_n:
        plans.append(_random_plan(n_bar, rng, seed_plan, config.perturb))
    return plans


def neighbor_move(
    source: ExpansionPlan,
    partner: ExpansionPlan,
    best: ExpansionPlan,
    config: MABCConfig,
    n_bar,
    rng: np.random.Generator,
) -> ExpansionPlan:
    n_bar = np.asarray(n_bar, dtype=int)
    cur = source.as_array()
    new = cur.copy()
    k = min(config.psi, len(cur))
    idx = rng.choice(len(cur), size=k, replace=False)
    phi = rng.uniform(-1.0, 1.0, size=k)
    phi_g = rng.uniform(-1.0, 1.0, size=k)
    p, b = partner.as_array()[idx], best.as_array()[idx]
    step = cur[idx] + phi * (cur[idx] - p) + config.w_g * phi_g * (b - cur[idx])
    new[idx] = np.clip(np.rint(step).astype(int), 0, n_bar[idx])
    return ExpansionPlan.from_array(new)


def run(
    config: MABCConfig,
    n_bar,
    fitness_fn: Callable[[ExpansionPlan], float],
    seed_plan: ExpansionPlan | None = None,
    seed: int | None = None,
    on_cycle: Callable[[int, FoodSource], None] | None = None,
) -> RunResult:
    """One MABC trial.  ``fitness_fn`` maps a plan to its v_Aug (> 0).

    Evaluations are memoized for the duration of the run, so ``evaluations``
    counts distinct plans.
    """
    n_bar = np.asarray(n_bar, dtype=int)
    rng = np.random.default_rng(config.seed if seed is None else seed)
    cache: dict[tuple[int, ...], float] = {}

    def evaluate(plan: ExpansionPlan) -> FoodSource:
        key = plan.additions
        if key not in cache:
            v = float(fitness_fn(plan))
            if not v > 0 or not np.isfinite(v):
                raise ValueError(f"fitness_fn returned {v} for {plan}")
            cache[key] = v
        return FoodSource(plan, cache[key])

    pop = [evaluate(p) for p in initialize_population(seed_plan, config, n_bar, rng)]
    best = _best_of(pop)
    trace = [TraceRow(0, best.v_aug, len(cache))]

    def try_improve(i: int) -> None:
        nonlocal best
        others = [j for j in range(len(pop)) if j != i]
        partner = pop[int(rng.choice(others))]
        cand = evaluate(neighbor_move(pop[i].plan, partner.plan, best.plan, config, n_bar, rng))
        if cand.better_than(pop[i]):
            pop[i] = cand
        else:
            pop[i].trials += 1
        if pop[i].better_than(best):
            best = FoodSource(pop[i].plan, pop[i].v_aug)

    for cycle in range(1, config.iter + 1):
        for i in range(len(pop)):
            try_improve(i)
        fit = np.maximum(np.array([s.fitness for s in pop]), ROULETTE_FLOOR)
        prob = fit / fit.sum()
        for _ in range(config.cs_n):
            try_improve(int(rng.choice(len(pop), p=prob)))
        for i, s in enumerate(pop):
            if s.trials > config.lim and s.plan != best.plan:
                pop[i] = evaluate(_random_plan(n_bar, rng, seed_plan, config.perturb))
                if pop[i].better_than(best):
                    best = FoodSource(pop[i].plan, pop[i].v_aug)
        trace.append(TraceRow(cycle, best.v_aug, len(cache)))
        if on_cycle is not None:
            on_cycle(cycle, best)
    return RunResult(best, trace, len(cache), pop)


def _best_of(pop: list[FoodSource]) -> FoodSource:
    best = pop[0]
    for s in pop[1:]:
        if s.better_than(best):
            best = s
    return FoodSource(best.plan, best.v_aug)
