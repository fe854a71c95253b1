import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prtnep.mabc import MABCConfig, initialize_population, neighbor_move, run
from prtnep.network import ExpansionPlan

COSTS = np.array([7.0, 4.0, 9.0, 3.0])
N_BAR = np.array([3, 3, 3, 3])


def toy_cost(plan: ExpansionPlan) -> float:
    """Linear cost plus a steep penalty on two coverage requirements."""
    n = plan.as_array()
    short = max(0, 6 - (2 * n[0] + n[1] + 3 * n[2])) + max(0, 4 - (n[1] + 2 * n[3] + n[0]))
    return float(COSTS @ n) + 1.0 + 1e3 * short**2


def brute_force():
    best = min(itertools.product(*[range(b + 1) for b in N_BAR]), key=lambda p: (toy_cost(ExpansionPlan(p)), p))
    return ExpansionPlan(best), toy_cost(ExpansionPlan(best))


def test_finds_brute_force_optimum_for_most_seeds():
    opt_plan, opt = brute_force()
    hits = sum(run(MABCConfig(iter=30), N_BAR, toy_cost, seed=s).best.v_aug == opt for s in range(10))
    assert hits >= 9


def two_corridor_cost(plan: ExpansionPlan) -> float:
    a, b = plan.additions
    # capacity 2a + 3b must reach 7
    short = max(0, 7 - 2 * a - 3 * b)
    return 5.0 * a + 8.0 * b + 1.0 + 1e3 * short**2


def test_two_corridor_toy_matches_enumeration():
    plans = [ExpansionPlan((a, b)) for a in range(4) for b in range(4)]
    opt = min(two_corridor_cost(p) for p in plans)
    n_bar = np.array([3, 3])
    hits = sum(run(MABCConfig(), n_bar, two_corridor_cost, seed=s).best.v_aug == opt for s in range(1, 11))
    assert hits >= 9


def test_same_seed_same_result():
    a = run(MABCConfig(seed=5), N_BAR, toy_cost)
    b = run(MABCConfig(seed=5), N_BAR, toy_cost)
    assert a.best.plan == b.best.plan
    assert a.trace_csv() == b.trace_csv()


def test_trace_is_monotone_and_memoized():
    calls = []

    def f(p):
        calls.append(p.additions)
        return toy_cost(p)

    res = run(MABCConfig(seed=1, iter=10), N_BAR, f)
    vals = [r.best_v_aug for r in res.trace]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert len(calls) == len(set(calls)) == res.evaluations


def test_seed_plan_is_kept_and_never_worsened():
    seed_plan = ExpansionPlan((3, 3, 3, 3))
    pop = initialize_population(seed_plan, MABCConfig(), N_BAR, np.random.default_rng(0))
    assert pop[0] == seed_plan
    assert all(np.all(np.abs(p.as_array() - 3) <= 2) for p in pop)
    res = run(MABCConfig(seed=2, iter=3), N_BAR, toy_cost, seed_plan=seed_plan)
    assert res.best.v_aug <= toy_cost(seed_plan)


def test_seed_plan_out_of_bounds():
    with pytest.raises(ValueError):
        initialize_population(ExpansionPlan((4, 0, 0, 0)), MABCConfig(), N_BAR, np.random.default_rng(0))


def test_trial_seeds_independent_and_stable():
    seeds = MABCConfig(seed=3, trials=20).trial_seeds()
    assert len(set(seeds)) == 20
    assert seeds == MABCConfig(seed=3, trials=20).trial_seeds()
    assert seeds[:5] == MABCConfig(seed=3, trials=5).trial_seeds()


def test_bad_fitness_rejected():
    with pytest.raises(ValueError):
        run(MABCConfig(iter=1), N_BAR, lambda p: 0.0)


@pytest.mark.parametrize("bad", [dict(cs_n=1), dict(psi=0), dict(lim=0), dict(iter=0), dict(w_g=-1.0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        MABCConfig(**bad)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(0, 3), min_size=4, max_size=4),
    st.lists(st.integers(0, 3), min_size=4, max_size=4),
    st.lists(st.integers(0, 3), min_size=4, max_size=4),
    st.integers(0, 2**32 - 1),
)
def test_neighbor_stays_in_bounds_and_changes_at_most_psi(src, partner, best, seed):
    cfg = MABCConfig(psi=2)
    new = neighbor_move(ExpansionPlan(tuple(src)), ExpansionPlan(tuple(partner)), ExpansionPlan(tuple(best)),
                        cfg, N_BAR, np.random.default_rng(seed))
    assert new.within(N_BAR)
    assert sum(a != b for a, b in zip(new.additions, src)) <= 2
