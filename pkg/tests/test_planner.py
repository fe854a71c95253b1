import math

import numpy as np
import pytest

from prtnep.mabc import MABCConfig
from prtnep.network import ExpansionPlan, plan_cost
from prtnep.planner import (
    CrispContext,
    GateConfig,
    ProbabilisticFitness,
    StudyEvaluator,
    StudySpec,
    corridor_gate,
    cost_gate,
    line_gate,
    probabilistic_evaluate,
    solve_crisp,
    verify_plan,
)

from conftest import GARVER_AC_CRISP_PLAN, GARVER_DC_FOR_PLAN, GARVER_AC_N1_PLAN

AC_N1 = StudySpec("ac", "n-1")
DC_FOR = StudySpec("dc", "for")


def plan_with(corridors, lines):
    """A 15-corridor plan using ``corridors`` corridors and ``lines`` circuits."""
    adds = [0] * 15
    for i in range(lines):
        adds[i % corridors] += 1
    return ExpansionPlan(tuple(adds))


def test_gate_windows():
    crisp = plan_with(3, 6)
    g = GateConfig()
    # corridors in [floor(2.7), ceil(3.9)] = [2, 4]
    assert [corridor_gate(plan_with(n, 6), crisp, g).passed for n in (1, 2, 4, 5)] == [False, True, True, False]
    # lines in [floor(4.2), ceil(12)] = [4, 12]
    assert [line_gate(plan_with(3, t), crisp, g).passed for t in (3, 4, 12, 13)] == [False, True, True, False]
    assert [cost_gate(c, 160.0, g).passed for c in (159.0, 160.0, 320.0, 321.0)] == [False, True, True, False]
    assert not cost_gate(300.0, 160.0, g, v_ulim=260.0).passed


def test_gate_penalty_ranks_by_distance():
    g = GateConfig()
    near, far = cost_gate(330.0, 160.0, g), cost_gate(500.0, 160.0, g)
    assert 2e9 < near.penalty < far.penalty
    assert cost_gate(200.0, 160.0, g).penalty == 0.0


def test_gate_config_validation():
    with pytest.raises(ValueError):
        GateConfig(corridor_lo=1.5)
    with pytest.raises(ValueError):
        GateConfig(cost_hi_factor=0.5)
    with pytest.raises(ValueError):
        corridor_gate(plan_with(1, 1), ExpansionPlan.zeros(15), GateConfig())


def test_study_spec_validation():
    with pytest.raises(ValueError):
        StudySpec("ac", "n-2")
    with pytest.raises(ValueError):
        StudySpec("hvdc", "none")
    assert StudySpec("dc", "for").line_variables
    assert not StudySpec("dc", "n-1").line_variables


def test_one_line_variable_per_populated_corridor(garver_dc):
    ev = StudyEvaluator(garver_dc, DC_FOR)
    plan = garver_dc.plan_from_labels(GARVER_DC_FOR_PLAN)
    lines = [v for v in ev.variables(plan) if v.kind == "line"]
    populated = np.flatnonzero(garver_dc.n0 + plan.as_array() >= 1)
    assert [v.index for v in lines] == list(populated)
    assert len(ev.variables(plan)) == 5 + 1 + len(populated)


def test_outage_point_removes_a_circuit(garver_dc):
    ev = StudyEvaluator(garver_dc, DC_FOR)
    plan = garver_dc.plan_from_labels(GARVER_DC_FOR_PLAN)
    variables = ev.variables(plan)
    base = garver_dc.n0 + plan.as_array()
    values = np.array([1.0 if v.kind == "line" else v.dist.mean for v in variables])
    k = next(i for i, v in enumerate(variables) if v.kind == "line")
    values[k] = 1e-13  # a concentration point just off zero
    _, _, _, circ, out = ev.state(variables, values, base)
    assert out and circ[variables[k].index] == base[variables[k].index] - 1
    values[k] = 1.0 - 1e-13
    _, _, _, circ, out = ev.state(variables, values, base)
    assert not out and np.array_equal(circ, base)


def test_reference_plans_have_zero_expected_penalty(garver_dc, garver_ac):
    e1 = probabilistic_evaluate(garver_dc.plan_from_labels(GARVER_DC_FOR_PLAN), garver_dc, DC_FOR)
    assert e1.completed and e1.expected_penalty == 0.0 and e1.cost == 220.0
    e2 = probabilistic_evaluate(garver_ac.plan_from_labels(GARVER_AC_N1_PLAN), garver_ac, AC_N1)
    assert e2.completed and e2.expected_penalty == 0.0 and e2.cost == 260.0


def test_published_crisp_plan_fails_under_fixed_dispatch(garver_ac):
    e = StudyEvaluator(garver_ac, StudySpec("ac", "n-1", wind=False, load=False)).crisp(
        garver_ac.plan_from_labels(GARVER_AC_CRISP_PLAN))
    assert e.cost == 160.0 and not e.feasible


def test_truncation_stops_at_first_failing_contingency(garver_ac):
    ev = StudyEvaluator(garver_ac, AC_N1)
    e = ev.probabilistic(ExpansionPlan.zeros(15), truncate=True)
    assert not e.completed and e.contingencies_started == 1
    assert e.truncated_at[0] == 0
    assert e.pf_calls == 1  # the mean point already fails
    assert e.v_aug > 1e9


def test_without_truncation_every_contingency_runs(garver_dc):
    spec = StudySpec("dc", "n-1")
    ev = StudyEvaluator(garver_dc, spec)
    plan = garver_dc.plan_from_labels(GARVER_AC_CRISP_PLAN)
    e = ev.probabilistic(plan, truncate=False)
    assert e.completed and e.contingencies_started == e.contingencies_total
    m = len(ev.variables(plan))
    assert e.pf_calls == e.contingencies_total * (2 * m + 1)


def test_deterministic_inputs_reduce_to_crisp(garver_dc):
    spec = StudySpec("dc", "none", wind=False, load=False)
    ev = StudyEvaluator(garver_dc, spec)
    plan = garver_dc.plan_from_labels({"2-6": 2, "3-5": 1})
    assert ev.probabilistic(plan, truncate=False).expected_penalty == pytest.approx(ev.crisp(plan).expected_penalty)


def test_cost_cap_tightens_to_best_feasible(garver_dc):
    ev = StudyEvaluator(garver_dc, DC_FOR)
    crisp = CrispContext(garver_dc.plan_from_labels({"2-6": 3, "3-5": 1, "4-6": 2}), 140.0)
    fit = ProbabilisticFitness(ev, crisp, GateConfig())
    assert fit.v_ulim == 280.0
    e = fit.evaluate(garver_dc.plan_from_labels(GARVER_DC_FOR_PLAN))
    assert e.feasible and fit.v_ulim == 220.0
    rejected = fit.evaluate(garver_dc.plan_from_labels({"2-6": 3, "3-5": 2, "4-6": 3, "2-3": 1}))
    assert rejected.gate is not None and rejected.gate.gate == "cost"
    assert ev.counters.gate_rejections["cost"] == 1


def test_verify_plan(garver_dc):
    plan = garver_dc.plan_from_labels(GARVER_DC_FOR_PLAN)
    v = verify_plan(plan, garver_dc, DC_FOR, n_mcs=400, seed=1)
    # the point scheme moves one input at a time; sampling also hits joint
    # tails (an outage with no wind and high load), which stay rare
    assert v.violation_fraction <= 0.01
    weak = verify_plan(garver_dc.plan_from_labels({"2-6": 2, "3-5": 1, "4-6": 2}), garver_dc, DC_FOR, 400, 1)
    assert not weak.feasible and 0 < weak.violation_fraction <= 1
    det = verify_plan(plan, garver_dc, StudySpec("dc", "none", wind=False, load=False), n_mcs=10)
    assert det.feasible and det.n_samples == 10


def test_solve_crisp_small_run(garver_dc):
    rep = solve_crisp(garver_dc, StudySpec("dc", "none", wind=False, load=False), MABCConfig(seed=0, iter=10))
    assert rep.feasible and rep.v_cr == plan_cost(rep.plan, garver_dc)
    assert rep.counters.crisp_evals == rep.trials[0]["evaluations"]
    assert math.isfinite(rep.v_aug)
