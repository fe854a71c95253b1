"""Two-stage planning: a crisp solve at mean conditions, then a probabilistic
solve seeded with the crisp plan.

The probabilistic fitness runs three cheap gates (corridor count, line count,
cost window) before any power flow, then a point-estimate probabilistic power
flow per contingency that stops at the first infeasible point.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import mabc
from .constraints import GAMMA_EQ, evaluate_limits, penalty
from .network import (
    BASE_CASE,
    Contingency,
    ExpandedNetwork,
    ExpansionPlan,
    NetworkCase,
    apply_plan,
    enumerate_contingencies,
    plan_cost,
)
from .pem import NegativeMeanWeight, PEMScheme, build_scheme, estimate_expectation, sample_joint
from .powerflow import branch_flows, solve_operating_point
from .uncertainty import (
    DiscreteDistribution,
    LoadModel,
    OutageModel,
    WindModel,
    bernoulli_outage,
    discretize_normal,
    wind_power_distribution,
)

MODELS = ("ac", "dc")
SECURITY = ("none", "for", "n-1")


class StudyError(RuntimeError):
    """The study could not produce a feasible plan."""


@dataclass(frozen=True)
class StudySpec:
    model: str = "ac"
    security: str = "none"
    wind: bool = True
    load: bool = True
    outages: bool = True  # line availability variables, FOR studies only

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        if self.security not in SECURITY:
            raise ValueError(f"security must be one of {SECURITY}")

    @property
    def line_variables(self) -> bool:
        return self.security == "for" and self.outages

    @property
    def label(self) -> str:
        return f"{self.model}/{self.security}"


@dataclass(frozen=True)
class GateConfig:
    corridor_lo: float = 0.9
    corridor_hi: float = 1.3
    line_lo: float = 0.7
    line_hi: float = 2.0
    cost_hi_factor: float = 2.0
    gate_penalty_base: float = 1e9
    enabled: bool = True

    def __post_init__(self):
        if not (self.corridor_lo < self.corridor_hi and self.line_lo < self.line_hi):
            raise ValueError("gate lower fractions must be below upper fractions")
        if self.cost_hi_factor < 1 or self.gate_penalty_base <= 0:
            raise ValueError("cost_hi_factor >= 1 and a positive gate penalty are required")


@dataclass(frozen=True)
class GateResult:
    gate: str
    passed: bool
    value: float
    lo: float
    hi: float
    penalty: float = 0.0


def _gate(name: str, value: float, lo: float, hi: float, base: float) -> GateResult:
    if lo <= value <= hi:
        return GateResult(name, True, value, lo, hi)
    # rejected candidates further from the window rank worse
    dist = (lo - value) / max(lo, 1.0) if value < lo else (value - hi) / max(hi, 1.0)
    return GateResult(name, False, value, lo, hi, base * (2.0 + dist))


def corridor_gate(plan: ExpansionPlan, crisp_plan: ExpansionPlan, gates: GateConfig) -> GateResult:
    n = crisp_plan.corridors_used
    if n < 1:
        raise ValueError("crisp plan uses no corridor")
    return _gate("corridor", plan.corridors_used, math.floor(gates.corridor_lo * n),
                 math.ceil(gates.corridor_hi * n), gates.gate_penalty_base)


def line_gate(plan: ExpansionPlan, crisp_plan: ExpansionPlan, gates: GateConfig) -> GateResult:
    t = crisp_plan.total_lines
    if t < 1:
        raise ValueError("crisp plan adds no line")
    return _gate("line", plan.total_lines, math.floor(gates.line_lo * t), math.ceil(gates.line_hi * t),
                 gates.gate_penalty_base)


def cost_gate(cost: float, v_cr: float, gates: GateConfig, v_ulim: float | None = None) -> GateResult:
    if v_cr <= 0:
        raise ValueError("v_cr must be positive")
    hi = gates.cost_hi_factor * v_cr if v_ulim is None else v_ulim
    return _gate("cost", cost, v_cr, hi, gates.gate_penalty_base)


# -- uncertain inputs -------------------------------------------------------

@dataclass(frozen=True)
class Variable:
    kind: str  # "load", "wind" or "line"
    index: int  # bus index, generator index or corridor index
    dist: DiscreteDistribution


def input_distributions(case: NetworkCase, spec: StudySpec) -> tuple[list[Variable], list[Variable]]:
    """Load and wind variables (plan independent) in bus / generator order."""
    loads, winds = [], []
    if spec.load:
        for i, b in enumerate(case.buses):
            pct = case.load_sigma_pct.get(b.id, 0.0)
            if b.p_demand > 0 and pct > 0:
                loads.append(Variable("load", i, discretize_normal(LoadModel(b.p_demand, pct), case.n_samples)))
    gen_pos = {g.id: k for k, g in enumerate(case.generators)}
    for w in case.wind:
        model = WindModel(w.alpha, w.beta, w.u_ci, w.u_rt, w.u_co, w.p_rt)
        dist = wind_power_distribution(model, case.n_samples)
        if not spec.wind:
            dist = DiscreteDistribution.point(dist.mean)
        winds.append(Variable("wind", gen_pos[w.generator], dist))
    return loads, winds


def line_variables(case: NetworkCase, circuits: np.ndarray) -> list[Variable]:
    out = []
    for l, c in enumerate(case.corridors):
        if circuits[l] >= 1 and 0.0 < c.for_rate < 1.0:
            out.append(Variable("line", l, bernoulli_outage(OutageModel(c.for_rate))))
    return out


# -- counters and reports ---------------------------------------------------

@dataclass
class Counters:
    pf_calls: int = 0
    prob_started: int = 0
    prob_completed: int = 0
    crisp_evals: int = 0
    gate_rejections: dict = field(default_factory=lambda: {"corridor": 0, "line": 0, "cost": 0})

    def merge(self, other: "Counters") -> None:
        self.pf_calls += other.pf_calls
        self.prob_started += other.prob_started
        self.prob_completed += other.prob_completed
        self.crisp_evals += other.crisp_evals
        for k, v in other.gate_rejections.items():
            self.gate_rejections[k] = self.gate_rejections.get(k, 0) + v


@dataclass(frozen=True)
class Evaluation:
    plan: ExpansionPlan
    cost: float
    v_aug: float
    expected_penalty: float
    feasible: bool
    completed: bool
    contingencies_total: int
    contingencies_started: int
    truncated_at: tuple | None = None  # (contingency k, variable, location)
    gate: GateResult | None = None
    pf_calls: int = 0


@dataclass
class PlanReport:
    stage: str
    study: StudySpec
    plan: ExpansionPlan | None
    labels: dict
    v_cr: float | None
    v_pr: float | None
    v_aug: float | None
    expected_penalty: float | None
    feasible: bool
    new_line_count: int
    counters: Counters
    trials: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    elapsed: float = 0.0
    best_infeasible: dict | None = None
    verification: dict | None = None

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "study": asdict(self.study),
            "plan": None if self.plan is None else list(self.plan.additions),
            "labels": self.labels,
            "v_cr": self.v_cr,
            "v_pr": self.v_pr,
            "v_aug": self.v_aug,
            "expected_penalty": self.expected_penalty,
            "feasible": self.feasible,
            "new_line_count": self.new_line_count,
            "pf_calls": self.counters.pf_calls,
            "prob_evals": {"started": self.counters.prob_started, "completed": self.counters.prob_completed},
            "crisp_evals": self.counters.crisp_evals,
            "gate_rejections": dict(self.counters.gate_rejections),
            "trials": self.trials,
            "best_infeasible": self.best_infeasible,
            "verification": self.verification,
        }


# -- point evaluation -------------------------------------------------------

class StudyEvaluator:
    """Deterministic and probabilistic evaluation of plans for one study.

    Keeps the discretized inputs, PEM schemes and PF call counters.
    """

    def __init__(self, case: NetworkCase, spec: StudySpec):
        self.case = case
        self.spec = spec
        self.counters = Counters()
        self.loads, winds = input_distributions(case, spec)
        self.winds = [v for v in winds if not v.dist.deterministic]
        self._p_mean = np.array([b.p_demand for b in case.buses], dtype=float)
        self._q_mean = np.array([b.q_demand for b in case.buses], dtype=float)
        gen_pos = {g.id: k for k, g in enumerate(case.generators)}
        self._wind_pos = np.array([gen_pos[w.generator] for w in case.wind], dtype=int)
        self._wind_cap = np.array([w.p_rt for w in case.wind], dtype=float)
        self._wind_mean = np.array([v.dist.mean for v in winds], dtype=float)
        self._schemes: dict[tuple, PEMScheme] = {}

    # variables for one plan: loads, winds, then line availabilities
    def variables(self, plan: ExpansionPlan) -> list[Variable]:
        out = list(self.loads) + list(self.winds)
        if self.spec.line_variables:
            out += line_variables(self.case, self.case.n0 + plan.as_array())
        return out

    def scheme(self, variables: Sequence[Variable]) -> PEMScheme:
        key = tuple((v.kind, v.index) for v in variables)
        if key not in self._schemes:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", NegativeMeanWeight)
                self._schemes[key] = build_scheme([v.dist for v in variables])
        return self._schemes[key]

    def state(self, variables: Sequence[Variable], values: np.ndarray, base_circuits: np.ndarray):
        """Map a point vector to (p_load, q_load, wind, circuits, any_outage)."""
        p = self._p_mean.copy()
        wind = self._wind_mean.copy()
        circuits = base_circuits.astype(float).copy()
        outage = False
        pos = {int(g): j for j, g in enumerate(self._wind_pos)}
        for var, x in zip(variables, values):
            if var.kind == "load":
                p[var.index] = max(float(x), 0.0)
            elif var.kind == "wind":
                j = pos[var.index]
                wind[j] = min(max(float(x), 0.0), self._wind_cap[j])
            else:
                # concentration points of a 0/1 variable land on the support
                # up to round-off
                h = min(max(float(x), 0.0), 1.0)
                h = 0.0 if h < 1e-9 else 1.0 if h > 1.0 - 1e-9 else h
                circuits[var.index] += h - 1.0
                outage = outage or h < 0.5
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(self._p_mean > 0, p / self._p_mean, 1.0)
        return p, self._q_mean * ratio, wind, circuits, outage

    def point_penalty(self, network: ExpandedNetwork, p_load, q_load, wind) -> float:
        op = solve_operating_point(network, self.spec.model, p_load, q_load, wind if len(wind) else None)
        self.counters.pf_calls += op.pf_calls
        flows = branch_flows(op.solution, network) if op.solution.converged else None
        return penalty(evaluate_limits(op.solution, flows, network), GAMMA_EQ)

    def contingencies(self, plan: ExpansionPlan) -> list[Contingency]:
        if self.spec.security == "n-1":
            return enumerate_contingencies(self.case, plan)
        return [BASE_CASE]

    # -- crisp
    def crisp(self, plan: ExpansionPlan) -> Evaluation:
        """Deterministic evaluation at mean loads and mean wind."""
        self.counters.crisp_evals += 1
        cost = plan_cost(plan, self.case)
        calls0 = self.counters.pf_calls
        conts = self.contingencies(plan)
        pen = 0.0
        for cont in conts:
            net = apply_plan(self.case, plan, cont)
            pen += self.point_penalty(net, self._p_mean, self._q_mean, self._wind_mean)
        return Evaluation(plan, cost, cost + pen, pen, pen == 0.0, True, len(conts), len(conts),
                          pf_calls=self.counters.pf_calls - calls0)

    # -- probabilistic
    def probabilistic(self, plan: ExpansionPlan, truncate: bool = True, penalty_base: float = 1e9) -> Evaluation:
        """Expected penalty over all contingencies via the 2m+1 scheme.

        The expectation is accumulated with absolute point weights so that a
        negative mean-point weight cannot cancel a violation.  With
        ``truncate`` the first infeasible point stops the whole evaluation and
        the unevaluated share is charged at ``penalty_base``.
        """
        cost = plan_cost(plan, self.case)
        calls0 = self.counters.pf_calls
        conts = self.contingencies(plan)
        variables = self.variables(plan)
        scheme = self.scheme(variables)
        self.counters.prob_started += 1
        acc = 0.0
        for n, cont in enumerate(conts):
            net0 = apply_plan(self.case, plan, cont)

            def h(values, net0=net0):
                p, q, w, circ, out = self.state(variables, values, net0.circuits)
                net = ExpandedNetwork(self.case, circ, cont, net0.outage or out)
                return self.point_penalty(net, p, q, w)

            res = estimate_expectation(scheme, h, (lambda v: v > 0) if truncate else None)
            acc += res.abs_weighted
            stop = truncate and (not res.completed or res.abs_weighted > 0)
            if stop:
                remaining = (len(conts) - n - 1) / len(conts)
                pen = penalty_base * (res.partial_weight + remaining) + acc
                where = (cont.k,) + (res.truncated_at or (None, None))
                return Evaluation(plan, cost, cost + pen, acc, False, False, len(conts), n + 1, where,
                                  pf_calls=self.counters.pf_calls - calls0)
        self.counters.prob_completed += 1
        return Evaluation(plan, cost, cost + acc, acc, acc == 0.0, True, len(conts), len(conts),
                          pf_calls=self.counters.pf_calls - calls0)


@dataclass(frozen=True)
class CrispContext:
    plan: ExpansionPlan
    v_cr: float


def probabilistic_evaluate(
    plan: ExpansionPlan,
    case: NetworkCase,
    spec: StudySpec,
    crisp: CrispContext | None = None,
    truncate: bool = False,
    evaluator: StudyEvaluator | None = None,
) -> Evaluation:
    """v_Aug = cost + E(F_pen) for one plan (no gates)."""
    ev = evaluator or StudyEvaluator(case, spec)
    return ev.probabilistic(plan, truncate=truncate)


# -- stages -----------------------------------------------------------------

def _pick(evals: list[Evaluation]) -> Evaluation | None:
    best = None
    for e in evals:
        if best is None or (e.cost, e.plan.additions) < (best.cost, best.plan.additions):
            best = e
    return best


def _labels(case: NetworkCase, plan: ExpansionPlan | None) -> dict:
    return {} if plan is None else plan.describe(case)


def solve_crisp(case: NetworkCase, spec: StudySpec, config: mabc.MABCConfig,
                log: Callable[[str], None] | None = None) -> PlanReport:
    """Stage 1: best feasible plan at mean conditions over ``config.trials`` restarts.

    The colony starts around the existing network (no additions); uniform
    random starts average about half of every addition bound and rarely find
    cheap plans.
    """
    t0 = time.perf_counter()
    evaluator = StudyEvaluator(case, spec)
    trials, traces, feasible_all, infeasible_best = [], [], [], None
    for t, seed in enumerate(config.trial_seeds()):
        found: list[Evaluation] = []

        def fitness(plan: ExpansionPlan) -> float:
            nonlocal infeasible_best
            e = evaluator.crisp(plan)
            if e.feasible:
                found.append(e)
            elif infeasible_best is None or e.v_aug < infeasible_best.v_aug:
                infeasible_best = e
            return e.v_aug

        res = mabc.run(config, case.n_bar, fitness, ExpansionPlan.zeros(case.n_corridors), seed)
        best = _pick(found)
        if best is not None:
            feasible_all.append(best)
        trials.append({"trial": t, "seed": seed, "best_cost": None if best is None else best.cost,
                       "evaluations": res.evaluations})
        traces.append(res.trace_csv())
        if log:
            log(f"crisp trial {t}: best feasible cost {trials[-1]['best_cost']}")
    best = _pick(feasible_all)
    rep = PlanReport("crisp", spec, best.plan if best else None, _labels(case, best.plan if best else None),
                     best.cost if best else None, None, best.v_aug if best else None,
                     0.0 if best else None, best is not None, best.plan.total_lines if best else 0,
                     evaluator.counters, trials, traces, time.perf_counter() - t0)
    if best is None and infeasible_best is not None:
        rep.best_infeasible = {"plan": list(infeasible_best.plan.additions), "v_aug": infeasible_best.v_aug}
    return rep


class ProbabilisticFitness:
    """Gates, then truncated PEM evaluation; tracks v_ulim and best feasible."""

    def __init__(self, evaluator: StudyEvaluator, crisp: CrispContext, gates: GateConfig):
        self.ev = evaluator
        self.crisp = crisp
        self.gates = gates
        self.v_ulim = gates.cost_hi_factor * crisp.v_cr
        self.feasible: list[Evaluation] = []
        self.best_infeasible: Evaluation | None = None

    def evaluate(self, plan: ExpansionPlan) -> Evaluation:
        cost = plan_cost(plan, self.ev.case)
        if self.gates.enabled:
            for g in (corridor_gate(plan, self.crisp.plan, self.gates),
                      line_gate(plan, self.crisp.plan, self.gates),
                      cost_gate(cost, self.crisp.v_cr, self.gates, self.v_ulim)):
                if not g.passed:
                    self.ev.counters.gate_rejections[g.gate] += 1
                    return Evaluation(plan, cost, cost + g.penalty, math.nan, False, False, 0, 0, gate=g)
        e = self.ev.probabilistic(plan, truncate=self.gates.enabled, penalty_base=self.gates.gate_penalty_base)
        if e.feasible:
            self.feasible.append(e)
            if self.gates.enabled:
                self.v_ulim = max(min(self.v_ulim, e.cost), self.crisp.v_cr)
        elif self.best_infeasible is None or e.v_aug < self.best_infeasible.v_aug:
            self.best_infeasible = e
        return e

    def __call__(self, plan: ExpansionPlan) -> float:
        return self.evaluate(plan).v_aug


def solve_probabilistic(
    case: NetworkCase,
    spec: StudySpec,
    crisp: CrispContext,
    config: mabc.MABCConfig,
    gates: GateConfig = GateConfig(),
    log: Callable[[str], None] | None = None,
) -> PlanReport:
    """Stage 2: MABC seeded with the crisp plan, best feasible over all trials."""
    t0 = time.perf_counter()
    totals = Counters()
    trials, traces, winners, infeasible = [], [], [], []
    for t, seed in enumerate(config.trial_seeds()):
        evaluator = StudyEvaluator(case, spec)
        fit = ProbabilisticFitness(evaluator, crisp, gates)
        res = mabc.run(config, case.n_bar, fit, crisp.plan, seed)
        best = _pick(fit.feasible)
        if best is not None:
            winners.append(best)
        if fit.best_infeasible is not None:
            infeasible.append(fit.best_infeasible)
        totals.merge(evaluator.counters)
        trials.append({"trial": t, "seed": seed, "best_cost": None if best is None else best.cost,
                       "evaluations": res.evaluations, "pf_calls": evaluator.counters.pf_calls})
        traces.append(res.trace_csv())
        if log:
            log(f"probabilistic trial {t}: best feasible cost {trials[-1]['best_cost']}, "
                f"pf calls {evaluator.counters.pf_calls}")
    best = _pick(winners)
    rep = PlanReport("full", spec, best.plan if best else None, _labels(case, best.plan if best else None),
                     crisp.v_cr, best.cost if best else None, best.v_aug if best else None,
                     best.expected_penalty if best else None, best is not None,
                     best.plan.total_lines if best else 0, totals, trials, traces, time.perf_counter() - t0)
    if best is None and infeasible:
        worst = min(infeasible, key=lambda e: (e.v_aug, e.plan.additions))
        rep.best_infeasible = {"plan": list(worst.plan.additions), "v_aug": worst.v_aug}
    return rep


# -- Monte Carlo verification -----------------------------------------------

@dataclass(frozen=True)
class Verification:
    feasible: bool
    violation_fraction: float
    per_contingency: dict
    n_samples: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)


def verify_plan(plan: ExpansionPlan, case: NetworkCase, spec: StudySpec, n_mcs: int = 10_000,
                seed: int = 0) -> Verification:
    """Sample the joint inputs and count samples with any violation.

    The verdict is ``feasible`` when no sample violates; ``violation_fraction``
    counts a sample once even if several contingencies fail in it.
    """
    ev = StudyEvaluator(case, spec)
    variables = ev.variables(plan)
    rng = np.random.default_rng(seed)
    dists = [v.dist for v in variables]
    if all(d.deterministic for d in dists):
        draws = np.array([[d.mean for d in dists]])
        weights = np.array([float(n_mcs)])
    else:
        draws, counts = np.unique(sample_joint(dists, n_mcs, rng), axis=0, return_counts=True)
        weights = counts.astype(float)
    if draws.shape[1] == 0:
        draws = np.zeros((1, 0))
        weights = np.array([float(n_mcs)])
    bad = np.zeros(len(draws), dtype=bool)
    per = {}
    for cont in ev.contingencies(plan):
        net0 = apply_plan(case, plan, cont)
        fails = np.zeros(len(draws), dtype=bool)
        for i, row in enumerate(draws):
            p, q, w, circ, out = ev.state(variables, row, net0.circuits)
            net = ExpandedNetwork(case, circ, cont, net0.outage or out)
            fails[i] = ev.point_penalty(net, p, q, w) > 0
        per[str(cont.k)] = float(weights[fails].sum() / weights.sum())
        bad |= fails
    frac = float(weights[bad].sum() / weights.sum())
    return Verification(frac == 0.0, frac, per, n_mcs, seed)
