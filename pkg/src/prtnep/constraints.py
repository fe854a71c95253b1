"""Limit checks, quadratic penalties, augmented cost and fitness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import CIRCUIT_EPS, ExpandedNetwork
from .powerflow import BranchFlowSet, PFSolution

GAMMA_EQ = 1e8
GAMMA_VOLTAGE = 1e6
GAMMA_FLOW = 1e4
GAMMA_GEN = 1e4
# violations smaller than this (in the term's own units) count as satisfied
FEAS_TOL = 1e-6


@dataclass(frozen=True)
class PenaltyTerm:
    kind: str  # "voltage", "flow_from", "flow_to", "p_gen", "q_gen"
    element: int
    value: float
    lo: float
    hi: float
    gamma: float

    @property
    def violation(self) -> float:
        if self.value < self.lo - FEAS_TOL:
            return self.lo - self.value
        if self.value > self.hi + FEAS_TOL:
            return self.value - self.hi
        return 0.0

    @property
    def tau(self) -> float:
        return self.gamma * self.violation**2


def quadratic_penalty(value: float, lo: float, hi: float, gamma: float) -> float:
    """Zero inside [|lo|, |hi|], gamma times the squared excess outside."""
    a, lo, hi = abs(value), abs(lo), abs(hi)
    if a < lo:
        return gamma * (lo - a) ** 2
    if a > hi:
        return gamma * (a - hi) ** 2
    return 0.0


def _tau(value: np.ndarray, lo: np.ndarray, hi: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    under = np.where(value < lo - FEAS_TOL, lo - value, 0.0)
    over = np.where(value > hi + FEAS_TOL, value - hi, 0.0)
    return gamma * (under + over) ** 2


@dataclass(frozen=True, eq=False)
class ViolationReport:
    """Checked quantities for one solved state, stored column-wise."""

    converged: bool
    k: int = 0
    kinds: tuple[str, ...] = ()
    elements: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))
    lo: np.ndarray = field(default_factory=lambda: np.empty(0))
    hi: np.ndarray = field(default_factory=lambda: np.empty(0))
    gamma: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def taus(self) -> np.ndarray:
        return _tau(self.values, self.lo, self.hi, self.gamma)

    @property
    def terms(self) -> tuple[PenaltyTerm, ...]:
        return tuple(
            PenaltyTerm(kind, int(e), float(v), float(a), float(b), float(g))
            for kind, e, v, a, b, g in zip(self.kinds, self.elements, self.values, self.lo, self.hi, self.gamma)
        )

    @property
    def violations(self) -> tuple[PenaltyTerm, ...]:
        return tuple(t for t in self.terms if t.tau > 0)

    @property
    def feasible(self) -> bool:
        return self.converged and not np.any(self.taus > 0)


def evaluate_limits(solution: PFSolution, flows: BranchFlowSet | None, network: ExpandedNetwork) -> ViolationReport:
    """Voltage, per-circuit loading and generator limit terms.

    Voltage bounds follow ``network.outage`` (relaxed band with an outage).
    Loading is measured per circuit as S / S_max; generator outputs are
    per-unitized on the case base.  DC solutions have no voltage or reactive
    terms.
    """
    k = network.contingency.k
    if not solution.converged:
        return ViolationReport(False, k)
    case = network.case
    lim = case.limit_arrays
    ac = solution.model == "ac"
    kinds: list[str] = []
    parts = []  # (elements, values, lo, hi, gamma)
    if ac:
        lo, hi = (lim.v_lo_out, lim.v_hi_out) if network.outage else (lim.v_lo, lim.v_hi)
        kinds += ["voltage"] * case.n_bus
        parts.append((lim.bus_ids, solution.v, lo, hi, np.full(case.n_bus, GAMMA_VOLTAGE)))
    if flows is not None:
        live = np.flatnonzero(flows.circuits > CIRCUIT_EPS)
        smax = lim.s_max[live]
        ids = lim.corridor_ids[live]
        ones, zeros = np.ones(len(live)), np.zeros(len(live))
        g = np.full(len(live), GAMMA_FLOW)
        if ac:
            kinds += ["flow_from"] * len(live) + ["flow_to"] * len(live)
            parts.append((ids, flows.s_from[live] / smax, zeros, ones, g))
            parts.append((ids, flows.s_to[live] / smax, zeros, ones, g))
        else:
            kinds += ["flow_from"] * len(live)
            parts.append((ids, np.abs(flows.p_from[live]) / smax, zeros, ones, g))
    base = case.base_mva
    th = lim.thermal
    kinds += ["p_gen"] * len(th)
    parts.append((lim.gen_ids, solution.p_gen[th] / base, lim.p_lo, lim.p_hi, np.full(len(th), GAMMA_GEN)))
    if ac and len(lim.q_bus_ids):
        q = lim.q_map @ solution.q_gen / base
        kinds += ["q_gen"] * len(q)
        parts.append((lim.q_bus_ids, q, lim.q_lo, lim.q_hi, np.full(len(q), GAMMA_GEN)))
    cols = [np.concatenate([p[i] for p in parts]) for i in range(5)]
    return ViolationReport(True, k, tuple(kinds), cols[0].astype(int), *cols[1:])


def penalty(report: ViolationReport, gamma_eq: float = GAMMA_EQ) -> float:
    f_eq = 0.0 if report.converged else 1.0
    return gamma_eq * f_eq + float(report.taus.sum())


def augmented_cost(investment: float, pen: float) -> float:
    if investment < 0 or pen < 0:
        raise ValueError("cost and penalty must be non-negative")
    return investment + pen


def fitness(v_aug: float) -> float:
    if v_aug <= 0:
        raise ValueError("fitness needs a positive augmented cost")
    return 1.0 / v_aug
