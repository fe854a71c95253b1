"""Deterministic AC (Newton-Raphson) and DC power flow, branch flows and
participation-factor dispatch.

Powers enter and leave the public functions in MW / MVAr; the solvers work in
per unit on ``case.base_mva``.  A failed solve is reported through
``PFSolution.converged`` and never raised.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .network import CIRCUIT_EPS, ExpandedNetwork, NetworkCase, check_connectivity

log = logging.getLogger(__name__)

AC_TOL = 1e-6
AC_MAX_ITER = 30
REDISPATCH_SHARE = 0.05


class InfeasibleDispatch(ValueError):
    """Thermal capacity cannot cover the realized net demand."""


@dataclass(frozen=True, eq=False)
class PFSolution:
    model: str
    v: np.ndarray
    theta: np.ndarray
    p_gen: np.ndarray  # MW per generator
    q_gen: np.ndarray  # MVAr per generator
    p_load: np.ndarray  # MW per bus
    q_load: np.ndarray
    converged: bool
    iterations: int = 0
    max_mismatch: float = 0.0
    mismatch: np.ndarray | None = None  # final residual vector, kept for debugging

    def injections(self, case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
        """Net bus injections (MW, MVAr) implied by generation and load."""
        p = -self.p_load.copy()
        q = -self.q_load.copy() + np.array([b.q_reac for b in case.buses])
        for g, pg, qg in zip(case.generators, self.p_gen, self.q_gen):
            i = case.bus_index(g.bus)
            p[i] += pg
            q[i] += qg
        return p, q


@dataclass(frozen=True, eq=False)
class BranchFlowSet:
    """Per-circuit terminal flows (MW / MVAr / MVA), indexed by corridor."""

    p_from: np.ndarray
    q_from: np.ndarray
    p_to: np.ndarray
    q_to: np.ndarray
    circuits: np.ndarray

    @property
    def s_from(self) -> np.ndarray:
        return np.hypot(self.p_from, self.q_from)

    @property
    def s_to(self) -> np.ndarray:
        return np.hypot(self.p_to, self.q_to)


# -- dispatch ---------------------------------------------------------------

def dispatch(case: NetworkCase, p_load: np.ndarray, wind: np.ndarray | None = None, losses: float = 0.0) -> np.ndarray:
    """Generator MW setpoints for a realized load/wind state.

    Thermal units move from their base setpoint by their participation share
    of the imbalance; units hitting a limit are clamped and the rest of the
    imbalance is shared among the others in proportion to their factors.
    """
    gens = case.generators
    p = np.array([g.p_base for g in gens], dtype=float)
    wind_idx = [i for i, g in enumerate(gens) if g.kind == "wind"]
    if wind is not None:
        p[wind_idx] = wind
    thermal = [i for i, g in enumerate(gens) if g.kind == "thermal"]
    lo = np.array([gens[i].p_min for i in thermal])
    hi = np.array([gens[i].p_max for i in thermal])
    pf = np.array([gens[i].participation for i in thermal])
    need = float(np.sum(p_load)) + losses - float(np.sum(p[wind_idx]))
    if need > hi.sum() + 1e-9 or need < lo.sum() - 1e-9:
        raise InfeasibleDispatch(f"net demand {need:.3f} MW outside thermal range [{lo.sum():.3f}, {hi.sum():.3f}]")

    pt = p[thermal].copy()
    free = pf > 0
    for _ in range(len(thermal) + 1):
        residual = need - pt.sum()
        if abs(residual) < 1e-10:
            break
        share = np.where(free, pf, 0.0)
        if share.sum() <= 0:
            raise InfeasibleDispatch("no participating unit left to absorb the imbalance")
        pt = pt + residual * share / share.sum()
        over, under = pt > hi, pt < lo
        pt = np.clip(pt, lo, hi)
        free &= ~(over | under)
    if abs(need - pt.sum()) > 1e-6:
        raise InfeasibleDispatch("imbalance left after clamping")
    p[thermal] = pt
    return p


# -- AC ---------------------------------------------------------------------

def _bus_types(case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
    """Indices of PV buses (with a thermal unit) and PQ buses, slack excluded."""
    has_thermal = {case.bus_index(g.bus) for g in case.thermal}
    pv, pq = [], []
    for i, b in enumerate(case.buses):
        if b.kind == "slack":
            continue
        if b.kind == "pv" and i in has_thermal:
            pv.append(i)
        else:
            pq.append(i)
    return np.array(pv, dtype=int), np.array(pq, dtype=int)


def _q_limits(case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
    qmin = np.zeros(case.n_bus)
    qmax = np.zeros(case.n_bus)
    for g in case.thermal:
        i = case.bus_index(g.bus)
        qmin[i] += g.q_min
        qmax[i] += g.q_max
    return qmin, qmax


def _newton(ybus, v0, p_spec, q_spec, pv, pq, tol, max_iter):
    """Polar Newton-Raphson; returns (V complex, converged, iters, mismatch)."""
    v = v0.copy()
    pvpq = np.concatenate([pv, pq])
    npvpq = len(pvpq)

    def residual(v):
        s = v * np.conj(ybus @ v)
        return np.concatenate([s.real[pvpq] - p_spec[pvpq], s.imag[pq] - q_spec[pq]])

    f = residual(v)
    for it in range(max_iter + 1):
        err = float(np.max(np.abs(f))) if f.size else 0.0
        if not np.isfinite(err):
            return v, False, it, f
        if err <= tol:
            return v, True, it, f
        if it == max_iter:
            break
        ibus = ybus @ v
        vm = np.abs(v)
        dva = 1j * v[:, None] * np.conj(np.diag(ibus) - ybus * v[None, :])
        dvm = v[:, None] * np.conj(ybus * (v / vm)[None, :]) + np.diag(np.conj(ibus) * v / vm)
        jac = np.block([
            [dva.real[np.ix_(pvpq, pvpq)], dvm.real[np.ix_(pvpq, pq)]],
            [dva.imag[np.ix_(pq, pvpq)], dvm.imag[np.ix_(pq, pq)]],
        ])
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError:
            return v, False, it, f
        va = np.angle(v)
        va[pvpq] += dx[:npvpq]
        vm[pq] += dx[npvpq:]
        if np.any(vm <= 0):
            return v, False, it + 1, f
        v = vm * np.exp(1j * va)
        f = residual(v)
    return v, False, max_iter, f


def solve_ac_pf(
    network: ExpandedNetwork,
    p_gen: np.ndarray,
    p_load: np.ndarray,
    q_load: np.ndarray,
    tol: float = AC_TOL,
    max_iter: int = AC_MAX_ITER,
    enforce_q_limits: bool = True,
) -> PFSolution:
    """Newton-Raphson from a flat start.

    PV buses whose reactive output leaves the units' range are switched to PQ
    at the violated limit and the solve is repeated.  The slack bus takes the
    real-power residual (losses and dispatch error).
    """
    case = network.case
    base = case.base_mva
    n = case.n_bus
    gens = case.generators
    p_gen = np.asarray(p_gen, dtype=float)
    p_load = np.asarray(p_load, dtype=float)
    q_load = np.asarray(q_load, dtype=float)

    def fail(iters=0):
        return PFSolution("ac", np.full(n, np.nan), np.full(n, np.nan), p_gen.copy(),
                          np.zeros(len(gens)), p_load, q_load, False, iters, np.inf)

    if not check_connectivity(network):
        return fail()

    ybus = network.ybus()
    pv, pq = _bus_types(case)
    qmin, qmax = _q_limits(case)
    slack = case.slack_index
    q_reac = np.array([b.q_reac for b in case.buses])

    p_bus = -p_load.copy()
    for g, pg in zip(gens, p_gen):
        p_bus[case.bus_index(g.bus)] += pg
    q_fixed = q_reac - q_load  # PQ buses; wind units run at unity power factor

    v_set = np.array([b.v_set for b in case.buses], dtype=float)
    v0 = np.ones(n, dtype=complex)
    v0[pv] = v_set[pv]
    v0[slack] = v_set[slack]
    q_spec = q_fixed.copy()
    pinned = {}
    total_iters = 0
    for _ in range(len(pv) + 1):
        v, ok, iters, f = _newton(ybus, v0, p_bus / base, q_spec / base, pv, pq, tol, max_iter)
        total_iters += iters
        if not ok:
            return fail(total_iters)
        if not enforce_q_limits or len(pv) == 0:
            break
        s = v * np.conj(ybus @ v) * base
        q_unit = s.imag[pv] - q_fixed[pv]
        low = q_unit < qmin[pv] - 1e-9
        high = q_unit > qmax[pv] + 1e-9
        bad = low | high
        if not bad.any():
            break
        for i, lo_hit in zip(pv[bad], low[bad]):
            pinned[int(i)] = qmin[i] if lo_hit else qmax[i]
            q_spec[i] = q_fixed[i] + pinned[int(i)]
        pv = pv[~bad]
        pq = np.sort(np.concatenate([pq, np.array(sorted(pinned), dtype=int)]))
        pq = np.unique(pq)
        v0 = v

    s = v * np.conj(ybus @ v) * base
    # per-generator outputs: the slack unit absorbs the P residual; bus Q is
    # split over thermal units by their reactive range
    p_out = p_gen.copy()
    q_out = np.zeros(len(gens))
    by_bus: dict[int, list[int]] = {}
    for k, g in enumerate(gens):
        if g.kind == "thermal":
            by_bus.setdefault(case.bus_index(g.bus), []).append(k)
    for i, ks in by_bus.items():
        q_bus = s.imag[i] - q_fixed[i]
        span = np.array([gens[k].q_max - gens[k].q_min for k in ks], dtype=float)
        w = span / span.sum() if span.sum() > 0 else np.full(len(ks), 1.0 / len(ks))
        q_out[ks] = q_bus * w
        if i == slack:
            p_out[ks[0]] += s.real[i] - p_bus[i]
    return PFSolution("ac", np.abs(v), np.angle(v) - np.angle(v[slack]), p_out, q_out, p_load, q_load,
                      True, total_iters, float(np.max(np.abs(f))) if f.size else 0.0, f)


# -- DC ---------------------------------------------------------------------

def solve_dc_pf(network: ExpandedNetwork, p_gen: np.ndarray, p_load: np.ndarray) -> PFSolution:
    """Lossless DC flow: B' theta = P with the slack absorbing any residual."""
    case = network.case
    n = case.n_bus
    p_gen = np.asarray(p_gen, dtype=float)
    p_load = np.asarray(p_load, dtype=float)
    zeros = np.zeros(n)
    if not check_connectivity(network):
        return PFSolution("dc", np.ones(n), np.full(n, np.nan), p_gen.copy(), np.zeros(len(p_gen)),
                          p_load, zeros, False, 0, np.inf)
    p_bus = -p_load.copy()
    for g, pg in zip(case.generators, p_gen):
        p_bus[case.bus_index(g.bus)] += pg
    slack = case.slack_index
    keep = np.arange(n) != slack
    bmat = network.bbus()
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(bmat[np.ix_(keep, keep)], p_bus[keep] / case.base_mva)
    residual = float(-p_bus.sum())
    p_out = p_gen.copy()
    slack_units = [k for k, g in enumerate(case.generators) if g.kind == "thermal" and case.bus_index(g.bus) == slack]
    if slack_units:
        p_out[slack_units[0]] += residual
    mismatch = bmat[keep] @ theta - p_bus[keep] / case.base_mva
    return PFSolution("dc", np.ones(n), theta, p_out, np.zeros(len(p_gen)), p_load, zeros, True, 1,
                      float(np.max(np.abs(mismatch))) if mismatch.size else 0.0, mismatch)


# -- branch flows -----------------------------------------------------------

def branch_flows(solution: PFSolution, network: ExpandedNetwork) -> BranchFlowSet:
    case = network.case
    t = case.topology
    base = case.base_mva
    live = network.circuits > CIRCUIT_EPS
    if solution.model == "dc":
        p = np.where(live, (solution.theta[t.f] - solution.theta[t.t]) / t.x * base, 0.0)
        z = np.zeros_like(p)
        return BranchFlowSet(p, z, -p, z.copy(), network.circuits.copy())
    v = solution.v * np.exp(1j * solution.theta)
    vf, vt = v[t.f], v[t.t]
    i_f = t.y_series * (vf - vt) + 0.5j * t.b * vf
    i_t = t.y_series * (vt - vf) + 0.5j * t.b * vt
    s_f = np.where(live, vf * np.conj(i_f) * base, 0.0)
    s_t = np.where(live, vt * np.conj(i_t) * base, 0.0)
    return BranchFlowSet(s_f.real, s_f.imag, s_t.real, s_t.imag, network.circuits.copy())


# -- dispatch + solve -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OperatingState:
    solution: PFSolution
    pf_calls: int
    dispatch_ok: bool = True


def solve_operating_point(
    network: ExpandedNetwork,
    model: str,
    p_load: np.ndarray,
    q_load: np.ndarray,
    wind: np.ndarray | None = None,
) -> OperatingState:
    """Dispatch then solve; AC solves re-dispatch once when the slack drifts
    by more than 5 % of its rating, folding the losses into the imbalance."""
    case = network.case
    try:
        p_gen = dispatch(case, p_load, wind)
    except InfeasibleDispatch:
        n = case.n_bus
        sol = PFSolution(model, np.full(n, np.nan), np.full(n, np.nan), np.zeros(len(case.generators)),
                         np.zeros(len(case.generators)), p_load, q_load, False, 0, np.inf)
        return OperatingState(sol, 0, False)
    if model == "dc":
        return OperatingState(solve_dc_pf(network, p_gen, p_load), 1)
    sol = solve_ac_pf(network, p_gen, p_load, q_load)
    calls = 1
    if sol.converged:
        slack_units = [k for k, g in enumerate(case.generators)
                       if g.kind == "thermal" and case.bus_index(g.bus) == case.slack_index]
        if slack_units:
            k = slack_units[0]
            drift = sol.p_gen[k] - p_gen[k]
            if abs(drift) > REDISPATCH_SHARE * case.generators[k].p_max:
                try:
                    p_gen2 = dispatch(case, p_load, wind, losses=float(sol.p_gen.sum() - np.sum(p_load)))
                except InfeasibleDispatch:
                    return OperatingState(sol, calls)
                sol = solve_ac_pf(network, p_gen2, p_load, q_load)
                calls += 1
    return OperatingState(sol, calls)
