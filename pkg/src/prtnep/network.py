"""Network data model, expansion plans, investment cost and contingency lists.

A :class:`NetworkCase` is immutable.  Expansion plans are integer vectors over
the corridor list; :func:`apply_plan` turns a case + plan + contingency into an
:class:`ExpandedNetwork` that the power-flow engines consume.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

BUS_KINDS = ("slack", "pv", "pq")
GEN_KINDS = ("thermal", "wind")
# effective circuit counts below this are treated as out of service
CIRCUIT_EPS = 1e-9


class CaseError(ValueError):
    """Raised when case data violates a structural invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str
    p_demand: float = 0.0
    q_demand: float = 0.0
    q_reac: float = 0.0
    v_set: float = 1.0
    v_min: float = 0.95
    v_max: float = 1.05
    v_min_outage: float = 0.90
    v_max_outage: float = 1.10

    def bounds(self, outage: bool) -> tuple[float, float]:
        if outage:
            return self.v_min_outage, self.v_max_outage
        return self.v_min, self.v_max


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    kind: str
    p_min: float
    p_max: float
    q_min: float = 0.0
    q_max: float = 0.0
    p_base: float = 0.0
    participation: float = 0.0


@dataclass(frozen=True)
class Corridor:
    """One (sub-)corridor; all circuits in it are identical."""

    id: int
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float
    s_max: float
    cost: float
    n0: int
    n_bar: int
    for_rate: float = 0.0

    @property
    def label(self) -> str:
        return f"{self.from_bus}-{self.to_bus}"


@dataclass(frozen=True)
class WindSpec:
    generator: int
    alpha: float
    beta: float
    u_ci: float
    u_rt: float
    u_co: float
    p_rt: float


@dataclass(frozen=True)
class Topology:
    """Corridor endpoint indices and per-circuit parameters as arrays."""

    f: np.ndarray
    t: np.ndarray
    r: np.ndarray
    x: np.ndarray
    b: np.ndarray
    y_series: np.ndarray


@dataclass(frozen=True)
class LimitArrays:
    """Bounds of every checked quantity, laid out for vectorized checks."""

    bus_ids: np.ndarray
    v_lo: np.ndarray
    v_hi: np.ndarray
    v_lo_out: np.ndarray
    v_hi_out: np.ndarray
    corridor_ids: np.ndarray
    s_max: np.ndarray
    thermal: np.ndarray
    gen_ids: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    q_bus_ids: np.ndarray
    q_map: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray


@dataclass(frozen=True)
class NetworkCase:
    name: str
    base_mva: float
    buses: tuple[Bus, ...]
    generators: tuple[Generator, ...]
    corridors: tuple[Corridor, ...]
    wind: tuple[WindSpec, ...] = ()
    load_sigma_pct: dict[int, float] = field(default_factory=dict)
    n_samples: int = 10_000

    def __post_init__(self):
        slacks = [b for b in self.buses if b.kind == "slack"]
        if len(slacks) != 1:
            raise CaseError(f"case {self.name!r} needs exactly one slack bus, found {len(slacks)}")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseError("duplicate bus ids")
        known = set(ids)
        for g in self.generators:
            if g.bus not in known:
                raise CaseError(f"generator {g.id} sits on unknown bus {g.bus}")
        for c in self.corridors:
            if c.from_bus not in known or c.to_bus not in known:
                raise CaseError(f"corridor {c.id} references an unknown bus")
        object.__setattr__(self, "_index", {b.id: i for i, b in enumerate(self.buses)})

    @cached_property
    def topology(self) -> "Topology":
        idx = self._index
        f = np.array([idx[c.from_bus] for c in self.corridors], dtype=int)
        t = np.array([idx[c.to_bus] for c in self.corridors], dtype=int)
        r = np.array([c.r for c in self.corridors], dtype=float)
        x = np.array([c.x for c in self.corridors], dtype=float)
        b = np.array([c.b for c in self.corridors], dtype=float)
        return Topology(f, t, r, x, b, 1.0 / (r + 1j * x))

    @cached_property
    def limit_arrays(self) -> "LimitArrays":
        th = np.array([k for k, g in enumerate(self.generators) if g.kind == "thermal"], dtype=int)
        q_buses = sorted({self.generators[k].bus for k in th})
        q_map = np.zeros((len(q_buses), len(self.generators)))
        q_lo = np.zeros(len(q_buses))
        q_hi = np.zeros(len(q_buses))
        for k in th:
            g = self.generators[k]
            row = q_buses.index(g.bus)
            q_map[row, k] = 1.0
            q_lo[row] += g.q_min / self.base_mva
            q_hi[row] += g.q_max / self.base_mva
        return LimitArrays(
            bus_ids=np.array([b.id for b in self.buses]),
            v_lo=np.array([b.v_min for b in self.buses]),
            v_hi=np.array([b.v_max for b in self.buses]),
            v_lo_out=np.array([b.v_min_outage for b in self.buses]),
            v_hi_out=np.array([b.v_max_outage for b in self.buses]),
            corridor_ids=np.array([c.id for c in self.corridors]),
            s_max=np.array([c.s_max for c in self.corridors], dtype=float),
            thermal=th,
            gen_ids=np.array([self.generators[k].id for k in th], dtype=int),
            p_lo=np.array([self.generators[k].p_min for k in th]) / self.base_mva,
            p_hi=np.array([self.generators[k].p_max for k in th]) / self.base_mva,
            q_bus_ids=np.array(q_buses, dtype=int),
            q_map=q_map,
            q_lo=q_lo,
            q_hi=q_hi,
        )

    # lookups -------------------------------------------------------------
    def bus_index(self, bus_id: int) -> int:
        return self._index[bus_id]

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_corridors(self) -> int:
        return len(self.corridors)

    @property
    def slack_index(self) -> int:
        return next(i for i, b in enumerate(self.buses) if b.kind == "slack")

    @property
    def n0(self) -> np.ndarray:
        return np.array([c.n0 for c in self.corridors], dtype=int)

    @property
    def n_bar(self) -> np.ndarray:
        return np.array([c.n_bar for c in self.corridors], dtype=int)

    @property
    def costs(self) -> np.ndarray:
        return np.array([c.cost for c in self.corridors], dtype=float)

    @property
    def thermal(self) -> list[Generator]:
        return [g for g in self.generators if g.kind == "thermal"]

    @property
    def wind_generators(self) -> list[Generator]:
        return [g for g in self.generators if g.kind == "wind"]

    def corridor_by_label(self, label: str) -> int:
        """Index of the first corridor joining the two buses in ``"a-b"``."""
        a, b = (int(s) for s in label.split("-"))
        for i, c in enumerate(self.corridors):
            if {c.from_bus, c.to_bus} == {a, b}:
                return i
        raise KeyError(label)

    def plan_from_labels(self, additions: dict[str, int]) -> "ExpansionPlan":
        n = [0] * self.n_corridors
        for label, count in additions.items():
            n[self.corridor_by_label(label)] += int(count)
        return ExpansionPlan(tuple(n))


@dataclass(frozen=True, order=True)
class ExpansionPlan:
    additions: tuple[int, ...]

    @classmethod
    def zeros(cls, size: int) -> "ExpansionPlan":
        return cls((0,) * size)

    @classmethod
    def from_array(cls, values: Iterable) -> "ExpansionPlan":
        return cls(tuple(int(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.additions, dtype=int)

    def __len__(self) -> int:
        return len(self.additions)

    def __add__(self, other: "ExpansionPlan") -> "ExpansionPlan":
        if len(other) != len(self):
            raise CaseError("plan dimension mismatch")
        return ExpansionPlan(tuple(a + b for a, b in zip(self.additions, other.additions)))

    @property
    def total_lines(self) -> int:
        return sum(self.additions)

    @property
    def corridors_used(self) -> int:
        return sum(1 for n in self.additions if n > 0)

    def within(self, n_bar: Sequence[int]) -> bool:
        return all(0 <= n <= m for n, m in zip(self.additions, n_bar))

    def describe(self, case: NetworkCase) -> dict[str, int]:
        return {case.corridors[i].label: n for i, n in enumerate(self.additions) if n > 0}


@dataclass(frozen=True)
class Contingency:
    k: int
    corridor: int | None = None
    islanding: bool = False

    @property
    def is_base(self) -> bool:
        return self.corridor is None


BASE_CASE = Contingency(0)


def _check_dims(plan: ExpansionPlan, case: NetworkCase) -> None:
    if len(plan) != case.n_corridors:
        raise CaseError(f"plan has {len(plan)} entries, case has {case.n_corridors} corridors")


def plan_cost(plan: ExpansionPlan, case: NetworkCase) -> float:
    _check_dims(plan, case)
    return float(np.dot(case.costs, plan.as_array()))


@dataclass(frozen=True, eq=False)
class ExpandedNetwork:
    """Per-corridor circuit counts for one topology.

    ``circuits`` may be fractional: the FOR study represents a partially
    available corridor by ``n - 1 + H`` effective circuits.
    """

    case: NetworkCase
    circuits: np.ndarray
    contingency: Contingency = BASE_CASE
    # selects the relaxed voltage band
    outage: bool = False

    def ybus(self) -> np.ndarray:
        t = self.case.topology
        n = self.case.n_bus
        k = np.clip(self.circuits, 0.0, None)
        yl = k * t.y_series
        ysh = 0.5j * k * t.b
        y = np.zeros((n, n), dtype=complex)
        np.add.at(y, (t.f, t.f), yl + ysh)
        np.add.at(y, (t.t, t.t), yl + ysh)
        np.add.at(y, (t.f, t.t), -yl)
        np.add.at(y, (t.t, t.f), -yl)
        return y

    def bbus(self) -> np.ndarray:
        t = self.case.topology
        n = self.case.n_bus
        s = np.clip(self.circuits, 0.0, None) / t.x
        bmat = np.zeros((n, n))
        np.add.at(bmat, (t.f, t.f), s)
        np.add.at(bmat, (t.t, t.t), s)
        np.add.at(bmat, (t.f, t.t), -s)
        np.add.at(bmat, (t.t, t.f), -s)
        return bmat


def apply_plan(case: NetworkCase, plan: ExpansionPlan, contingency: Contingency = BASE_CASE) -> ExpandedNetwork:
    _check_dims(plan, case)
    circuits = case.n0 + plan.as_array()
    if contingency.corridor is not None:
        l = contingency.corridor
        if circuits[l] < 1:
            raise CaseError(f"contingency {contingency.k} removes a circuit from empty corridor {l}")
        circuits = circuits.copy()
        circuits[l] -= 1
    return ExpandedNetwork(case, circuits.astype(float), contingency, contingency.corridor is not None)


def check_connectivity(network: ExpandedNetwork) -> bool:
    case = network.case
    n = case.n_bus
    if n == 1:
        return True
    t = case.topology
    live = network.circuits > CIRCUIT_EPS
    graph = csr_matrix((np.ones(int(live.sum())), (t.f[live], t.t[live])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    return bool(np.all(labels == labels[case.slack_index]))


def enumerate_contingencies(case: NetworkCase, plan: ExpansionPlan) -> list[Contingency]:
    """Base case first, then one single-circuit outage per populated corridor."""
    _check_dims(plan, case)
    circuits = case.n0 + plan.as_array()
    out = [BASE_CASE]
    for l in range(case.n_corridors):
        if circuits[l] >= 1:
            trial = Contingency(len(out), l)
            islanding = not check_connectivity(apply_plan(case, plan, trial))
            out.append(Contingency(trial.k, l, islanding))
    return out
