"""Core domain types and elementary market formulas.

Money and energy are fixed-point integers (money in cents at MONEY_SCALE,
energy in whole units).  Exact integer arithmetic keeps solver comparisons
and payment differences free of floating-point noise, which matters because
VCG payments subtract two near-equal welfare values.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional

Money = int  # fixed-point, MONEY_SCALE units per currency unit
Energy = int  # whole energy units

MONEY_SCALE = 100


def money_from_float(x: float) -> Money:
    """Convert a currency amount to fixed-point cents (round half away from zero)."""
    if x >= 0:
        return int(x * MONEY_SCALE + 0.5)
    return -int(-x * MONEY_SCALE + 0.5)


def money_to_float(m: Money) -> float:
    return m / MONEY_SCALE


@dataclass(frozen=True)
class TimeGrid:
    """Discrete scheduling horizon; time indices are ints in [0, horizon_len)."""

    horizon_len: int
    minutes_per_point: int = 15  # reporting only

    def __post_init__(self) -> None:
        if self.horizon_len < 1:
            raise ValueError("horizon_len must be >= 1")


@dataclass(frozen=True)
class Station:
    """A charging station with a fixed number of simultaneous chargers."""

    id: str
    location: int
    slots: int
    rate: Energy  # energy units delivered per occupied time point
    elec_cost: Money  # cents per energy unit
    expected_demand: tuple[int, ...]  # contracted EV count per time point

    def __post_init__(self) -> None:
        if self.slots < 0:
            raise ValueError(f"station {self.id}: slots must be >= 0")
        if self.rate <= 0:
            raise ValueError(f"station {self.id}: rate must be > 0")
        if self.elec_cost < 0:
            raise ValueError(f"station {self.id}: elec_cost must be >= 0")
        if any(d < 0 for d in self.expected_demand):
            raise ValueError(f"station {self.id}: expected_demand entries must be >= 0")

    @property
    def slot_elec_cost(self) -> Money:
        """Electricity cost of one occupied charging slot (rate units delivered)."""
        return self.rate * self.elec_cost


@dataclass(frozen=True)
class EvType:
    """One agent's reported tuple: demand, window, valuation, locations, battery."""

    id: str
    discharge_rate: float  # energy units per km driven
    battery_capacity: Energy
    battery_initial: Energy
    start_location: int
    start_time: int
    end_location: int
    park_duration: int  # time points parked at the station
    energy_demand: Energy  # units the agent wants; all-or-nothing valuation
    base_valuation: Money  # value of receiving energy_demand, before time cost
    time_cost: Money = 0  # flat-mode disutility applied to every station

    def __post_init__(self) -> None:
        if not 0 <= self.battery_initial <= self.battery_capacity:
            raise ValueError(f"ev {self.id}: battery_initial outside [0, capacity]")
        if not 0 < self.energy_demand <= self.battery_capacity:
            raise ValueError(f"ev {self.id}: energy_demand outside (0, capacity]")
        if self.base_valuation < 0:
            raise ValueError(f"ev {self.id}: base_valuation must be >= 0")
        if self.park_duration < 1:
            raise ValueError(f"ev {self.id}: park_duration must be >= 1")


@dataclass(frozen=True)
class StationAccess:
    """Derived per-station data for one EV: window, valuation, arrival battery."""

    arrival: int
    departure: int
    valuation: Money  # max(0, base_valuation - time_cost); all-or-nothing
    time_cost: Money
    battery_on_arrival: Energy
    charge_slots_needed: int  # ceil(energy_demand / station rate)


@dataclass(frozen=True)
class EvRequest:
    """An EV together with its reachable stations and the feasible subset.

    per_station holds every station passing the reachability and window
    checks; feasible_stations further requires a positive post-clamp
    valuation (a rational agent never accepts negative-value service).
    """

    ev: EvType
    per_station: Mapping[str, StationAccess]
    feasible_stations: frozenset[str]

    def access(self, station_id: str) -> StationAccess:
        return self.per_station[station_id]


@dataclass(frozen=True)
class Allocation:
    """Assignment of EVs to stations plus the charging schedule.

    assigned maps every agent id to a station id or None; schedule holds
    (agent_id, station_id, time) triples; objective is the social welfare
    of the schedule in fixed-point money.
    """

    assigned: Mapping[str, Optional[str]]
    schedule: frozenset[tuple[str, str, int]]
    objective: Money

    def agent_slots(self, agent_id: str) -> int:
        return sum(1 for a, _, _ in self.schedule if a == agent_id)

    def agent_triples(self, agent_id: str) -> frozenset[tuple[str, str, int]]:
        return frozenset(tr for tr in self.schedule if tr[0] == agent_id)


@dataclass(frozen=True)
class Instance:
    """A fully resolved market problem.

    pinned carries commitments from earlier market clearings that must be
    preserved verbatim; frozen_before marks the first time point the market
    may still schedule (everything earlier is immutable history).
    """

    time_grid: TimeGrid
    stations: tuple[Station, ...]
    requests: tuple[EvRequest, ...]
    imbalance_unit_cost: Money
    pinned: Optional[Allocation] = None
    frozen_before: int = 0
    evs: tuple[EvType, ...] = field(default=())
    network: Optional[object] = None  # transport.RoadNetwork when routing is modelled

    def __post_init__(self) -> None:
        station_ids = {s.id for s in self.stations}
        for req in self.requests:
            unknown = set(req.per_station) - station_ids
            if unknown:
                raise ValueError(f"request {req.ev.id} references unknown stations {sorted(unknown)}")
        if not self.evs:
            object.__setattr__(self, "evs", tuple(r.ev for r in self.requests))

    def station(self, station_id: str) -> Station:
        for s in self.stations:
            if s.id == station_id:
                return s
        raise KeyError(station_id)

    def request(self, agent_id: str) -> EvRequest:
        for r in self.requests:
            if r.ev.id == agent_id:
                return r
        raise KeyError(agent_id)

    def without_agent(self, agent_id: str) -> "Instance":
        """Counterfactual instance with one agent's request removed."""
        return replace(
            self,
            requests=tuple(r for r in self.requests if r.ev.id != agent_id),
            evs=tuple(e for e in self.evs if e.id != agent_id),
        )


@dataclass(frozen=True)
class PricingOutcome:
    """Per-agent payments and utilities plus aggregate mechanism accounting."""

    payments: Mapping[str, Money]
    utilities: Mapping[str, Money]
    charged: frozenset[str]
    elec_costs: Mapping[str, Money]  # electricity cost of each charged agent's schedule
    total_imbalance_cost: Money
    budget: Money


def imbalance_cost(
    allocation: Allocation,
    stations: tuple[Station, ...],
    time_grid: TimeGrid,
    imbalance_unit_cost: Money,
) -> tuple[dict[tuple[str, int], Money], Money]:
    """Penalty for deviating from the contracted demand profile.

    Returns per-(station, time) costs |actual load - expected| * unit cost,
    and their total over all cells.
    """
    loads: dict[tuple[str, int], int] = {}
    for _, sid, t in allocation.schedule:
        loads[(sid, t)] = loads.get((sid, t), 0) + 1
    per_cell: dict[tuple[str, int], Money] = {}
    total = 0
    for s in stations:
        for t in range(time_grid.horizon_len):
            dem = s.expected_demand[t] if t < len(s.expected_demand) else 0
            cost = abs(loads.get((s.id, t), 0) - dem) * imbalance_unit_cost
            per_cell[(s.id, t)] = cost
            total += cost
    return per_cell, total


def valuation(ev: EvType, station: Station, time_cost: Money, delivered_energy: Energy) -> Money:
    """All-or-nothing value of a charge: base value minus time cost if the
    full demand is delivered, zero otherwise.  Clamped at zero: an agent
    whose travel disutility exceeds its value simply declines the station.
    """
    if delivered_energy < ev.energy_demand:
        return 0
    return max(0, ev.base_valuation - time_cost)


def utility(valuation_value: Money, payment: Money, charged: bool) -> Money:
    """Agent satisfaction: value minus transfer when charging, else zero."""
    return valuation_value - payment if charged else 0
