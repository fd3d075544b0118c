"""Seeded synthetic scenario generation.

Distributions follow the uniform-with-stated-endpoints reading: arrivals on
[0, 0.6*horizon], parking until a uniform departure, demand a uniform integer
that always fits the parking window at rate 1, per-unit valuations uniform on
[0, 1] money units and multiplied by the demand.  Stations sit on a ring road
with intermediate junction nodes; EVs start and end at random junctions with
enough initial battery to reach any station.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Optional

from .model import EvType, Instance, Money, Station, TimeGrid, money_from_float
from .transport import RoadNetwork, TimeCostParams, build_requests, reprice_requests


class ResampleLimit(Exception):
    """Feasibility resampling exceeded its retry budget; the distribution
    overrides are inconsistent with the feasibility guarantee."""


@dataclass(frozen=True)
class GenParams:
    n_evs: int = 30
    n_stations: int = 8
    horizon: int = 50
    minutes_per_point: int = 15
    slots: int = 2
    rate: int = 1  # energy units per time point
    elec_cost: Money = 100  # cents per unit
    imbalance_unit_cost: Money = 50  # cents per unit of demand deviation
    dem_low: int = 1
    dem_high: int = 3  # expected demand uniform integer on [dem_low, dem_high]
    value_per_unit_max: Money = 100  # per-unit valuation uniform on [0, this]
    arrival_frac: float = 0.6  # start times uniform on [0, arrival_frac*horizon]
    per_drive_point: Money = 5
    per_walk_km: Money = 5
    flat: bool = False  # skip the road network entirely
    max_park: Optional[int] = None  # cap on parking duration (default: until horizon)
    max_demand: Optional[int] = None  # cap on energy demand (default: parking length)
    resample_limit: int = 1000


def _ring_network(params: GenParams) -> RoadNetwork:
    """Stations on a ring, one plain junction between each adjacent pair."""
    n = params.n_stations
    total = max(2 * n, 3)
    nodes = frozenset(range(total))
    edges = tuple((i, (i + 1) % total, 1.0) for i in range(total))
    charging = frozenset(2 * i for i in range(n))
    return RoadNetwork(
        nodes=nodes,
        edges=edges,
        charging_nodes=charging,
        avg_speed=2.0,
        time_cost=TimeCostParams(
            per_drive_point=params.per_drive_point, per_walk_km=params.per_walk_km
        ),
    )


def generate(params: GenParams, seed: int) -> Instance:
    """Build a reproducible random instance; every generated EV is guaranteed
    a nonempty feasible station set (resampled up to params.resample_limit)."""
    rng = random.Random(seed)
    grid = TimeGrid(horizon_len=params.horizon, minutes_per_point=params.minutes_per_point)
    network = None if params.flat else _ring_network(params)
    if network is None:
        station_nodes = list(range(params.n_stations))
        all_nodes = station_nodes
    else:
        station_nodes = sorted(network.charging_nodes)
        all_nodes = sorted(network.nodes)

    stations = tuple(
        Station(
            id=f"L{i + 1}",
            location=station_nodes[i],
            slots=params.slots,
            rate=params.rate,
            elec_cost=params.elec_cost,
            expected_demand=tuple(
                rng.randint(params.dem_low, params.dem_high) for _ in range(params.horizon)
            ),
        )
        for i in range(params.n_stations)
    )

    # enough charge to reach any station from anywhere on the ring
    reach_energy = math.ceil(len(all_nodes) / 2) if network is not None else 0
    arr_high = max(0, round(params.arrival_frac * params.horizon))

    evs: list[EvType] = []
    for k in range(params.n_evs):
        for attempt in range(params.resample_limit + 1):
            start_time = rng.randint(0, min(arr_high, params.horizon - 1))
            park_high = params.horizon - start_time
            if params.max_park is not None:
                park_high = min(park_high, params.max_park)
            park = rng.randint(1, park_high)
            dem_cap = park if params.max_demand is None else min(park, params.max_demand)
            demand = rng.randint(1, dem_cap)
            per_unit = rng.randint(0, params.value_per_unit_max)
            ev = EvType(
                id=f"a{k + 1}",
                discharge_rate=1.0,
                battery_capacity=reach_energy + demand,
                battery_initial=reach_energy,
                start_location=rng.choice(all_nodes),
                start_time=start_time,
                end_location=rng.choice(all_nodes),
                park_duration=park,
                energy_demand=demand,
                base_valuation=per_unit * demand,
                time_cost=0,
            )
            built = build_requests(network, [ev], stations, grid)[0]
            if built.feasible_stations:
                evs.append(ev)
                break
        else:
            raise ResampleLimit(
                f"could not draw a feasible EV after {params.resample_limit} tries"
            )

    requests = tuple(build_requests(network, evs, stations, grid))
    return Instance(
        time_grid=grid,
        stations=stations,
        requests=requests,
        imbalance_unit_cost=params.imbalance_unit_cost,
        evs=tuple(evs),
        network=network,
    )


def perturb_reports(
    instance: Instance,
    liar_fraction: float = 0.10,
    valuation_multiplier: float = 1.80,
    seed: int = 0,
) -> tuple[Instance, dict[str, Money]]:
    """Select floor(liar_fraction * n) agents at random and scale their
    reported base valuation.  Returns the reported instance (what the
    mechanisms see) and a map from liar id to its true valuation."""
    if not 0.0 <= liar_fraction <= 1.0:
        raise ValueError("liar_fraction must be in [0, 1]")
    rng = random.Random(seed)
    ids = sorted(r.ev.id for r in instance.requests)
    n_liars = int(liar_fraction * len(ids))
    liars = sorted(rng.sample(ids, n_liars))
    truth = {aid: instance.request(aid).ev.base_valuation for aid in liars}
    reported = {
        aid: round(truth[aid] * valuation_multiplier) for aid in liars
    }
    new_requests = tuple(reprice_requests(instance.requests, reported))
    reported_instance = replace(
        instance,
        requests=new_requests,
        evs=tuple(r.ev for r in new_requests),
    )
    return reported_instance, truth
