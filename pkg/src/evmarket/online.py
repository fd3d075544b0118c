"""Periodic market clearing with immutable prior commitments.

At each clearing point the accumulated reports are optimized together with
every previously committed schedule pinned in place, then priced with the
chosen mechanism scoped to the newly admitted agents.  Committed slots are
never touched by later clearings.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

from .allocator import STATUS_OPTIMAL, SolveResult, evaluate_objective
from .model import Allocation, Instance, Money, PricingOutcome, imbalance_cost
from .pricing import Solver, default_solver, price_coop, price_vcg


@dataclass(frozen=True)
class ClearingSchedule:
    """Ordered clearing times; a final clearing at the horizon end is allowed."""

    points: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("at least one clearing point is required")
        if any(b <= a for a, b in zip(self.points, self.points[1:])):
            raise ValueError("clearing points must be strictly increasing")

    @staticmethod
    def evenly(horizon: int, count: int) -> "ClearingSchedule":
        pts = tuple(sorted({round(horizon * (k + 1) / count) for k in range(count)}))
        return ClearingSchedule(points=pts)


@dataclass
class ClearingResult:
    time: int
    eligible: list[str]
    newly_committed: list[str]
    commitments_added: frozenset[tuple[str, str, int]]
    outcome: Optional[PricingOutcome]
    status: str


@dataclass
class OnlineResult:
    clearings: list[ClearingResult]
    allocation: Allocation  # combined committed allocation on the full instance
    outcome: PricingOutcome  # merged payments/utilities with global accounting


def _remaining_window_fits(req, frozen_before: int) -> bool:
    for sid in req.feasible_stations:
        acc = req.access(sid)
        if acc.departure - max(acc.arrival, frozen_before) >= acc.charge_slots_needed:
            return True
    return False


def run_online(
    instance: Instance,
    clearing_schedule: ClearingSchedule,
    mechanism: str = "vcg",
    solver: Optional[Solver] = None,
    incr: float = 0.025,
    carryover: bool = False,
) -> OnlineResult:
    """Algorithm: for each clearing point, gather the agents that reported
    since the previous one (report time = start_time), pin all existing
    commitments, re-solve from the clearing time onward, and price the new
    winners.  With carryover=True, agents left out at their first clearing
    stay eligible while their remaining window still fits their demand;
    the default is single-shot participation.
    """
    if mechanism not in ("coop", "vcg"):
        raise ValueError(f"unknown mechanism {mechanism!r}")
    solve = solver if solver is not None else default_solver

    committed_assigned: dict[str, str] = {}
    committed_schedule: set[tuple[str, str, int]] = set()
    payments: dict[str, Money] = {}
    utilities: dict[str, Money] = {}
    elec_costs: dict[str, Money] = {}
    clearings: list[ClearingResult] = []
    leftovers: list[str] = []
    prev_point = 0

    by_id = {r.ev.id: r for r in instance.requests}
    for t_p in clearing_schedule.points:
        new_ids = [
            r.ev.id
            for r in instance.requests
            if prev_point <= r.ev.start_time < t_p and r.ev.id not in committed_assigned
        ]
        pool = (leftovers + new_ids) if carryover else new_ids
        eligible = [
            aid
            for aid in pool
            if aid not in committed_assigned and _remaining_window_fits(by_id[aid], t_p)
        ]
        prev_point = t_p
        if not eligible:
            clearings.append(
                ClearingResult(t_p, [], [], frozenset(), None, "no-op")
            )
            leftovers = [] if not carryover else [
                aid for aid in pool if aid not in committed_assigned
            ]
            continue

        pinned = Allocation(
            assigned=dict(committed_assigned),
            schedule=frozenset(committed_schedule),
            objective=0,
        )
        clearing_instance = dataclasses.replace(
            instance,
            requests=tuple(
                by_id[aid] for aid in list(committed_assigned) + eligible
            ),
            evs=(),
            pinned=pinned,
            frozen_before=t_p,
        )
        result = solve(clearing_instance)
        allocation = result.allocation
        newly_assigned = [
            aid for aid in eligible if allocation.assigned.get(aid) is not None
        ]
        if mechanism == "vcg":
            outcome = price_vcg(
                clearing_instance, allocation, solver=solve, agent_ids=newly_assigned
            )
        else:
            outcome = price_coop(
                clearing_instance, allocation, incr, agent_ids=newly_assigned
            )
        # only agents that actually charge become commitments
        added: set[tuple[str, str, int]] = set()
        committed_now = []
        for aid in newly_assigned:
            if aid not in outcome.charged:
                continue
            committed_now.append(aid)
            committed_assigned[aid] = allocation.assigned[aid]
            for tr in allocation.schedule:
                if tr[0] == aid:
                    added.add(tr)
        committed_schedule |= added
        for aid in committed_now:
            payments[aid] = outcome.payments[aid]
            utilities[aid] = outcome.utilities[aid]
            elec_costs[aid] = outcome.elec_costs[aid]
        clearings.append(
            ClearingResult(
                t_p, eligible, committed_now, frozenset(added), outcome, result.status
            )
        )
        if carryover:
            leftovers = [aid for aid in pool if aid not in committed_assigned]
        else:
            leftovers = []

    assigned_all: dict[str, Optional[str]] = {
        r.ev.id: committed_assigned.get(r.ev.id) for r in instance.requests
    }
    schedule_all = frozenset(committed_schedule)
    combined = Allocation(
        assigned=assigned_all,
        schedule=schedule_all,
        objective=evaluate_objective(instance, assigned_all, schedule_all),
    )
    _, total_imb = imbalance_cost(
        combined, instance.stations, instance.time_grid, instance.imbalance_unit_cost
    )
    all_payments = {r.ev.id: payments.get(r.ev.id, 0) for r in instance.requests}
    all_utilities = {r.ev.id: utilities.get(r.ev.id, 0) for r in instance.requests}
    total_budget = sum(payments.values()) - sum(elec_costs.values()) - total_imb
    merged = PricingOutcome(
        payments=all_payments,
        utilities=all_utilities,
        charged=frozenset(committed_assigned),
        elec_costs=dict(elec_costs),
        total_imbalance_cost=total_imb,
        budget=total_budget,
    )
    return OnlineResult(clearings=clearings, allocation=combined, outcome=merged)
