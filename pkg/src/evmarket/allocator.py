"""0-1 integer program for EV-to-station allocation and an exact solver.

The model maximizes total valuation of assigned EVs minus electricity cost
minus the imbalance penalty, with one auxiliary nonnegative variable per
(station, time) cell linearizing the absolute imbalance term (two lower-bound
rows per cell).

solve_exact runs a deterministic best-bound branch-and-bound over binary
variables; node relaxations are solved with scipy's HiGHS LP.  Incumbent
objectives are re-evaluated in exact integer arithmetic so that reported
optima are bit-reproducible and comparable across counterfactual solves.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import Allocation, Instance, Money

_INT_TOL = 1e-6

STATUS_OPTIMAL = "optimal"
STATUS_TIME_LIMITED = "feasible_time_limited"


class InfeasiblePin(Exception):
    """A pinned commitment violates window, capacity, or battery constraints."""


class Infeasible(Exception):
    """The model has no feasible point (only possible with contradictory pins)."""


@dataclass
class IpModel:
    instance: Instance
    var_meta: list[tuple]  # ("assign", a, l) | ("charge", a, l, t) | ("imbalance", l, t)
    phi_index: dict[tuple[str, str], int]
    charge_index: dict[tuple[str, str, int], int]
    m_index: dict[tuple[str, int], int]
    c: np.ndarray  # objective (maximize), integer-valued cents
    A: sparse.csr_matrix  # A x <= b
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    is_binary: np.ndarray
    row_tags: list[str]

    @property
    def n_vars(self) -> int:
        return len(self.var_meta)


@dataclass(frozen=True)
class Violation:
    code: str
    subject: tuple
    detail: str


@dataclass
class SolveResult:
    allocation: Allocation
    status: str
    nodes: int = 0
    runtime_s: float = 0.0


def _check_pins(instance: Instance) -> None:
    pinned = instance.pinned
    if pinned is None:
        return
    horizon = instance.time_grid.horizon_len
    loads: dict[tuple[str, int], int] = {}
    for aid, sid, t in pinned.schedule:
        if pinned.assigned.get(aid) != sid:
            raise InfeasiblePin(f"pinned slot for {aid} at {sid} without a pinned assignment")
        loads[(sid, t)] = loads.get((sid, t), 0) + 1
        if not 0 <= t < horizon:
            raise InfeasiblePin(f"pinned slot ({aid},{sid},{t}) outside the horizon")
    for aid, sid in pinned.assigned.items():
        if sid is None:
            continue
        req = instance.request(aid)
        if sid not in req.per_station:
            raise InfeasiblePin(f"pinned station {sid} not reachable for {aid}")
        acc = req.access(sid)
        st = instance.station(sid)
        slots = [t for a, s, t in pinned.schedule if a == aid and s == sid]
        for t in slots:
            if not acc.arrival <= t < acc.departure:
                raise InfeasiblePin(f"pinned slot ({aid},{sid},{t}) outside window")
        if len(slots) < acc.charge_slots_needed:
            raise InfeasiblePin(f"pinned schedule for {aid} delivers less than its demand")
        if len(slots) * st.rate + acc.battery_on_arrival > req.ev.battery_capacity:
            raise InfeasiblePin(f"pinned schedule for {aid} exceeds battery capacity")
    for (sid, t), load in loads.items():
        if load > instance.station(sid).slots:
            raise InfeasiblePin(f"pinned load {load} exceeds capacity at ({sid},{t})")


def build_model(instance: Instance) -> IpModel:
    """Assemble objective, constraint rows, and variable bounds.

    Stations outside an EV's feasible set and time points outside its window
    contribute no variables at all.  Pinned agents have every variable fixed
    to its committed value; unpinned agents cannot charge before
    instance.frozen_before (the market cannot schedule the past).
    """
    _check_pins(instance)
    horizon = instance.time_grid.horizon_len
    pinned_assigned = dict(instance.pinned.assigned) if instance.pinned else {}
    pinned_slots = instance.pinned.schedule if instance.pinned else frozenset()

    var_meta: list[tuple] = []
    phi_index: dict[tuple[str, str], int] = {}
    charge_index: dict[tuple[str, str, int], int] = {}
    m_index: dict[tuple[str, int], int] = {}
    c: list[float] = []
    lb: list[float] = []
    ub: list[float] = []

    def add_var(meta: tuple, coef: Money, lo: float, hi: float) -> int:
        idx = len(var_meta)
        var_meta.append(meta)
        c.append(float(coef))
        lb.append(lo)
        ub.append(hi)
        return idx

    # assignment variables first: branching favours them
    for req in instance.requests:
        aid = req.ev.id
        pin_station = pinned_assigned.get(aid)
        for st in instance.stations:
            if st.id not in req.feasible_stations:
                continue
            acc = req.access(st.id)
            start = acc.arrival if aid in pinned_assigned else max(acc.arrival, instance.frozen_before)
            if acc.departure - start < acc.charge_slots_needed:
                continue  # remaining window cannot fit the demand
            fixed = None
            if aid in pinned_assigned:
                fixed = 1.0 if pin_station == st.id else 0.0
            phi_index[(aid, st.id)] = add_var(
                ("assign", aid, st.id),
                acc.valuation,
                fixed if fixed is not None else 0.0,
                fixed if fixed is not None else 1.0,
            )
    for req in instance.requests:
        aid = req.ev.id
        for st in instance.stations:
            if (aid, st.id) not in phi_index:
                continue
            acc = req.access(st.id)
            start = acc.arrival if aid in pinned_assigned else max(acc.arrival, instance.frozen_before)
            for t in range(start, acc.departure):
                fixed = None
                if aid in pinned_assigned:
                    fixed = 1.0 if (aid, st.id, t) in pinned_slots else 0.0
                charge_index[(aid, st.id, t)] = add_var(
                    ("charge", aid, st.id, t),
                    -st.slot_elec_cost,
                    fixed if fixed is not None else 0.0,
                    fixed if fixed is not None else 1.0,
                )
    n_binary = len(var_meta)
    for st in instance.stations:
        for t in range(horizon):
            m_index[(st.id, t)] = add_var(
                ("imbalance", st.id, t), -instance.imbalance_unit_cost, 0.0, np.inf
            )

    rows: list[tuple[dict[int, float], float, str]] = []  # (coefs, rhs, tag)

    for req in instance.requests:
        aid = req.ev.id
        phis = {sid: i for (a, sid), i in phi_index.items() if a == aid}
        if phis:
            rows.append(({i: 1.0 for i in phis.values()}, 1.0, f"single-station:{aid}"))
        for sid, pi in phis.items():
            acc = req.access(sid)
            st = instance.station(sid)
            charges = [i for (a, s, t), i in charge_index.items() if a == aid and s == sid]
            # charge at least the demand when assigned
            coefs = {pi: float(acc.charge_slots_needed)}
            for i in charges:
                coefs[i] = -1.0
            rows.append((coefs, 0.0, f"min-charge:{aid}:{sid}"))
            # never exceed the battery
            rows.append(
                (
                    {i: float(st.rate) for i in charges},
                    float(req.ev.battery_capacity - acc.battery_on_arrival),
                    f"battery-capacity:{aid}:{sid}",
                )
            )
            # no charging at a station the EV is not assigned to
            for i in charges:
                rows.append(({i: 1.0, pi: -1.0}, 0.0, f"assignment-link:{aid}:{sid}"))
    for st in instance.stations:
        for t in range(horizon):
            cell = [i for (a, s, tt), i in charge_index.items() if s == st.id and tt == t]
            if cell:
                rows.append(({i: 1.0 for i in cell}, float(st.slots), f"station-capacity:{st.id}:{t}"))
            dem = st.expected_demand[t] if t < len(st.expected_demand) else 0
            mi = m_index[(st.id, t)]
            pos = {i: 1.0 for i in cell}
            pos[mi] = -1.0
            rows.append((pos, float(dem), f"imbalance-lb-pos:{st.id}:{t}"))
            neg = {i: -1.0 for i in cell}
            neg[mi] = -1.0
            rows.append((neg, float(-dem), f"imbalance-lb-neg:{st.id}:{t}"))

    n = len(var_meta)
    data, ri, ci = [], [], []
    b = np.empty(len(rows))
    tags = []
    for r, (coefs, rhs, tag) in enumerate(rows):
        for i, v in coefs.items():
            ri.append(r)
            ci.append(i)
            data.append(v)
        b[r] = rhs
        tags.append(tag)
    A = sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), n))
    is_binary = np.zeros(n, dtype=bool)
    is_binary[:n_binary] = True
    return IpModel(
        instance=instance,
        var_meta=var_meta,
        phi_index=phi_index,
        charge_index=charge_index,
        m_index=m_index,
        c=np.array(c),
        A=A,
        b=b,
        lb=np.array(lb),
        ub=np.array(ub),
        is_binary=is_binary,
        row_tags=tags,
    )


def evaluate_objective(
    instance: Instance,
    assigned: dict[str, Optional[str]],
    schedule: frozenset[tuple[str, str, int]],
) -> Money:
    """Exact integer objective: valuations minus electricity minus imbalance."""
    total = 0
    for req in instance.requests:
        sid = assigned.get(req.ev.id)
        if sid is not None:
            total += req.access(sid).valuation
    loads: dict[tuple[str, int], int] = {}
    for _, sid, t in schedule:
        total -= instance.station(sid).slot_elec_cost
        loads[(sid, t)] = loads.get((sid, t), 0) + 1
    for st in instance.stations:
        for t in range(instance.time_grid.horizon_len):
            dem = st.expected_demand[t] if t < len(st.expected_demand) else 0
            total -= abs(loads.get((st.id, t), 0) - dem) * instance.imbalance_unit_cost
    return total


def _allocation_from_x(model: IpModel, x: np.ndarray) -> Allocation:
    assigned: dict[str, Optional[str]] = {r.ev.id: None for r in model.instance.requests}
    for (aid, sid), i in model.phi_index.items():
        if x[i] > 0.5:
            assigned[aid] = sid
    schedule = frozenset(
        (aid, sid, t) for (aid, sid, t), i in model.charge_index.items() if x[i] > 0.5
    )
    obj = evaluate_objective(model.instance, assigned, schedule)
    return Allocation(assigned=assigned, schedule=schedule, objective=obj)


def _baseline_allocation(model: IpModel) -> Allocation:
    """Pins-only allocation: always feasible once pins validate."""
    inst = model.instance
    assigned: dict[str, Optional[str]] = {r.ev.id: None for r in inst.requests}
    schedule: frozenset[tuple[str, str, int]] = frozenset()
    if inst.pinned is not None:
        for aid, sid in inst.pinned.assigned.items():
            if aid in assigned:
                assigned[aid] = sid
        schedule = inst.pinned.schedule
    return Allocation(assigned=assigned, schedule=schedule, objective=evaluate_objective(inst, assigned, schedule))


def _repair_candidate(model: IpModel, x: np.ndarray) -> Optional[Allocation]:
    """Greedy feasible allocation from a fractional LP point: keep rounded
    assignments, give each kept EV exactly its needed slots, preferring cells
    below the expected demand.  Incumbent heuristic only; never replaces the
    exhaustive search."""
    inst = model.instance
    pinned_agents = set(inst.pinned.assigned) if inst.pinned else set()
    assigned: dict[str, Optional[str]] = {r.ev.id: None for r in inst.requests}
    loads: dict[tuple[str, int], int] = {}
    schedule: set[tuple[str, str, int]] = set()
    if inst.pinned is not None:
        for aid, sid in inst.pinned.assigned.items():
            if aid in assigned:
                assigned[aid] = sid
        for aid, sid, t in inst.pinned.schedule:
            schedule.add((aid, sid, t))
            loads[(sid, t)] = loads.get((sid, t), 0) + 1
    for (aid, sid), i in model.phi_index.items():
        if aid not in pinned_agents and x[i] > 0.5:
            assigned[aid] = sid
    for req in inst.requests:
        aid = req.ev.id
        sid = assigned[aid]
        if sid is None or aid in pinned_agents:
            continue
        acc = req.access(sid)
        st = inst.station(sid)
        needed = acc.charge_slots_needed
        if needed * st.rate + acc.battery_on_arrival > req.ev.battery_capacity:
            assigned[aid] = None
            continue

        def slot_key(t: int) -> tuple:
            dem = st.expected_demand[t] if t < len(st.expected_demand) else 0
            below = 0 if loads.get((st.id, t), 0) < dem else 1
            return (below, -x[model.charge_index[(aid, st.id, t)]], t)

        window = range(max(acc.arrival, inst.frozen_before), acc.departure)
        chosen = []
        for t in sorted(window, key=slot_key):
            if loads.get((st.id, t), 0) < st.slots:
                chosen.append(t)
                if len(chosen) == needed:
                    break
        if len(chosen) < needed:
            assigned[aid] = None
            continue
        for t in chosen:
            schedule.add((aid, st.id, t))
            loads[(st.id, t)] = loads.get((st.id, t), 0) + 1
    froz = frozenset(schedule)
    return Allocation(
        assigned=assigned, schedule=froz, objective=evaluate_objective(inst, assigned, froz)
    )


def solve_exact(model: IpModel, time_limit: float = 300.0, engine: str = "highs") -> SolveResult:
    """Solve the 0-1 program to proven optimality.

    engine="highs" (default) hands the model to HiGHS branch-and-cut with a
    zero MIP gap; engine="bnb" runs the built-in best-bound branch-and-bound
    over LP relaxations.  Both re-evaluate the incumbent in exact integer
    arithmetic, are deterministic for a fixed input, and report
    feasible_time_limited when the clock runs out before the proof.
    """
    if engine == "highs":
        return _solve_highs(model, time_limit)
    if engine == "bnb":
        return _solve_bnb(model, time_limit)
    raise ValueError(f"unknown engine {engine!r}")


def _solve_highs(model: IpModel, time_limit: float) -> SolveResult:
    start = time.monotonic()
    incumbent = _baseline_allocation(model)
    if model.n_vars == 0:
        return SolveResult(incumbent, STATUS_OPTIMAL, nodes=0, runtime_s=time.monotonic() - start)
    res = milp(
        -model.c,
        constraints=LinearConstraint(model.A, -np.inf, model.b),
        integrality=model.is_binary.astype(int),
        bounds=Bounds(model.lb, model.ub),
        options={"mip_rel_gap": 0.0, "time_limit": time_limit},
    )
    runtime = time.monotonic() - start
    nodes = int(getattr(res, "mip_node_count", 0) or 0)
    if res.status == 2:
        raise Infeasible("model infeasible: contradictory pinned commitments")
    if res.status == 1:  # hit the time limit
        if res.x is not None:
            cand = _allocation_from_x(model, np.round(res.x))
            if cand.objective > incumbent.objective:
                incumbent = cand
        return SolveResult(incumbent, STATUS_TIME_LIMITED, nodes, runtime)
    if res.status != 0 or res.x is None:
        raise RuntimeError(f"MILP solve failed with status {res.status}: {res.message}")
    allocation = _allocation_from_x(model, np.round(res.x))
    assert abs(-res.fun - allocation.objective) < 0.5, "solver objective drifted from exact evaluation"
    return SolveResult(allocation, STATUS_OPTIMAL, nodes, runtime)


def _solve_bnb(model: IpModel, time_limit: float) -> SolveResult:
    """Best-bound branch-and-bound: branch on the fractional assignment
    variable closest to 0.5 (then charge variables), ties to the lowest
    variable index."""
    start = time.monotonic()
    incumbent = _baseline_allocation(model)
    inc_obj = incumbent.objective
    n = model.n_vars
    if n == 0:
        return SolveResult(incumbent, STATUS_OPTIMAL, nodes=0, runtime_s=time.monotonic() - start)

    neg_c = -model.c
    base_bounds = np.column_stack([model.lb, model.ub])
    heap: list[tuple[float, int, tuple[tuple[int, float], ...]]] = [(-math.inf, 0, ())]
    seq = 1
    nodes = 0

    while heap:
        if time.monotonic() - start > time_limit:
            return SolveResult(incumbent, STATUS_TIME_LIMITED, nodes, time.monotonic() - start)
        neg_parent_bound, _, fixings = heapq.heappop(heap)
        if math.isfinite(neg_parent_bound) and math.floor(-neg_parent_bound + _INT_TOL) <= inc_obj:
            continue
        bounds = base_bounds.copy()
        for i, v in fixings:
            bounds[i, 0] = v
            bounds[i, 1] = v
        res = linprog(neg_c, A_ub=model.A, b_ub=model.b, bounds=bounds, method="highs")
        nodes += 1
        if res.status == 2:  # infeasible
            if not fixings:
                raise Infeasible("model infeasible: contradictory pinned commitments")
            continue
        if res.status != 0:
            raise RuntimeError(f"LP relaxation failed with status {res.status}: {res.message}")
        lp_val = -res.fun
        bound_int = math.floor(lp_val + _INT_TOL)
        if bound_int <= inc_obj:
            continue
        x = res.x
        frac = np.where(model.is_binary & (np.minimum(x, 1.0 - x) > _INT_TOL))[0]
        if frac.size == 0:
            cand = _allocation_from_x(model, np.round(x))
            if cand.objective > inc_obj:
                incumbent, inc_obj = cand, cand.objective
            continue
        cand = _repair_candidate(model, x)
        if cand is not None and cand.objective > inc_obj:
            incumbent, inc_obj = cand, cand.objective
            if bound_int <= inc_obj:
                continue
        n_phi = len(model.phi_index)
        phi_frac = frac[frac < n_phi]
        pool = phi_frac if phi_frac.size else frac
        scores = np.abs(x[pool] - 0.5)
        var = int(pool[int(np.argmin(scores))])  # argmin keeps the lowest index on ties
        for val in (1.0, 0.0):
            heapq.heappush(heap, (-lp_val, seq, fixings + ((var, val),)))
            seq += 1

    return SolveResult(incumbent, STATUS_OPTIMAL, nodes, time.monotonic() - start)


def validate_allocation(instance: Instance, allocation: Allocation) -> list[Violation]:
    """Check every scheduling constraint; empty list means the allocation is valid."""
    violations: list[Violation] = []
    horizon = instance.time_grid.horizon_len
    known = {r.ev.id: r for r in instance.requests}

    stations_used: dict[str, set[str]] = {}
    for aid, sid, t in allocation.schedule:
        stations_used.setdefault(aid, set()).add(sid)
    for aid, used in stations_used.items():
        if len(used) > 1:
            violations.append(
                Violation("single-station", (aid,), f"{aid} charges at {sorted(used)}")
            )

    for aid, sid in allocation.assigned.items():
        if sid is None:
            continue
        req = known.get(aid)
        if req is None:
            violations.append(Violation("unknown-agent", (aid,), f"{aid} not in instance"))
            continue
        if sid not in req.feasible_stations:
            violations.append(
                Violation("infeasible-station", (aid, sid), f"{sid} not feasible for {aid}")
            )
            continue
        acc = req.access(sid)
        st = instance.station(sid)
        slots = [t for a, s, t in allocation.schedule if a == aid and s == sid]
        if len(slots) < acc.charge_slots_needed:
            violations.append(
                Violation(
                    "min-charge",
                    (aid, sid),
                    f"{aid} gets {len(slots)} slots, needs {acc.charge_slots_needed}",
                )
            )
        if len(slots) * st.rate + acc.battery_on_arrival > req.ev.battery_capacity:
            violations.append(
                Violation("battery-capacity", (aid, sid), f"{aid} overfills its battery")
            )

    for aid, sid, t in allocation.schedule:
        if allocation.assigned.get(aid) != sid:
            violations.append(
                Violation("unassigned-charging", (aid, sid, t), f"{aid} charges at {sid} unassigned")
            )
            continue
        acc = known[aid].per_station.get(sid)
        if acc is None or not (acc.arrival <= t < acc.departure) or not (0 <= t < horizon):
            violations.append(
                Violation("outside-window", (aid, sid, t), f"slot {t} outside {aid}'s window at {sid}")
            )

    loads: dict[tuple[str, int], int] = {}
    for _, sid, t in allocation.schedule:
        loads[(sid, t)] = loads.get((sid, t), 0) + 1
    for (sid, t), load in loads.items():
        if load > instance.station(sid).slots:
            violations.append(
                Violation(
                    "station-capacity",
                    (sid, t),
                    f"{load} EVs at ({sid},{t}) with {instance.station(sid).slots} chargers",
                )
            )
    return violations


def write_lp(model: IpModel, path: str) -> None:
    """Dump the model in LP text format for cross-checking with external solvers."""
    names = []
    for meta in model.var_meta:
        names.append("_".join(str(p) for p in meta).replace("-", "_"))
    lines = ["Maximize", " obj: " + " + ".join(
        f"{model.c[i]:g} {names[i]}" for i in range(model.n_vars) if model.c[i]
    ).replace("+ -", "- "), "Subject To"]
    coo = model.A.tocoo()
    row_terms: dict[int, list[str]] = {}
    for r, i, v in zip(coo.row, coo.col, coo.data):
        row_terms.setdefault(r, []).append(f"{v:+g} {names[i]}")
    for r, tag in enumerate(model.row_tags):
        terms = " ".join(row_terms.get(r, ["0"]))
        lines.append(f" r{r}_{tag.replace(':', '_').replace('-', '_')}: {terms} <= {model.b[r]:g}")
    lines.append("Bounds")
    for i in range(model.n_vars):
        hi = "+inf" if np.isinf(model.ub[i]) else f"{model.ub[i]:g}"
        lines.append(f" {model.lb[i]:g} <= {names[i]} <= {hi}")
    lines.append("Binaries")
    lines.append(" " + " ".join(names[i] for i in range(model.n_vars) if model.is_binary[i]))
    lines.append("End")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
