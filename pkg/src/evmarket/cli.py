"""Command-line front end.

Subcommands: gen, solve, online, calibrate-incr, exp.  All deterministic
outputs (instance/allocation/summary JSON, pricing CSV, experiment CSVs) are
byte-identical for a fixed command line and seed; wall-clock measurements go
into separate files with "timing" in their name.

Exit codes for solve/online: 0 = proven optimum, 2 = time-limited incumbent
(payments may be missing because VCG refuses unproven counterfactuals),
1 = parse error or infeasibility, with a diagnostic naming the offending key
or constraint.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

from . import __version__
from .allocator import (
    STATUS_OPTIMAL,
    Infeasible,
    InfeasiblePin,
    build_model,
    solve_exact,
)
from .model import MONEY_SCALE
from .online import ClearingSchedule, run_online
from .pricing import CounterfactualNotOptimal, NoBreakeven, calibrate_incr, price_coop, price_vcg
from .scenario import GenParams, ResampleLimit, generate
from .serialize import (
    FORMAT_VERSION,
    FormatError,
    allocation_to_dict,
    dump_instance,
    load_instance,
    write_pricing_csv,
)
from . import experiments

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TIME_LIMITED = 2


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _add_gen_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-evs", type=int, default=GenParams.n_evs)
    p.add_argument("--n-stations", type=int, default=GenParams.n_stations)
    p.add_argument("--horizon", type=int, default=GenParams.horizon)
    p.add_argument("--slots", type=int, default=GenParams.slots)
    p.add_argument("--elec-cost", type=int, default=GenParams.elec_cost,
                   help="electricity cost, cents per energy unit")
    p.add_argument("--imbalance-cost", type=int, default=GenParams.imbalance_unit_cost,
                   help="imbalance penalty, cents per unit deviation")
    p.add_argument("--max-demand", type=int, default=None)
    p.add_argument("--max-park", type=int, default=None)
    p.add_argument("--flat", action="store_true",
                   help="no road network; zero travel costs")


def _gen_params(args) -> GenParams:
    return GenParams(
        n_evs=args.n_evs,
        n_stations=args.n_stations,
        horizon=args.horizon,
        slots=args.slots,
        elec_cost=args.elec_cost,
        imbalance_unit_cost=args.imbalance_cost,
        max_demand=args.max_demand,
        max_park=args.max_park,
        flat=args.flat,
    )


def cmd_gen(args) -> int:
    instance = generate(_gen_params(args), args.seed)
    dump_instance(instance, args.out)
    return EXIT_OK


def _solve_outputs(out_dir, instance, result, outcome, mechanism, extra, wall_s):
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, "allocation.json"),
                allocation_to_dict(result.allocation))
    summary = {
        "format_version": FORMAT_VERSION,
        "tool_version": __version__,
        "scale": MONEY_SCALE,
        "mechanism": mechanism,
        "status": result.status,
        "objective": result.allocation.objective,
        "serviced": len(outcome.charged) if outcome else 0,
        "budget": outcome.budget if outcome else None,
        "total_imbalance_cost": outcome.total_imbalance_cost if outcome else None,
    }
    summary.update(extra)
    _write_json(os.path.join(out_dir, "summary.json"), summary)
    if outcome is not None:
        with open(os.path.join(out_dir, "pricing.csv"), "w", newline="") as fh:
            write_pricing_csv(outcome, result.allocation, fh)
    # wall clock lives apart so everything above is reproducible byte-for-byte
    _write_json(os.path.join(out_dir, "timing.json"), {"wall_clock_s": round(wall_s, 4)})


def cmd_solve(args) -> int:
    try:
        instance = load_instance(args.instance)
    except FormatError as exc:
        print(f"error: cannot parse instance: {exc}", file=sys.stderr)
        return EXIT_ERROR
    t0 = time.perf_counter()
    try:
        result = solve_exact(build_model(instance), time_limit=args.time_limit)
    except (Infeasible, InfeasiblePin) as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_ERROR
    outcome = None
    note = {}
    code = EXIT_OK if result.status == STATUS_OPTIMAL else EXIT_TIME_LIMITED
    try:
        if args.mechanism == "vcg":
            outcome = price_vcg(instance, result.allocation)
        else:
            outcome = price_coop(instance, result.allocation, args.incr)
            note["incr"] = args.incr
    except CounterfactualNotOptimal as exc:
        note["pricing_error"] = str(exc)
        code = EXIT_TIME_LIMITED
    _solve_outputs(args.out, instance, result, outcome, args.mechanism, note,
                   time.perf_counter() - t0)
    return code


def cmd_online(args) -> int:
    try:
        instance = load_instance(args.instance)
    except FormatError as exc:
        print(f"error: cannot parse instance: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.clearing_points:
        schedule = ClearingSchedule(tuple(args.clearing_points))
    else:
        schedule = ClearingSchedule.evenly(instance.time_grid.horizon_len, args.clearings)
    t0 = time.perf_counter()
    try:
        online = run_online(
            instance, schedule, mechanism=args.mechanism, incr=args.incr,
            carryover=args.carryover,
        )
    except (Infeasible, InfeasiblePin) as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except CounterfactualNotOptimal as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TIME_LIMITED
    wall = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "events.jsonl"), "w") as fh:
        for c in online.clearings:
            fh.write(json.dumps({
                "time": c.time,
                "eligible": sorted(c.eligible),
                "committed": sorted(c.newly_committed),
                "status": c.status,
            }, sort_keys=True) + "\n")

    class _R:  # shape expected by _solve_outputs
        allocation = online.allocation
        status = ("optimal" if all(c.status in ("optimal", "no-op")
                                   for c in online.clearings)
                  else "feasible_time_limited")

    extra = {"mode": "online", "clearing_points": list(schedule.points)}
    if args.mechanism == "coop":
        extra["incr"] = args.incr
    _solve_outputs(args.out, instance, _R, online.outcome, args.mechanism, extra, wall)
    return EXIT_OK if _R.status == "optimal" else EXIT_TIME_LIMITED


def cmd_calibrate(args) -> int:
    family = [generate(_gen_params(args), args.seed + k) for k in range(args.n_instances)]
    try:
        incr = calibrate_incr(family, step=args.step)
    except NoBreakeven as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    doc = {"incr": round(incr, 6), "n_instances": args.n_instances, "seed": args.seed}
    if args.out:
        _write_json(args.out, doc)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


def cmd_exp(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    runner = experiments.RUNNERS[args.number]
    kwargs = {"reps": args.reps, "seed0": args.seed, "time_limit": args.time_limit}
    paths = runner(args.out, **kwargs)
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evmarket",
        description="EV-to-charging-station market: exact allocation, pricing, "
                    "online clearing, and experiment reports.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--time-limit", type=float, default=300.0,
                        help="per-solve time limit in seconds")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a random instance file")
    _add_gen_flags(p)
    p.add_argument("--out", default="instance.json")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("solve", parents=[common], help="solve and price one instance offline")
    p.add_argument("instance")
    p.add_argument("--mechanism", choices=("coop", "vcg"), default="vcg")
    p.add_argument("--incr", type=float, default=experiments.DEFAULT_INCR,
                   help="coop markup fraction")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("online", parents=[common], help="run periodic market clearing")
    p.add_argument("instance")
    p.add_argument("--mechanism", choices=("coop", "vcg"), default="vcg")
    p.add_argument("--incr", type=float, default=experiments.DEFAULT_INCR)
    p.add_argument("--clearings", type=int, default=5,
                   help="number of evenly spaced clearing points")
    p.add_argument("--clearing-points", type=int, nargs="+", default=None,
                   help="explicit clearing times (overrides --clearings)")
    p.add_argument("--carryover", action="store_true",
                   help="unassigned agents stay eligible at later clearings")
    p.add_argument("--out", default="out")
    p.set_defaults(func=cmd_online)

    p = sub.add_parser("calibrate-incr", parents=[common],
                       help="smallest coop markup with positive budget, "
                            "averaged over a scenario family")
    _add_gen_flags(p)
    p.add_argument("--n-instances", type=int, default=5)
    p.add_argument("--step", type=float, default=0.001)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("exp", parents=[common], help="run one of the four experiment studies")
    p.add_argument("number", type=int, choices=(1, 2, 3, 4))
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--out", default="exp_out")
    p.set_defaults(func=cmd_exp)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ResampleLimit as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
