"""Market-based EV to charging station scheduling.

Exact 0-1 integer-program allocation, fixed-price (Coop) and VCG pricing,
and periodic online market clearing, plus seeded scenario generation and an
experiment harness CLI.
"""

__version__ = "0.1.0"

from .model import (
    MONEY_SCALE,
    Allocation,
    EvRequest,
    EvType,
    Instance,
    PricingOutcome,
    Station,
    StationAccess,
    TimeGrid,
    imbalance_cost,
    utility,
    valuation,
)
from .transport import RoadNetwork, Route, TimeCostParams, build_requests, shortest_route
from .allocator import (
    STATUS_OPTIMAL,
    STATUS_TIME_LIMITED,
    IpModel,
    SolveResult,
    build_model,
    solve_exact,
    validate_allocation,
)
from .bruteforce import solve_bruteforce
from .pricing import budget, calibrate_incr, price_coop, price_vcg
from .online import ClearingSchedule, OnlineResult, run_online
from .scenario import GenParams, generate, perturb_reports

__all__ = [
    "MONEY_SCALE",
    "Allocation",
    "ClearingSchedule",
    "EvRequest",
    "EvType",
    "GenParams",
    "Instance",
    "IpModel",
    "OnlineResult",
    "PricingOutcome",
    "RoadNetwork",
    "Route",
    "SolveResult",
    "Station",
    "StationAccess",
    "STATUS_OPTIMAL",
    "STATUS_TIME_LIMITED",
    "TimeCostParams",
    "TimeGrid",
    "budget",
    "build_model",
    "build_requests",
    "calibrate_incr",
    "generate",
    "imbalance_cost",
    "perturb_reports",
    "price_coop",
    "price_vcg",
    "run_online",
    "shortest_route",
    "solve_bruteforce",
    "solve_exact",
    "utility",
    "validate_allocation",
    "valuation",
]
