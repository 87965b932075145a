"""Nonadaptive approximate counting with a simulated Grover oracle.

Every quantum query is replaced by its classical equivalent: a coin of
parameter ``r`` lands heads with probability ``sin^2(floor_odd(r) theta*)``
and costs ``(floor_odd(r) - 1) / 2`` queries. An estimator fixes its whole
list of ``(r, t)`` entries before seeing any result, then reads off ``K``.
"""

from .core import GroverSchedule, InvalidArgument, QueryCost, ResourceLimit, query_cost
from .driver import CountEstimate, DriverConfig, build_master_schedule, pad_instance, run_nonadaptive, run_two_round
from .oracle import SimulatedOracle

__all__ = [
    "CountEstimate",
    "DriverConfig",
    "GroverSchedule",
    "InvalidArgument",
    "QueryCost",
    "ResourceLimit",
    "SimulatedOracle",
    "build_master_schedule",
    "pad_instance",
    "query_cost",
    "run_nonadaptive",
    "run_two_round",
]
