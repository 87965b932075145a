"""End-to-end approximate counting from one fixed Grover schedule.

The master schedule is the stage-1 geometric schedule followed by one fine
schedule for every ``theta'`` on a ratio-1.001 grid. Post-processing picks the
grid value closest to the stage-1 estimate and converts that block's
tournament winner into a count.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import (
    CompositeSchedule,
    InvalidArgument,
    QueryCost,
    ResourceLimit,
    count_from_angle,
    query_cost,
)
from .stage1 import NoThresholdCrossed, Stage1Config, build_stage1_schedule, extract_constant_estimate
from .stage2 import (
    OFFSET_STEPS,
    RIGOROUS_A,
    U_CEILING_COEF,
    FineParams,
    build_fine_schedule,
    build_rotation_grid,
    estimate_fine,
    fine_postprocess,
    fine_schedule_cost,
    rows_needed,
)

# The constant-factor stage reads theta* off the first coin to reach 1/3 and
# is only accurate while theta* is small: with noise-free coins it leaves the
# 1.1 band once K/N' exceeds about 2^-10.25. Padding by 2^12 keeps every
# K <= N below that.
PRACTICAL_PAD = 2**12
RIGOROUS_PAD = 2**40
# Calibrated on N = 2^14 with the harness; see README for the calibration table.
PRACTICAL_A = 14000
PRACTICAL_FACTOR = 0.0012
MAX_ENTRIES = 4 * 10**9
MODES = ("practical", "rigorous")


def default_grid_cap(pad_factor: int) -> float:
    """``1.1 arcsin(sqrt(1/pad))``: covers every ``theta*`` of a padded instance with room for the 1.11 band."""
    return 1.1 * math.asin(math.sqrt(1 / pad_factor))


@dataclass(frozen=True)
class DriverConfig:
    """Accuracy target plus the constants that shape the master schedule.

    Unset constants take the defaults of ``mode``: practical mode pads by
    ``2^12`` and uses the calibrated flip factor; rigorous mode pads by
    ``2^40`` and uses full flip counts. Unless given, the ``theta'`` grid cap
    follows the padding, ``1.1 arcsin(sqrt(1/pad))``, which is
    ``1.1 arcsin(2^-20)`` in rigorous mode.
    """

    eps: float
    delta: float
    mode: str = "practical"
    pad_factor: int | None = None
    grid_cap: float | None = None
    theta_grid_ratio: float = 1.001
    a_const: float | None = None
    practical_factor: float | None = None
    max_entries: int = MAX_ENTRIES

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise InvalidArgument(f"mode must be one of {MODES}, got {self.mode!r}")
        practical = self.mode == "practical"
        defaults = {
            "pad_factor": PRACTICAL_PAD if practical else RIGOROUS_PAD,
            "a_const": PRACTICAL_A if practical else RIGOROUS_A,
            "practical_factor": PRACTICAL_FACTOR if practical else 1.0,
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if self.grid_cap is None:
            object.__setattr__(self, "grid_cap", default_grid_cap(self.pad_factor))
        if not 0 < self.eps <= 1:
            raise InvalidArgument(f"eps must lie in (0, 1], got {self.eps}")
        if not 0 < self.delta < 1:
            raise InvalidArgument(f"delta must lie in (0, 1), got {self.delta}")
        pf = self.pad_factor
        if pf < 1 or pf & (pf - 1):
            raise InvalidArgument(f"pad_factor must be a power of two >= 1, got {pf}")
        if not self.theta_grid_ratio > 1:
            raise InvalidArgument("theta_grid_ratio must exceed 1")
        if not 0 < self.practical_factor <= 1:
            raise InvalidArgument(f"practical_factor must lie in (0, 1], got {self.practical_factor}")

    @property
    def stage1(self) -> Stage1Config:
        return Stage1Config(delta=self.delta, practical_factor=self.practical_factor)

    def with_overrides(self, **kw) -> "DriverConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass
class CountEstimate:
    theta_est: float
    kappa: float
    k_hat: int
    queries_exact: int
    queries_bound: float
    failure: bool
    theta_tilde: float = math.nan
    theta_prime: float = math.nan
    round_queries: tuple[int, ...] = field(default_factory=tuple)


def pad_instance(N: int, cfg: DriverConfig) -> int:
    Np = N * cfg.pad_factor
    if N < 1:
        raise InvalidArgument(f"N must be positive, got {N}")
    if Np >= 2**63:
        raise InvalidArgument(f"padded domain {Np} does not fit in a signed 64-bit integer")
    return Np


def theta_grid(n_padded: int, cfg: DriverConfig) -> np.ndarray:
    """``arcsin(sqrt(1/N')) * ratio^k`` for ``k = 0, 1, ...`` through the first value at or above the cap."""
    base = math.asin(math.sqrt(1 / n_padded))
    if not cfg.grid_cap > base:
        raise InvalidArgument(f"grid cap {cfg.grid_cap} must exceed arcsin(sqrt(1/N'))={base}")
    n = math.ceil(math.log(cfg.grid_cap / base) / math.log(cfg.theta_grid_ratio)) + 3
    values = base * np.power(cfg.theta_grid_ratio, np.arange(n, dtype=np.float64))
    k = int(np.argmax(values >= cfg.grid_cap))
    return values[: k + 1]


def reduced_eps(theta_prime: float, n_padded: int, eps: float) -> float:
    """``max(eps, 1/(2 N' sin^2 theta'))`` capped at 1: no point resolving K finer than 1."""
    return min(1.0, max(eps, 1 / (2 * n_padded * math.sin(theta_prime) ** 2)))


def fine_params_for(theta_prime: float, n_padded: int, cfg: DriverConfig) -> FineParams:
    return FineParams(theta_prime, reduced_eps(theta_prime, n_padded, cfg.eps), cfg.delta / 2,
                      cfg.a_const, cfg.practical_factor)


class MasterSchedule(CompositeSchedule):
    """Segment 0 is the stage-1 schedule; segment ``k+1`` is the fine schedule for ``thetas[k]``."""

    def __init__(self, n_padded: int, cfg: DriverConfig) -> None:
        self.n_padded = n_padded
        self.cfg = cfg
        self.stage1 = build_stage1_schedule(n_padded, cfg.stage1)
        self.thetas = theta_grid(n_padded, cfg)
        self.fine_params = [fine_params_for(t, n_padded, cfg) for t in self.thetas]
        eps_primes = np.array([p.eps_prime for p in self.fine_params])
        rows = rows_needed(U_CEILING_COEF / (self.thetas * eps_primes)) + 1
        lengths = np.concatenate([[len(self.stage1)], rows * (OFFSET_STEPS + 2)])
        total = int(lengths.sum())
        if total > cfg.max_entries:
            raise ResourceLimit(f"master schedule would have {total} entries (limit {cfg.max_entries})")
        super().__init__(lengths, self._build_segment)
        self._block_costs: list[QueryCost] | None = None

    def block_costs(self) -> list[QueryCost]:
        """Query cost of every fine block, computed without building the entries."""
        if self._block_costs is None:
            self._block_costs = [fine_schedule_cost(build_rotation_grid(p), p) for p in self.fine_params]
        return self._block_costs

    def query_cost(self) -> QueryCost:
        if self._cost is None:
            c = query_cost(self.stage1)
            exact, bound = c.exact, c.bound
            for b in self.block_costs():
                exact += b.exact
                bound += b.bound
            self._cost = QueryCost(exact, bound)
        return self._cost

    def _build_segment(self, k: int):
        if k == 0:
            return self.stage1
        params = self.fine_params[k - 1]
        return build_fine_schedule(build_rotation_grid(params), params, labels=False)


@functools.lru_cache(maxsize=16)
def _cached_master(n_padded: int, cfg: DriverConfig) -> MasterSchedule:
    return MasterSchedule(n_padded, cfg)


def build_master_schedule(n_padded: int, cfg: DriverConfig, cache: bool = True) -> MasterSchedule:
    """The whole quantum plan; depends on ``(N', cfg)`` only."""
    if not 1 / n_padded <= cfg.eps:
        raise InvalidArgument(f"eps must be at least 1/N' = {1 / n_padded}")
    return _cached_master(n_padded, cfg) if cache else MasterSchedule(n_padded, cfg)


def select_grid_index(thetas: np.ndarray, theta_tilde: float) -> int:
    """Grid position closest to ``theta_tilde`` in ratio; ties go to the smaller value."""
    return int(np.argmin(np.abs(np.log(thetas / theta_tilde))))


def _stage1_failure(outcome, queries: int, bound: float, rounds=()) -> CountEstimate:
    # all-zero coins at every rotation: the documented K = 0 answer
    if not np.any(outcome.successes):
        return CountEstimate(0.0, 0.0, 0, queries, bound, False, round_queries=rounds)
    return CountEstimate(math.nan, math.nan, 0, queries, bound, True, round_queries=rounds)


def _finish(n_padded: int, theta_est: float, **kw) -> CountEstimate:
    kappa, k_hat = count_from_angle(n_padded, min(theta_est, 0.5 * math.pi))
    return CountEstimate(theta_est, kappa, k_hat, **kw)


def run_nonadaptive(oracle, cfg: DriverConfig, postprocess_all: bool = False) -> CountEstimate:
    """Perform the master schedule once and post-process.

    Only the block that the selection step keeps is post-processed unless
    ``postprocess_all`` is set; the result is the same either way.
    """
    n_padded = oracle.domain_size
    master = build_master_schedule(n_padded, cfg)
    cost = master.query_cost()
    outcome = oracle.perform(master)
    first = outcome.segment(0)
    try:
        theta_tilde = extract_constant_estimate(first, cfg.stage1)
    except NoThresholdCrossed:
        return _stage1_failure(first, cost.exact, cost.bound, (cost.exact,))
    k = select_grid_index(master.thetas, theta_tilde)
    if postprocess_all:
        results = [_postprocess_block(master, outcome, b) for b in range(len(master.thetas))]
        result = results[k]
    else:
        result = _postprocess_block(master, outcome, k)
    return _finish(n_padded, result.theta, queries_exact=cost.exact, queries_bound=cost.bound,
                   failure=result.failure, theta_tilde=theta_tilde, theta_prime=float(master.thetas[k]),
                   round_queries=(cost.exact,))


def _postprocess_block(master: MasterSchedule, outcome, k: int):
    params = master.fine_params[k]
    return fine_postprocess(outcome.segment(k + 1), build_rotation_grid(params), params)


def run_two_round(oracle, cfg: DriverConfig) -> CountEstimate:
    """Stage 1 alone, then one fine schedule centred on its estimate."""
    n_padded = oracle.domain_size
    stage1 = build_stage1_schedule(n_padded, cfg.stage1)
    c1 = query_cost(stage1)
    first = oracle.perform(stage1)
    try:
        theta_tilde = extract_constant_estimate(first, cfg.stage1)
    except NoThresholdCrossed:
        return _stage1_failure(first, c1.exact, c1.bound, (c1.exact,))
    params = fine_params_for(theta_tilde, n_padded, cfg)
    c2 = query_cost(build_fine_schedule(build_rotation_grid(params), params, labels=False))
    fine = estimate_fine(oracle, params)
    return _finish(n_padded, fine.theta_est, queries_exact=c1.exact + fine.queries,
                   queries_bound=c1.bound + c2.bound, failure=fine.failure, theta_tilde=theta_tilde,
                   theta_prime=theta_tilde, round_queries=(c1.exact, fine.queries))
