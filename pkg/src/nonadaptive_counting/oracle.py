"""Simulated Grover coin source with query accounting, plus exact binomial tails.

Randomness: every schedule entry gets its own stream. Entry ``e`` of the
``c``-th schedule performed by an oracle seeded with ``seed`` draws one
uniform ``u = SplitMix64(key(seed, c) + (e + 1) * golden)`` and returns the
inverse binomial CDF at ``u``. Outcomes therefore do not depend on which
entries are sampled, or in what order, which lets huge composite schedules be
sampled lazily with results identical to eager sampling.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import stats

from .core import (
    CompositeSchedule,
    GroverSchedule,
    InvalidArgument,
    OracleInstance,
    ScheduleOutcome,
    floor_odd_array,
    query_cost,
)

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, call: int) -> np.uint64:
    base = np.array([seed & _MASK64], dtype=np.uint64)
    with np.errstate(over="ignore"):
        k = _mix64(base ^ _mix64(np.array([(call + 1) & _MASK64], dtype=np.uint64) * _GOLDEN))
    return k[0]


def entry_uniforms(seed: int, call: int, start: int, count: int) -> np.ndarray:
    """Uniforms in (0, 1) for entries ``start .. start+count-1`` of call ``call``."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = _mix64(stream_key(seed, call) + (idx + np.uint64(1)) * _GOLDEN)
    return ((z >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53


def coin_biases(rotations: np.ndarray, theta_star: float) -> np.ndarray:
    return np.sin(floor_odd_array(rotations) * theta_star) ** 2


def sample_entries(schedule: GroverSchedule, theta_star: float, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-CDF binomial draws, one uniform per entry."""
    p = np.clip(coin_biases(schedule.rotations, theta_star), 0.0, 1.0)
    t = schedule.flips
    out = np.where(p >= 1.0, t, 0).astype(np.int64)
    live = (p > 0.0) & (p < 1.0)
    if np.any(live):
        draws = stats.binom.ppf(uniforms[live], t[live], p[live])
        out[live] = np.clip(draws, 0, t[live]).astype(np.int64)
    return out


class CompositeOutcome:
    """Outcome of a :class:`CompositeSchedule`; segments are sampled on first access."""

    def __init__(self, schedule: CompositeSchedule, theta_star: float, seed: int, call: int) -> None:
        self.schedule = schedule
        self._theta = theta_star
        self._seed = seed
        self._call = call
        self.segment = functools.lru_cache(maxsize=8)(self._sample_segment)

    def _sample_segment(self, k: int) -> ScheduleOutcome:
        seg = self.schedule.segment(k)
        u = entry_uniforms(self._seed, self._call, int(self.schedule.offsets[k]), len(seg))
        return ScheduleOutcome(sample_entries(seg, self._theta, u), seg.flips)

    def __len__(self) -> int:
        return len(self.schedule)

    def materialize(self) -> ScheduleOutcome:
        parts = [self._sample_segment(k) for k in range(self.schedule.n_segments)]
        return ScheduleOutcome(np.concatenate([p.successes for p in parts]),
                               np.concatenate([p.flips for p in parts]))


class SimulatedOracle:
    """Grover coin source for a hidden ``(N, K)``.

    Only ``domain_size`` is public; estimation code interacts through
    :meth:`perform` and never sees ``K``. Single-owner mutable state.
    """

    def __init__(self, N: int, K: int, seed: int = 0) -> None:
        self._instance = OracleInstance(N, K)
        self.seed = int(seed)
        self.queries_used = 0
        self.classical_queries = 0
        self._calls = 0

    @property
    def domain_size(self) -> int:
        return self._instance.N

    def perform(self, schedule):
        """Perform a schedule, charging its exact query cost."""
        call = self._calls
        self._calls += 1
        theta = self._instance.theta_star
        self.queries_used += query_cost(schedule).exact
        if isinstance(schedule, CompositeSchedule):
            return CompositeOutcome(schedule, theta, self.seed, call)
        u = entry_uniforms(self.seed, call, 0, len(schedule))
        return ScheduleOutcome(sample_entries(schedule, theta, u), schedule.flips)

    def sample_until(self, successes: int, max_draws: int) -> int:
        """Classical sampling: draw uniform ``x`` until ``successes`` marked
        items have been seen, one query per draw.

        Returns the number of draws, or ``-1`` if more than ``max_draws``
        would be needed, in which case ``max_draws`` queries are charged.
        """
        if successes < 1 or max_draws < 1:
            raise InvalidArgument("successes and max_draws must be positive")
        call = self._calls
        self._calls += 1
        mu = self._instance.K / self._instance.N
        draws = -1
        if mu > 0:
            u = entry_uniforms(self.seed, call, 0, 1)[0]
            failures = 0 if mu >= 1 else int(stats.nbinom.ppf(u, successes, mu))
            draws = successes + failures
        if draws < 0 or draws > max_draws:
            self.classical_queries += max_draws
            return -1
        self.classical_queries += draws
        return draws

    def read_query_counter(self) -> int:
        return self.queries_used

    def reset_query_counter(self) -> None:
        self.queries_used = 0
        self.classical_queries = 0


def perform_schedule(oracle: SimulatedOracle, schedule):
    return oracle.perform(schedule)


@dataclass(frozen=True)
class ExactCoin:
    flips: int
    bias: float

    def __post_init__(self) -> None:
        if self.flips < 1:
            raise InvalidArgument(f"flips must be positive, got {self.flips}")
        if not 0 <= self.bias <= 1:
            raise InvalidArgument(f"bias must lie in [0, 1], got {self.bias}")


def tail_cutoff(threshold: float, flips: int) -> int:
    """Largest success count ``k`` with ``k / flips <= threshold``, in exact arithmetic."""
    return math.floor(Fraction(threshold) * flips)


def binomial_tail_above(coin: ExactCoin, threshold: float) -> float:
    """``P[Bin(t, p) / t > threshold]``."""
    if not 0 <= threshold <= 1:
        raise InvalidArgument(f"threshold must lie in [0, 1], got {threshold}")
    k = tail_cutoff(threshold, coin.flips)
    if k >= coin.flips:
        return 0.0
    return float(stats.binom.sf(k, coin.flips, coin.bias))


def binomial_tail_at_most(coin: ExactCoin, threshold: float) -> float:
    """``P[Bin(t, p) / t <= threshold]``, computed directly rather than as ``1 - tail``."""
    if not 0 <= threshold <= 1:
        raise InvalidArgument(f"threshold must lie in [0, 1], got {threshold}")
    k = tail_cutoff(threshold, coin.flips)
    if k >= coin.flips:
        return 1.0
    return float(stats.binom.cdf(k, coin.flips, coin.bias))
