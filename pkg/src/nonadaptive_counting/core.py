"""Domain types and angle/count arithmetic shared by every estimation stage.

The coin model: with hidden Grover angle ``theta* = arcsin(sqrt(K/N))``, a
coin of rotation parameter ``r >= 1`` lands heads with probability
``sin^2(floor_odd(r) * theta*)`` and costs ``(floor_odd(r) - 1) / 2`` queries
per flip.
"""

from __future__ import annotations

import functools
import hashlib
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

HALF_PI = 0.5 * math.pi
_ENTRY_RECORD = np.dtype([("r", "<f8"), ("t", "<i8")])


class InvalidArgument(ValueError):
    """An argument is outside the documented domain of an operation."""


class ResourceLimit(RuntimeError):
    """A construction would exceed a configured size ceiling."""


@dataclass(frozen=True)
class OracleInstance:
    """Hidden problem instance: ``K`` marked items out of ``N``."""

    N: int
    K: int

    def __post_init__(self) -> None:
        if self.N < 1:
            raise InvalidArgument(f"N must be positive, got {self.N}")
        if not 0 <= self.K <= self.N:
            raise InvalidArgument(f"K must lie in [0, N]; got K={self.K}, N={self.N}")

    @property
    def theta_star(self) -> float:
        return angle_from_count(self.N, self.K)


class QueryCost(NamedTuple):
    exact: int
    bound: float


def floor_odd(r: float) -> int:
    """Largest odd integer not exceeding ``r`` (requires ``r >= 1``)."""
    if not r >= 1:
        raise InvalidArgument(f"floor_odd needs r >= 1, got {r!r}")
    f = math.floor(r)
    return f if f % 2 else f - 1


def floor_odd_array(r) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.size and not np.all(r >= 1):
        raise InvalidArgument("floor_odd needs every r >= 1")
    f = np.floor(r).astype(np.int64)
    return f - (f % 2 == 0)


def approx_within(a: float, b: float, eta: float) -> bool:
    """True iff ``1/(1+eta) <= a/b <= 1+eta``.

    Evaluated as ``max/min <= 1+eta`` so the relation is exactly symmetric
    in floating point.
    """
    if not (a > 0 and b > 0 and eta > 0):
        raise InvalidArgument(f"approx_within needs positive inputs, got {a!r}, {b!r}, {eta!r}")
    hi, lo = (a, b) if a >= b else (b, a)
    return hi / lo <= 1 + eta


def approx_within_array(a, b, eta) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.maximum(a, b) / np.minimum(a, b) <= 1 + eta


def coin_bias(r: float, theta_star: float) -> float:
    if not 0 <= theta_star <= HALF_PI:
        raise InvalidArgument(f"theta_star must lie in [0, pi/2], got {theta_star!r}")
    return math.sin(floor_odd(r) * theta_star) ** 2


def angle_from_count(N: int, K: int) -> float:
    if N < 1:
        raise InvalidArgument(f"N must be positive, got {N}")
    if not 0 <= K <= N:
        raise InvalidArgument(f"K must lie in [0, N]; got K={K}, N={N}")
    return math.asin(math.sqrt(K / N))


def count_from_angle(N: int, theta: float) -> tuple[float, int]:
    """Return ``(kappa, K_round)`` with ``kappa = N sin^2(theta)``.

    ``K_round`` is the nearest integer to ``kappa``, ties away from zero.
    """
    if not 0 <= theta <= HALF_PI:
        raise InvalidArgument(f"theta must lie in [0, pi/2], got {theta!r}")
    kappa = N * math.sin(theta) ** 2
    return kappa, math.floor(kappa + 0.5)


def arcsin_factor(k: float, kprime: float, N: int) -> float:
    """Ratio ``arcsin(sqrt(kprime/N)) / arcsin(sqrt(k/N))``."""
    if not (0 < k <= N and 0 < kprime <= N):
        raise InvalidArgument(f"need 0 < k, kprime <= N; got k={k}, kprime={kprime}, N={N}")
    return math.asin(math.sqrt(kprime / N)) / math.asin(math.sqrt(k / N))


class GroverSchedule:
    """Paired rotation parameters and flip counts.

    Entry ``i`` means: flip the coin of rotation ``rotations[i]`` exactly
    ``flips[i]`` times. ``labels`` is an optional integer array with one row
    per entry (e.g. the ``(i, j)`` grid cell an entry serves).
    """

    __slots__ = ("rotations", "flips", "labels", "_digest")

    def __init__(self, rotations, flips, labels=None) -> None:
        rotations = np.ascontiguousarray(rotations, dtype=np.float64).reshape(-1)
        flips = np.ascontiguousarray(flips, dtype=np.int64).reshape(-1)
        if rotations.shape != flips.shape:
            raise InvalidArgument("rotations and flips must have equal length")
        if rotations.size and not (np.all(rotations >= 1) and np.all(flips >= 1)):
            raise InvalidArgument("every rotation must be >= 1 and every flip count >= 1")
        if labels is not None:
            labels = np.asarray(labels)
            if len(labels) != len(rotations):
                raise InvalidArgument("labels must have one row per entry")
        rotations.flags.writeable = False
        flips.flags.writeable = False
        self.rotations = rotations
        self.flips = flips
        self.labels = labels
        self._digest = None

    @classmethod
    def from_pairs(cls, rotations: Sequence[float], flips: Sequence[int]) -> "GroverSchedule":
        return cls(np.asarray(rotations, dtype=np.float64), np.asarray(flips, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.rotations)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GroverSchedule):
            return NotImplemented
        return np.array_equal(self.rotations, other.rotations) and np.array_equal(self.flips, other.flips)

    __hash__ = None

    def __repr__(self) -> str:
        return f"GroverSchedule(entries={len(self)})"

    def update_digest(self, h) -> None:
        rec = np.empty(len(self), dtype=_ENTRY_RECORD)
        rec["r"] = self.rotations
        rec["t"] = self.flips
        h.update(rec.tobytes())

    def digest(self) -> str:
        """SHA-256 over the entries as packed little-endian (float64 r, int64 t) records."""
        if self._digest is None:
            h = hashlib.sha256()
            self.update_digest(h)
            self._digest = h.hexdigest()
        return self._digest


class CompositeSchedule:
    """A schedule made of independently built segments, materialized on demand.

    Performing it is equivalent to performing the concatenation of all
    segments; segments are rebuilt from ``build_segment`` whenever asked for,
    so schedules with 10^8 entries never have to be held in memory.
    """

    def __init__(self, lengths: Sequence[int], build_segment: Callable[[int], GroverSchedule],
                 cache_size: int = 4) -> None:
        self.lengths = np.asarray(lengths, dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.lengths)]).astype(np.int64)
        self._build = build_segment
        self.segment = functools.lru_cache(maxsize=cache_size)(self._checked_segment)
        self._cost: QueryCost | None = None
        self._digest: str | None = None

    def _checked_segment(self, k: int) -> GroverSchedule:
        seg = self._build(k)
        if len(seg) != self.lengths[k]:
            raise AssertionError(f"segment {k} has {len(seg)} entries, expected {self.lengths[k]}")
        return seg

    @property
    def n_segments(self) -> int:
        return len(self.lengths)

    def __len__(self) -> int:
        return int(self.offsets[-1])

    def __repr__(self) -> str:
        return f"{type(self).__name__}(segments={self.n_segments}, entries={len(self)})"

    def iter_segments(self):
        for k in range(self.n_segments):
            yield self._build(k)

    def query_cost(self) -> QueryCost:
        if self._cost is None:
            exact, bound = 0, 0.0
            for seg in self.iter_segments():
                c = query_cost(seg)
                exact += c.exact
                bound += c.bound
            self._cost = QueryCost(exact, bound)
        return self._cost

    def digest(self) -> str:
        """Same digest as the fully concatenated :class:`GroverSchedule` would have."""
        if self._digest is None:
            h = hashlib.sha256()
            for seg in self.iter_segments():
                seg.update_digest(h)
            self._digest = h.hexdigest()
        return self._digest

    def materialize(self) -> GroverSchedule:
        segs = list(self.iter_segments())
        if not segs:
            return GroverSchedule([], [])
        return GroverSchedule(np.concatenate([s.rotations for s in segs]),
                              np.concatenate([s.flips for s in segs]))


def query_cost(schedule: GroverSchedule | CompositeSchedule) -> QueryCost:
    """Exact query charge ``sum t (floor_odd(r) - 1)/2`` and the bound ``sum r t / 2``."""
    if isinstance(schedule, CompositeSchedule):
        return schedule.query_cost()
    if len(schedule) == 0:
        return QueryCost(0, 0.0)
    per_flip = (floor_odd_array(schedule.rotations) - 1) // 2
    flips = schedule.flips
    if int(per_flip.max()) * int(flips.sum()) < 2**62:
        exact = int(np.dot(per_flip, flips))
    else:
        exact = sum(int(q) * int(t) for q, t in zip(per_flip, flips))
    bound = 0.5 * float(np.dot(schedule.rotations, flips.astype(np.float64)))
    return QueryCost(exact, bound)


class ScheduleOutcome:
    """Per-entry coin results: ``successes[i]`` heads out of ``flips[i]``."""

    __slots__ = ("successes", "flips")

    def __init__(self, successes, flips) -> None:
        self.successes = np.asarray(successes, dtype=np.int64)
        self.flips = np.asarray(flips, dtype=np.int64)
        if self.successes.shape != self.flips.shape:
            raise InvalidArgument("successes and flips must have equal length")
        if np.any(self.successes < 0) or np.any(self.successes > self.flips):
            raise InvalidArgument("successes must lie in [0, flips]")

    def __len__(self) -> int:
        return len(self.flips)

    @property
    def p_hat(self) -> np.ndarray:
        return self.successes / self.flips

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScheduleOutcome):
            return NotImplemented
        return np.array_equal(self.successes, other.successes) and np.array_equal(self.flips, other.flips)

    __hash__ = None
