"""Fine estimation of the Grover angle given a factor-1.11 starting guess.

One fixed schedule covers a grid of rotations ``s[i, j] = u[i] + a[j]``. For
any two candidate angles that are not already close, some cell puts them
about pi/8 apart and in the same quadrant, so a single coin decides which
candidate to drop. A knockout tournament over a geometric grid of candidate
angles then reuses the same coins for every match-up.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    GroverSchedule,
    InvalidArgument,
    QueryCost,
    ResourceLimit,
    ScheduleOutcome,
    approx_within,
    floor_odd,
    query_cost,
)
from .oracle import ExactCoin, binomial_tail_above, binomial_tail_at_most

ROW_RATIO = 1.01
TARGET_SEPARATION = math.pi / 8
U_CEILING_COEF = 1.2 * math.pi
OFFSET_DIVISOR = 4.8
OFFSET_STEPS = math.ceil(2 * math.log(1.2) / math.log(ROW_RATIO))
SEPARATION_SLACK = 0.5
NODE_STEP = 0.001
NODE_BAND = 1.11
VOID_DIVISOR = 6.1
RIGOROUS_A = 14000
MAX_GRID_ROWS = 200_000
_QUARTER = 0.5 * math.pi
_TWO_PI = 2 * math.pi
_PAIR_CHUNK = 65536


class PreconditionViolation(ValueError):
    """Inputs fall outside the hypotheses an operation relies on."""


class NoQualifyingCell(PreconditionViolation):
    """No offset column puts the two angles in one quadrant at the right separation."""


class MatchResult(enum.IntEnum):
    REJECT_FIRST = 0
    REJECT_SECOND = 1
    VOID = 2


@dataclass(frozen=True)
class FineParams:
    theta_prime: float
    eps_prime: float
    delta_prime: float
    a_const: float = RIGOROUS_A
    practical_factor: float = 1.0

    def __post_init__(self) -> None:
        if not self.theta_prime > 0:
            raise InvalidArgument(f"theta_prime must be positive, got {self.theta_prime}")
        if not 0 < self.eps_prime <= 1:
            raise InvalidArgument(f"eps_prime must lie in (0, 1], got {self.eps_prime}")
        if not 0 < self.delta_prime <= 1:
            raise InvalidArgument(f"delta_prime must lie in (0, 1], got {self.delta_prime}")
        if not self.a_const > 0:
            raise InvalidArgument(f"a_const must be positive, got {self.a_const}")
        if not 0 < self.practical_factor <= 1:
            raise InvalidArgument(f"practical_factor must lie in (0, 1], got {self.practical_factor}")


with np.errstate(over="ignore"):
    _ROW_POWERS = np.power(ROW_RATIO, np.arange(MAX_GRID_ROWS + 1, dtype=np.float64))


def rows_needed(target, max_rows: int = MAX_GRID_ROWS):
    """Minimal ``L`` with ``1.01**L >= target`` (vectorized), read off one shared power table."""
    L = np.searchsorted(_ROW_POWERS, target, side="left")
    worst = int(np.max(L))
    if worst > max_rows:
        raise ResourceLimit(f"rotation grid needs L={worst} rows (limit {max_rows})")
    return L


def _minimal_power(ratio: float, target: float, limit: int) -> np.ndarray:
    """``ratio**arange(0..n)`` where ``n`` is minimal with ``ratio**n >= target``."""
    if target <= 1:
        return np.ones(1)
    guess = math.ceil(math.log(target) / math.log(ratio)) + 2
    if guess > limit:
        raise ResourceLimit(f"geometric grid needs about {guess} terms (limit {limit})")
    powers = np.power(ratio, np.arange(guess + 1, dtype=np.float64))
    n = int(np.argmax(powers >= target))
    return powers[: n + 1]


@dataclass(frozen=True, eq=False)
class RotationGrid:
    u: np.ndarray
    a: np.ndarray
    theta_prime: float
    eps_prime: float

    @property
    def L(self) -> int:
        return len(self.u) - 1

    @property
    def C(self) -> int:
        return len(self.a) - 2

    @property
    def s(self) -> np.ndarray:
        return self.u[:, None] + self.a[None, :]

    @property
    def u_ceiling(self) -> float:
        return U_CEILING_COEF / (self.theta_prime * self.eps_prime)


def build_rotation_grid(params: FineParams, max_rows: int = MAX_GRID_ROWS) -> RotationGrid:
    L = int(rows_needed(U_CEILING_COEF / (params.theta_prime * params.eps_prime), max_rows))
    u = _ROW_POWERS[: L + 1]
    a = np.empty(OFFSET_STEPS + 2)
    a[0] = 0.0
    a[1] = math.pi / (OFFSET_DIVISOR * params.theta_prime)
    for j in range(2, len(a)):
        a[j] = ROW_RATIO * a[j - 1]
    return RotationGrid(u, a, params.theta_prime, params.eps_prime)


def fine_schedule_length(params: FineParams, max_rows: int = MAX_GRID_ROWS) -> int:
    L = int(rows_needed(U_CEILING_COEF / (params.theta_prime * params.eps_prime), max_rows))
    return (L + 1) * (OFFSET_STEPS + 2)


def row_flips(grid: RotationGrid, params: FineParams) -> np.ndarray:
    """Flip count per row: ``ceil(pf * A * log2(1 / (delta' theta' eps' u_i)))``, floored at 1."""
    arg = params.delta_prime * params.theta_prime * params.eps_prime * grid.u
    raw = params.practical_factor * params.a_const * -np.log2(arg)
    if np.any(raw <= 0):
        warnings.warn("flip count formula is non-positive for some rows; clamping to 1 flip",
                      RuntimeWarning, stacklevel=2)
    return np.maximum(np.ceil(raw), 1).astype(np.int64)


def build_fine_schedule(grid: RotationGrid, params: FineParams, labels: bool = True) -> GroverSchedule:
    """Row-major entries ``(s[i, j], T_i)``; labels are the ``(i, j)`` cells."""
    rows, cols = len(grid.u), len(grid.a)
    cells = None
    if labels:
        ii, jj = np.divmod(np.arange(rows * cols), cols)
        cells = np.stack([ii, jj], axis=1)
    return GroverSchedule(grid.s.ravel(), np.repeat(row_flips(grid, params), cols), labels=cells)


def fine_schedule_cost(grid: RotationGrid, params: FineParams) -> QueryCost:
    """Query cost of :func:`build_fine_schedule` without materializing it."""
    T = row_flips(grid, params)
    ncols = len(grid.a)
    row_sums = ncols * grid.u + grid.a.sum()
    # (floor_odd(s) - 1) / 2 == floor((floor(s) + 1) / 2) - 1
    if (grid.u[-1] + grid.a[-1]) * ncols < 2.0**53:
        # integers below 2^53 are exact in float64, so every step here is exact
        half = np.add.outer(grid.u, grid.a)
        np.floor(half, out=half)
        half += 1
        half *= 0.5
        np.floor(half, out=half)
        per_row = half.sum(axis=1).astype(np.int64) - ncols
    else:
        per_row = np.array([sum((math.floor(x) + 1) // 2 for x in row.tolist()) - ncols for row in grid.s],
                           dtype=object)
    if per_row.dtype != object and int(per_row.max()) * int(T.sum()) < 2**62:
        exact = int(np.dot(per_row, T))
    else:
        exact = sum(int(q) * int(t) for q, t in zip(per_row, T))
    return QueryCost(exact, 0.5 * float(np.dot(row_sums, T.astype(np.float64))))


@dataclass(frozen=True, eq=False)
class CoinTable:
    """Coin results of the fine schedule laid out on the ``(i, j)`` grid."""

    successes: np.ndarray
    flips: np.ndarray
    rotations: np.ndarray

    @classmethod
    def from_outcome(cls, grid: RotationGrid, outcome: ScheduleOutcome) -> "CoinTable":
        shape = (len(grid.u), len(grid.a))
        succ = outcome.successes.reshape(shape)
        return cls(succ, outcome.flips.reshape(shape)[:, 0].copy(), grid.s)

    @property
    def p_hat(self) -> np.ndarray:
        return self.successes / self.flips[:, None]


def split_index(eta: float, grid: RotationGrid) -> int:
    """Row ``i`` with ``u_i * eta <= pi/8 < u_{i+1} * eta``."""
    if not eta > 0:
        raise PreconditionViolation(f"eta must be positive, got {eta}")
    i = math.floor(math.log(TARGET_SEPARATION / eta) / math.log(ROW_RATIO))
    if i < 0 or i > grid.L:
        raise PreconditionViolation(f"split index {i} outside [0, {grid.L}] for eta={eta}")
    u = grid.u
    if i + 1 <= grid.L and u[i + 1] * eta <= TARGET_SEPARATION:
        i += 1
    if u[i] * eta > TARGET_SEPARATION:
        i -= 1
    if i < 0:
        raise PreconditionViolation(f"no row puts eta={eta} below pi/8")
    return i


def quadrant(x: float) -> int:
    q = int((x % _TWO_PI) // _QUARTER)
    return min(q, 3)


def quadrant_array(x) -> np.ndarray:
    q = np.floor_divide(np.mod(x, _TWO_PI), _QUARTER).astype(np.int64)
    return np.minimum(q, 3)


def refine_pair(theta0: float, theta1: float, grid: RotationGrid) -> tuple[int, int]:
    """Cell ``(i, j)`` putting ``s*theta0`` and ``s*theta1`` in one quadrant about pi/8 apart."""
    if not 0 < theta0 < theta1:
        raise PreconditionViolation(f"need 0 < theta0 < theta1, got {theta0}, {theta1}")
    eta = theta1 - theta0
    i = split_index(eta, grid)
    for j in range(len(grid.a)):
        s = grid.u[i] + grid.a[j]
        if quadrant(s * theta0) == quadrant(s * theta1) and approx_within(s * eta, TARGET_SEPARATION, SEPARATION_SLACK):
            return i, j
    raise NoQualifyingCell(f"no column qualifies for theta0={theta0}, theta1={theta1} (row {i})")


def refine_pairs(theta0: np.ndarray, theta1: np.ndarray, grid: RotationGrid):
    """Vectorized :func:`refine_pair`; returns ``(i, j, ok)`` arrays."""
    theta0 = np.asarray(theta0, dtype=np.float64)
    theta1 = np.asarray(theta1, dtype=np.float64)
    eta = theta1 - theta0
    u, L = grid.u, grid.L
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.floor(np.log(TARGET_SEPARATION / eta) / math.log(ROW_RATIO))
    in_range = (eta > 0) & (raw >= 0) & (raw <= L)
    i = np.clip(np.nan_to_num(raw, nan=0.0, posinf=L, neginf=0), 0, L).astype(np.int64)
    nxt = np.minimum(i + 1, L)
    i = i + ((i + 1 <= L) & (u[nxt] * eta <= TARGET_SEPARATION))
    down = u[i] * eta > TARGET_SEPARATION
    i = i - down
    in_range &= i >= 0
    i = np.maximum(i, 0)
    s = u[i][:, None] + grid.a[None, :]
    sep = s * eta[:, None]
    same = quadrant_array(s * theta0[:, None]) == quadrant_array(s * theta1[:, None])
    close = np.maximum(sep, TARGET_SEPARATION) / np.minimum(sep, TARGET_SEPARATION) <= 1 + SEPARATION_SLACK
    good = same & close
    j = np.argmax(good, axis=1)
    ok = in_range & good.any(axis=1)
    return i, j, ok


def distinguish(theta0: float, theta1: float, coins: CoinTable, grid: RotationGrid,
                eps_prime: float) -> MatchResult:
    if approx_within(theta0, theta1, eps_prime / VOID_DIVISOR):
        return MatchResult.VOID
    swapped = theta0 > theta1
    lo, hi = (theta1, theta0) if swapped else (theta0, theta1)
    i, j = refine_pair(lo, hi, grid)
    s = grid.u[i] + grid.a[j]
    q_lo, q_hi = math.sin(s * lo) ** 2, math.sin(s * hi) ** 2
    threshold = 0.5 * (q_lo + q_hi)
    heads_high = coins.successes[i, j] > threshold * coins.flips[i]
    reject_lo = heads_high if q_lo < q_hi else not heads_high
    if reject_lo != swapped:
        return MatchResult.REJECT_FIRST
    return MatchResult.REJECT_SECOND


class CoinComparator:
    """Vectorized distinguisher over a fixed coin table."""

    def __init__(self, coins: CoinTable, grid: RotationGrid, eps_prime: float) -> None:
        self.coins = coins
        self.grid = grid
        self.eps_prime = eps_prime

    def __call__(self, theta_a: np.ndarray, theta_b: np.ndarray) -> np.ndarray:
        theta_a = np.asarray(theta_a, dtype=np.float64)
        theta_b = np.asarray(theta_b, dtype=np.float64)
        out = np.full(len(theta_a), MatchResult.VOID, dtype=np.int8)
        hi_ratio = np.maximum(theta_a, theta_b) / np.minimum(theta_a, theta_b)
        live = ~(hi_ratio <= 1 + self.eps_prime / VOID_DIVISOR)
        if not np.any(live):
            return out
        a, b = theta_a[live], theta_b[live]
        swapped = a > b
        lo, hi = np.where(swapped, b, a), np.where(swapped, a, b)
        i, j, ok = refine_pairs(lo, hi, self.grid)
        if not np.all(ok):
            k = int(np.flatnonzero(~ok)[0])
            raise NoQualifyingCell(f"no column qualifies for theta0={lo[k]}, theta1={hi[k]}")
        s = self.grid.u[i] + self.grid.a[j]
        q_lo, q_hi = np.sin(s * lo) ** 2, np.sin(s * hi) ** 2
        threshold = 0.5 * (q_lo + q_hi)
        heads_high = self.coins.successes[i, j] > threshold * self.coins.flips[i]
        reject_lo = np.where(q_lo < q_hi, heads_high, ~heads_high)
        out[live] = np.where(reject_lo != swapped, MatchResult.REJECT_FIRST, MatchResult.REJECT_SECOND)
        return out


Comparator = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class NodeGrid:
    """Candidate angles ``theta' (1 + .001 eps')^i`` for ``-V <= i <= V``, then byes.

    Bye angles are NaN; positions are in ascending-angle order with byes last.
    """

    angles: np.ndarray
    index: np.ndarray
    is_bye: np.ndarray
    V: int
    theta_prime: float
    eps_prime: float

    def __len__(self) -> int:
        return len(self.angles)

    @property
    def n_real(self) -> int:
        return 2 * self.V + 1

    @property
    def byes(self) -> int:
        return len(self) - self.n_real


def build_node_grid(params: FineParams) -> NodeGrid:
    step = 1 + NODE_STEP * params.eps_prime
    V = len(_minimal_power(step, NODE_BAND, 10**8)) - 1
    real = params.theta_prime * np.power(step, np.arange(-V, V + 1, dtype=np.float64))
    n = 1 << (len(real) - 1).bit_length()
    angles = np.full(n, np.nan)
    angles[: len(real)] = real
    index = np.arange(-V, n - V)
    is_bye = np.zeros(n, dtype=bool)
    is_bye[len(real):] = True
    return NodeGrid(angles, index, is_bye, V, params.theta_prime, params.eps_prime)


@dataclass
class TournamentResult:
    theta: float
    index: int
    failure: bool
    phase2_entrants: int
    matches: int
    alive: np.ndarray


def _resolve(first: np.ndarray, second: np.ndarray, nodes: NodeGrid, compare: Comparator) -> np.ndarray:
    bye = nodes.is_bye
    res = np.empty(len(first), dtype=np.int8)
    fb, sb = bye[first], bye[second]
    res[sb] = MatchResult.REJECT_SECOND
    res[fb & ~sb] = MatchResult.REJECT_FIRST
    real = ~fb & ~sb
    if np.any(real):
        res[real] = compare(nodes.angles[first[real]], nodes.angles[second[real]])
    return res


def run_tournament(nodes: NodeGrid, coins: CoinTable | None = None, grid: RotationGrid | None = None,
                   eps_prime: float | None = None, comparator: Comparator | None = None) -> TournamentResult:
    """Knockout rounds pairing sorted position ``k`` with ``n/2 + k``; on the
    first void match-up, every remaining entrant plays every other one.
    """
    if comparator is None:
        comparator = CoinComparator(coins, grid, eps_prime if eps_prime is not None else nodes.eps_prime)
    alive = np.arange(len(nodes))
    matches = 0
    while len(alive) > 1:
        half = len(alive) // 2
        first, second = alive[:half], alive[half:]
        res = _resolve(first, second, nodes, comparator)
        winners = np.where(res == MatchResult.REJECT_FIRST, second, first)
        voids = np.flatnonzero(res == MatchResult.VOID)
        if voids.size:
            k0 = int(voids[0])
            matches += k0 + 1
            entrants = np.sort(np.concatenate([winners[:k0], first[k0:], second[k0:]]))
            return _phase_two(entrants, nodes, comparator, matches)
        matches += half
        alive = np.sort(winners)
    mask = np.zeros(len(nodes), dtype=bool)
    mask[alive] = True
    w = int(alive[0])
    return TournamentResult(float(nodes.angles[w]), int(nodes.index[w]), False, 0, matches, mask)


def _phase_two(entrants: np.ndarray, nodes: NodeGrid, compare: Comparator, matches: int) -> TournamentResult:
    m = len(entrants)
    rejected = nodes.is_bye[entrants].copy()
    ia, ib = np.triu_indices(m, 1)
    both_real = ~rejected[ia] & ~rejected[ib]
    ia, ib = ia[both_real], ib[both_real]
    for start in range(0, len(ia), _PAIR_CHUNK):
        a, b = ia[start:start + _PAIR_CHUNK], ib[start:start + _PAIR_CHUNK]
        res = compare(nodes.angles[entrants[a]], nodes.angles[entrants[b]])
        rejected[a[res == MatchResult.REJECT_FIRST]] = True
        rejected[b[res == MatchResult.REJECT_SECOND]] = True
    matches += len(ia)
    survivors = np.flatnonzero(~rejected)
    failure = survivors.size == 0
    if failure:
        w = int(entrants[np.flatnonzero(~nodes.is_bye[entrants])[0]])
    else:
        w = int(entrants[survivors[0]])
    mask = np.zeros(len(nodes), dtype=bool)
    mask[entrants[~rejected]] = True
    return TournamentResult(float(nodes.angles[w]), int(nodes.index[w]), failure, m, matches, mask)


@dataclass
class FineEstimate:
    theta_est: float
    failure: bool
    queries: int
    tournament: TournamentResult | None = None


def fine_postprocess(outcome: ScheduleOutcome, grid: RotationGrid, params: FineParams) -> TournamentResult:
    coins = CoinTable.from_outcome(grid, outcome)
    return run_tournament(build_node_grid(params), coins, grid, params.eps_prime)


def estimate_fine(oracle, params: FineParams) -> FineEstimate:
    """Build the fine schedule from ``params`` alone, perform it once, run the tournament."""
    grid = build_rotation_grid(params)
    schedule = build_fine_schedule(grid, params)
    before = oracle.read_query_counter()
    outcome = oracle.perform(schedule)
    result = fine_postprocess(outcome, grid, params)
    return FineEstimate(result.theta, result.failure, oracle.read_query_counter() - before, result)


@dataclass(frozen=True)
class RejectionAnalysis:
    """Exact chance the distinguisher rejects the side ``theta*`` sits next to."""

    probability: float
    hoeffding_bound: float
    margin: float
    margin_ok: bool
    cell: tuple[int, int]
    flips: int


def true_side_rejection(theta0: float, theta1: float, theta_star: float, side: int,
                        grid: RotationGrid, params: FineParams) -> RejectionAnalysis:
    """Probability (over the coin flips) that ``distinguish`` rejects ``theta_side``.

    ``margin`` is ``|p(s) - q_side|``; the Hoeffding bound
    ``exp(-2 T 0.005^2)`` applies whenever it is at most 0.005.
    """
    i, j = refine_pair(theta0, theta1, grid)
    s = grid.u[i] + grid.a[j]
    q0, q1 = math.sin(s * theta0) ** 2, math.sin(s * theta1) ** 2
    threshold = 0.5 * (q0 + q1)
    T = int(row_flips(grid, params)[i])
    coin = ExactCoin(T, min(1.0, math.sin(floor_odd(s) * theta_star) ** 2))
    rejected_if_high = (side == 0) == (q0 < q1)
    prob = binomial_tail_above(coin, threshold) if rejected_if_high else binomial_tail_at_most(coin, threshold)
    margin = abs(coin.bias - (q0 if side == 0 else q1))
    return RejectionAnalysis(prob, math.exp(-2 * T * 0.005**2), margin, margin <= 0.005, (i, j), T)
