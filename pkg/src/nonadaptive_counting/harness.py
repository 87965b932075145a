"""Experiment orchestration: Monte Carlo trials, scaling sweeps, calibration, baseline.

Results are flat CSV files. Columns follow :data:`CSV_COLUMNS` exactly, with a
header row, UTF-8, LF line endings and floats written with 17 significant
digits, so a parsed row serializes back to the same bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .core import InvalidArgument, approx_within, count_from_angle
from .driver import (
    CountEstimate,
    DriverConfig,
    build_master_schedule,
    pad_instance,
    run_nonadaptive,
    run_two_round,
)
from .oracle import SimulatedOracle

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("trialId", "N", "K", "eps", "delta", "mode", "algorithm", "KHat", "thetaEst",
               "queriesExact", "queriesBound", "success", "failureFlag", "seed", "wallMillis")
ALGORITHMS = ("nonadaptive", "two-round", "classical-baseline")
ALGORITHM_ALIASES = {"baseline": "classical-baseline"}
SCALING_COLUMNS = ("N", "eps", "delta", "queriesExact", "sqrtNOverEps", "ratio")
CALIBRATION_COLUMNS = ("aConst", "practicalFactor", "N", "K", "eps", "trials", "failures",
                       "failureRate", "budget", "safe")


class HarnessIOError(OSError):
    """A results or config file could not be read or written."""


def _io_error(path, exc: OSError) -> HarnessIOError:
    return HarnessIOError(f"{path}: {exc.strerror or exc}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: every ``(N, K)`` instance crossed with every ``eps``.

    Trial ``n`` (numbered across all cells in order) uses seed
    ``base_seed + n``. Unset constants fall back to the ``mode`` defaults.
    """

    instances: tuple[tuple[int, int], ...]
    eps: tuple[float, ...] = (0.5,)
    delta: float = 0.2
    mode: str = "practical"
    trials: int = 1
    base_seed: int = 0
    algorithm: str = "nonadaptive"
    a_const: float | None = None
    practical_factor: float | None = None
    pad_factor: int | None = None
    workers: int = 1
    out: str | None = None

    def __post_init__(self) -> None:
        inst = tuple((int(n), int(k)) for n, k in self.instances)
        object.__setattr__(self, "instances", inst)
        eps = (self.eps,) if isinstance(self.eps, (int, float)) else tuple(self.eps)
        object.__setattr__(self, "eps", tuple(float(e) for e in eps))
        object.__setattr__(self, "algorithm", ALGORITHM_ALIASES.get(self.algorithm, self.algorithm))
        if not inst:
            raise InvalidArgument("at least one (N, K) instance is required")
        for n, k in inst:
            if n < 1 or not 0 <= k <= n:
                raise InvalidArgument(f"invalid instance N={n}, K={k}")
        if not self.eps:
            raise InvalidArgument("at least one eps value is required")
        if self.trials < 1:
            raise InvalidArgument(f"trials must be at least 1, got {self.trials}")
        if not 0 <= self.base_seed < 2**63:
            raise InvalidArgument("base_seed must be a non-negative 63-bit integer")
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgument(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.workers < 1:
            raise InvalidArgument("workers must be at least 1")
        for e in self.eps:
            self.driver_config(e)

    def driver_config(self, eps: float) -> DriverConfig:
        return DriverConfig(eps=eps, delta=self.delta, mode=self.mode, pad_factor=self.pad_factor,
                            a_const=self.a_const, practical_factor=self.practical_factor)

    def cells(self) -> list[tuple[int, int, float]]:
        return [(n, k, e) for n, k in self.instances for e in self.eps]

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["instances"] = [list(p) for p in self.instances]
        d["eps"] = list(self.eps)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        if "instances" not in d:
            raise InvalidArgument("config needs 'instances', a list of [N, K] pairs")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InvalidArgument(str(exc)) from exc


def load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise _io_error(path, exc) from exc
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise InvalidArgument(f"{path}: config must be a JSON object")
    return data


def write_json(path, obj) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise _io_error(path, exc) from exc


# ----------------------------------------------------------------------------
# Trial records and CSV


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    N: int
    K: int
    eps: float
    delta: float
    mode: str
    algorithm: str
    k_hat: int
    theta_est: float
    queries_exact: int
    queries_bound: float
    success: bool
    failure_flag: bool
    seed: int
    wall_millis: float


_FIELD_TYPES = [int, int, int, float, float, str, str, int, float, int, float, bool, bool, int, float]


def trial_success(k_hat: int, K: int, eps: float) -> bool:
    """``k_hat`` approximates ``K`` within ``1 + eps``; zero only matches zero."""
    if K == 0 or k_hat <= 0:
        return k_hat == K
    return approx_within(k_hat, K, eps)


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def parse_value(text: str, kind):
    if kind is bool:
        if text not in ("true", "false"):
            raise InvalidArgument(f"expected true/false, got {text!r}")
        return text == "true"
    return kind(text)


def record_to_row(rec: TrialRecord) -> list[str]:
    return [format_value(v) for v in dataclasses.astuple(rec)]


def row_to_record(row: list[str]) -> TrialRecord:
    if len(row) != len(CSV_COLUMNS):
        raise InvalidArgument(f"expected {len(CSV_COLUMNS)} columns, got {len(row)}")
    return TrialRecord(*(parse_value(t, k) for t, k in zip(row, _FIELD_TYPES)))


class CsvSink:
    """Single writer for one CSV file; rows are flushed as they arrive."""

    def __init__(self, path, columns=CSV_COLUMNS) -> None:
        self.path = path
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(path, "w", encoding="utf-8", newline="")
        except OSError as exc:
            raise _io_error(path, exc) from exc
        self._writer = csv.writer(self._fh, lineterminator="\n")
        self.write(list(columns))

    def write(self, row) -> None:
        try:
            self._writer.writerow(row)
            self._fh.flush()
        except OSError as exc:
            raise _io_error(self.path, exc) from exc

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_records(path, records: Iterable[TrialRecord]) -> None:
    with CsvSink(path) as sink:
        for rec in records:
            sink.write(record_to_row(rec))


def read_records(path) -> list[TrialRecord]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise _io_error(path, exc) from exc
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise InvalidArgument(f"{path}: header does not match schema version {CSV_SCHEMA_VERSION}")
    return [row_to_record(r) for r in rows[1:]]


# ----------------------------------------------------------------------------
# Trials


def classical_baseline(oracle: SimulatedOracle, eps: float, delta: float,
                       max_draws: int | None = None) -> CountEstimate:
    """Estimate ``K`` from plain uniform samples with the stopping rule of
    Dagum, Karp, Luby and Ross.

    Draw until ``1 + (1 + e) * Y`` marked items are seen, with
    ``Y = 4 (e - 2) ln(2/delta) / e^2`` and ``e = eps / (1 + eps)``, so the
    estimate is within factor ``1 + eps`` either way with probability at
    least ``1 - delta``. If the draw cap is hit the answer is ``0`` and the
    failure flag is set.
    """
    if not 0 < eps <= 1 or not 0 < delta < 1:
        raise InvalidArgument(f"need eps in (0, 1] and delta in (0, 1); got {eps}, {delta}")
    N = oracle.domain_size
    e = eps / (1 + eps)
    upsilon = 4 * (math.e - 2) * math.log(2 / delta) / e**2
    target = math.ceil(1 + (1 + e) * upsilon)
    if max_draws is None:
        max_draws = 64 * target * N
    before = oracle.classical_queries
    draws = oracle.sample_until(target, max_draws)
    used = oracle.classical_queries - before
    if draws < 0:
        return CountEstimate(0.0, 0.0, 0, used, float(used), True)
    mu = target / draws
    theta = math.asin(math.sqrt(min(mu, 1.0)))
    kappa, k_hat = count_from_angle(N, theta)
    return CountEstimate(theta, kappa, k_hat, used, float(used), False, round_queries=(used,))


def _run_one(task) -> TrialRecord:
    trial_id, N, K, eps, cfg, algorithm, seed = task
    start = time.perf_counter()
    if algorithm == "classical-baseline":
        est = classical_baseline(SimulatedOracle(N, K, seed), eps, cfg.delta)
    else:
        oracle = SimulatedOracle(pad_instance(N, cfg), K, seed)
        est = run_nonadaptive(oracle, cfg) if algorithm == "nonadaptive" else run_two_round(oracle, cfg)
    wall = 1000 * (time.perf_counter() - start)
    return TrialRecord(trial_id, N, K, eps, cfg.delta, cfg.mode, algorithm, est.k_hat, float(est.theta_est),
                       int(est.queries_exact), float(est.queries_bound), trial_success(est.k_hat, K, eps),
                       bool(est.failure), seed, wall)


def _tasks(config: ExperimentConfig) -> Iterator[tuple]:
    trial_id = 0
    for N, K, eps in config.cells():
        cfg = config.driver_config(eps)
        for _ in range(config.trials):
            yield trial_id, N, K, eps, cfg, config.algorithm, config.base_seed + trial_id
            trial_id += 1


def run_trials(config: ExperimentConfig, csv_path=None) -> list[TrialRecord]:
    """Run every trial of ``config``; records come back (and are written) in trialId order."""
    tasks = list(_tasks(config))
    sink = CsvSink(csv_path) if csv_path is not None else None
    records = []
    try:
        if config.workers > 1:
            pool = ProcessPoolExecutor(max_workers=config.workers)
            results = pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (8 * config.workers)))
        else:
            pool = None
            results = map(_run_one, tasks)
        for rec in results:
            records.append(rec)
            if sink is not None:
                sink.write(record_to_row(rec))
    finally:
        if sink is not None:
            sink.close()
        if config.workers > 1:
            pool.shutdown()
    return records


@dataclass(frozen=True)
class CellSummary:
    N: int
    K: int
    eps: float
    algorithm: str
    trials: int
    successes: int
    failure_flags: int
    mean_queries: float
    max_queries: int

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials


def summarize(records: Iterable[TrialRecord]) -> dict[tuple, CellSummary]:
    groups: dict[tuple, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.N, r.K, r.eps, r.algorithm), []).append(r)
    out = {}
    for key, rows in groups.items():
        q = [r.queries_exact for r in rows]
        out[key] = CellSummary(*key, len(rows), sum(r.success for r in rows), sum(r.failure_flag for r in rows),
                               sum(q) / len(q), max(q))
    return out


def summarize_csv(path) -> dict[tuple, CellSummary]:
    return summarize(read_records(path))


# ----------------------------------------------------------------------------
# Scaling


@dataclass(frozen=True)
class ScalingRow:
    N: int
    eps: float
    delta: float
    queries_exact: int
    sqrt_n_over_eps: float
    ratio: float


@dataclass
class ScalingReport:
    rows: list[ScalingRow]

    @property
    def spread(self) -> float:
        """max/min of ``ratio`` across the sweep."""
        r = [row.ratio for row in self.rows]
        return max(r) / min(r)


def scaling_sweep(config: ExperimentConfig, deltas: Iterable[float] | None = None) -> ScalingReport:
    """Master-schedule query cost over ``N x eps (x delta)``; no oracle involved.

    ``N`` in each row is the padded domain the schedule is built for and
    ``ratio = queriesExact / (sqrt(N/eps) ln(1/delta))``.
    """
    if len(config.eps) < 3:
        raise InvalidArgument("a scaling sweep needs at least three eps values")
    deltas = [config.delta] if deltas is None else list(deltas)
    sizes = sorted({n for n, _ in config.instances})
    rows = []
    for N in sizes:
        for delta in deltas:
            for eps in config.eps:
                cfg = dataclasses.replace(config, delta=delta).driver_config(eps)
                Np = pad_instance(N, cfg)
                cost = build_master_schedule(Np, cfg, cache=False).query_cost().exact
                scale = math.sqrt(Np / eps)
                rows.append(ScalingRow(Np, eps, delta, cost, scale, cost / (scale * math.log(1 / delta))))
    return ScalingReport(rows)


def write_scaling(path, report: ScalingReport) -> None:
    with CsvSink(path, SCALING_COLUMNS) as sink:
        for r in report.rows:
            sink.write([format_value(v) for v in dataclasses.astuple(r)])


# ----------------------------------------------------------------------------
# Calibration


@dataclass(frozen=True)
class CalibrationRow:
    a_const: float
    practical_factor: float
    N: int
    K: int
    eps: float
    trials: int
    failures: int
    failure_rate: float
    budget: float
    safe: bool


@dataclass
class CalibrationResult:
    a_const: float
    practical_factor: float
    last_safe: float | None
    table: list[CalibrationRow] = field(default_factory=list)


def _failure_table(config: ExperimentConfig, a_const: float, pf: float) -> list[CalibrationRow]:
    trial_cfg = dataclasses.replace(config, a_const=a_const, practical_factor=pf)
    summary = summarize(run_trials(trial_cfg))
    budget = config.delta / 2
    rows = []
    for (N, K, eps, _), cell in summary.items():
        fails = cell.trials - cell.successes
        rate = fails / cell.trials
        rows.append(CalibrationRow(a_const, pf, N, K, eps, cell.trials, fails, rate, budget, rate <= budget))
    return rows


def calibrate_constants(config: ExperimentConfig, pf_low: float = 1e-4, steps: int = 6,
                        margin: float = 2.0) -> CalibrationResult:
    """Geometric bisection of the practical factor on the cells of ``config``.

    A setting is safe when every cell's failure rate is at most ``delta/2``.
    The result is the last safe factor times ``margin`` (capped at 1). The
    flip counts depend on ``A`` and the practical factor only through their
    product, so ``A`` stays at the configured value. Every setting reuses the
    same trial seeds.
    """
    if not 0 < pf_low < 1:
        raise InvalidArgument("pf_low must lie in (0, 1)")
    a_const = config.driver_config(config.eps[0]).a_const
    table: list[CalibrationRow] = []

    def safe(pf: float) -> bool:
        rows = _failure_table(config, a_const, pf)
        table.extend(rows)
        return all(r.safe for r in rows)

    lo, hi = pf_low, 1.0
    if not safe(hi):
        return CalibrationResult(a_const, 1.0, None, table)
    if safe(lo):
        hi = lo
    else:
        for _ in range(steps):
            mid = math.sqrt(lo * hi)
            if safe(mid):
                hi = mid
            else:
                lo = mid
    return CalibrationResult(a_const, min(1.0, margin * hi), hi, table)


def write_calibration(path, result: CalibrationResult) -> None:
    with CsvSink(path, CALIBRATION_COLUMNS) as sink:
        for r in result.table:
            sink.write([format_value(v) for v in dataclasses.astuple(r)])


def cell_seeds(config: ExperimentConfig) -> np.ndarray:
    return np.array([t[-1] for t in _tasks(config)], dtype=np.int64)
