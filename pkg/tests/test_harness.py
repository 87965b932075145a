import dataclasses
import math

import pytest

from nonadaptive_counting.core import InvalidArgument
from nonadaptive_counting.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    HarnessIOError,
    TrialRecord,
    _failure_table,
    calibrate_constants,
    cell_seeds,
    classical_baseline,
    format_value,
    read_records,
    record_to_row,
    row_to_record,
    run_trials,
    scaling_sweep,
    summarize,
    summarize_csv,
    trial_success,
    write_records,
)
from nonadaptive_counting.oracle import SimulatedOracle

SMALL = dict(instances=[(1024, 1), (1024, 37)], eps=(1.0, 0.5), delta=0.2, trials=3, base_seed=11)


def _strip_wall(text):
    return [line.rsplit(",", 1)[0] for line in text.splitlines()]


def test_trial_success_rule():
    assert trial_success(0, 0, 0.5) and not trial_success(1, 0, 0.5)
    assert not trial_success(0, 3, 0.5)
    assert trial_success(15, 10, 0.5) and not trial_success(16, 10, 0.5)


def test_format_value():
    assert format_value(True) == "true" and format_value(False) == "false"
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(12) == "12"


def test_csv_roundtrip_is_byte_identical(tmp_path):
    records = run_trials(ExperimentConfig(**SMALL))
    path = tmp_path / "r.csv"
    write_records(path, records)
    raw = path.read_bytes()
    assert raw.startswith((",".join(CSV_COLUMNS) + "\n").encode())
    assert b"\r" not in raw
    back = read_records(path)
    assert back == records
    write_records(tmp_path / "again.csv", back)
    assert (tmp_path / "again.csv").read_bytes() == raw
    assert row_to_record(record_to_row(records[0])) == records[0]


def test_read_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidArgument):
        read_records(path)
    with pytest.raises(HarnessIOError):
        read_records(tmp_path / "missing.csv")


def test_runs_are_deterministic(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    run_trials(cfg, tmp_path / "a.csv")
    run_trials(cfg, tmp_path / "b.csv")
    a, b = (tmp_path / "a.csv").read_text(), (tmp_path / "b.csv").read_text()
    assert _strip_wall(a) == _strip_wall(b)


def test_parallel_matches_serial():
    cfg = ExperimentConfig(**SMALL)
    strip = lambda recs: [dataclasses.replace(r, wall_millis=0.0) for r in recs]
    assert strip(run_trials(dataclasses.replace(cfg, workers=2))) == strip(run_trials(cfg))


def test_seeds_are_injective():
    cfg = ExperimentConfig(instances=[(64, k) for k in range(10)], eps=(1.0, 0.5, 0.25), trials=7, base_seed=5)
    seeds = cell_seeds(cfg)
    assert len(set(seeds.tolist())) == len(seeds) == 10 * 3 * 7
    assert seeds[0] == 5


def test_summary_from_csv_matches_memory(tmp_path):
    cfg = ExperimentConfig(**SMALL)
    records = run_trials(cfg, tmp_path / "r.csv")
    assert summarize_csv(tmp_path / "r.csv") == summarize(records)
    assert sum(c.trials for c in summarize(records).values()) == 12


def test_eps_one_queries_do_not_depend_on_k():
    cfg = ExperimentConfig(instances=[(1024, 1), (1024, 64)], eps=(1.0,), trials=2)
    queries = {r.queries_exact for r in run_trials(cfg)}
    assert len(queries) == 1


def test_config_validation_and_dict_roundtrip():
    cfg = ExperimentConfig(**SMALL)
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    for bad in (dict(SMALL, trials=0), dict(SMALL, algorithm="x"), dict(SMALL, instances=[(4, 5)]),
                dict(SMALL, eps=(2.0,))):
        with pytest.raises(InvalidArgument):
            ExperimentConfig(**bad)
    with pytest.raises(InvalidArgument):
        ExperimentConfig.from_dict(dict(cfg.to_dict(), colour=1))
    assert ExperimentConfig(**SMALL, algorithm="baseline").algorithm == "classical-baseline"


def test_scaling_sweep_shape():
    cfg = ExperimentConfig(instances=[(2**14, 1), (2**16, 1)], eps=(1.0, 0.5, 0.25, 0.125), delta=0.2,
                           pad_factor=8)
    report = scaling_sweep(cfg)
    assert report.spread <= 1.5
    by = {(r.N, r.eps): r.queries_exact for r in report.rows}
    for eps in cfg.eps:
        # four times the domain: about twice the cost, plus a logarithmic term
        assert 1.8 <= by[(2**19, eps)] / by[(2**17, eps)] <= 2.6
    with pytest.raises(InvalidArgument):
        scaling_sweep(dataclasses.replace(cfg, eps=(1.0, 0.5)))


def test_scaling_sweep_default_padding():
    # per domain size the eps dependence stays flat at the default padding too
    cfg = ExperimentConfig(instances=[(2**14, 1)], eps=(1.0, 0.5, 0.25, 0.125), delta=0.2)
    report = scaling_sweep(cfg)
    assert {r.N for r in report.rows} == {2**14 * 2**12}
    assert report.spread <= 1.5


def test_scaling_delta_dependence():
    cfg = ExperimentConfig(instances=[(2**14, 1)], eps=(1.0, 0.5, 0.25), delta=0.2, pad_factor=8)
    report = scaling_sweep(cfg, deltas=[0.2, 0.02])
    by = {(r.delta, r.eps): r.queries_exact for r in report.rows}
    for eps in cfg.eps:
        assert 1.0 < by[(0.02, eps)] / by[(0.2, eps)] < math.log(100) / math.log(10) + 0.5


def test_baseline_accuracy():
    hits = 0
    for seed in range(200):
        est = classical_baseline(SimulatedOracle(4096, 1024, seed), 0.5, 0.1)
        hits += trial_success(est.k_hat, 1024, 0.5)
    assert hits >= 180


def test_baseline_edge_cases():
    full = classical_baseline(SimulatedOracle(500, 500, 1), 0.5, 0.1)
    assert full.k_hat == 500 and not full.failure
    empty = classical_baseline(SimulatedOracle(500, 0, 1), 0.5, 0.1, max_draws=10**5)
    assert empty.k_hat == 0 and empty.failure and empty.queries_exact == 10**5


def test_baseline_cost_scales_linearly_with_n():
    def mean_cost(N):
        return sum(classical_baseline(SimulatedOracle(N, 4, s), 0.5, 0.1).queries_exact for s in range(30)) / 30
    ratio = mean_cost(2**14) / mean_cost(2**12)
    assert 3.2 <= ratio <= 4.8


def test_calibration_is_deterministic_and_detects_failure():
    cfg = ExperimentConfig(instances=[(4096, 16)], eps=(0.1,), delta=0.2, trials=20, base_seed=3)
    rows = _failure_table(cfg, 100.0, 1e-4)
    assert rows == _failure_table(cfg, 100.0, 1e-4)
    assert any(r.failure_rate > cfg.delta for r in rows)


def test_calibration_returns_safe_factor():
    cfg = ExperimentConfig(instances=[(1024, 4)], eps=(0.5,), delta=0.2, trials=10, base_seed=3)
    result = calibrate_constants(cfg, pf_low=1e-3, steps=2)
    assert result.last_safe is not None
    assert result.practical_factor == min(1.0, 2 * result.last_safe)
    assert result.table and all(r.safe for r in result.table if r.practical_factor == result.last_safe)
