"""Acceptance criteria 1-10 at their stated tolerances and time limits.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary.
"""

import contextlib
import io
import math
import time
from fractions import Fraction

import numpy as np

from acceptance_report import report
from nonadaptive_counting import cli
from nonadaptive_counting.core import GroverSchedule, angle_from_count, approx_within, count_from_angle, query_cost
from nonadaptive_counting.driver import DriverConfig, build_master_schedule, run_two_round
from nonadaptive_counting.harness import ExperimentConfig, run_trials, scaling_sweep, summarize
from nonadaptive_counting.oracle import SimulatedOracle
from nonadaptive_counting.stage1 import Stage1Config, build_stage1_schedule, extract_constant_estimate
from nonadaptive_counting.stage2 import (
    FineParams,
    MatchResult,
    TARGET_SEPARATION,
    build_node_grid,
    build_rotation_grid,
    quadrant,
    refine_pairs,
    run_tournament,
    split_index,
    true_side_rejection,
)


def _finish(number, title, ok, detail, start, limit):
    seconds = time.perf_counter() - start
    in_time = seconds < limit
    report(number, title, ok and in_time, detail + ("" if in_time else f", over the {limit:g} s limit"), seconds)
    assert ok, detail
    assert in_time, f"took {seconds:.2f} s, limit {limit} s"


def test_criterion_01_nonadaptivity():
    outputs, worst = set(), 0.0
    start = time.perf_counter()
    for K in (1, 17, 2048):
        t0 = time.perf_counter()
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            code = cli.main(["schedule", "--n", "4096", "--k", str(K), "--eps", "1", "--delta", "0.2",
                             "--pad-factor", "8"])
        worst = max(worst, time.perf_counter() - t0)
        assert code == 0
        outputs.add(buf.getvalue())
    ok = len(outputs) == 1 and worst < 1.0
    _finish(1, "schedule identical for K in {1, 17, 2048}", ok,
            f"{len(outputs)} distinct output(s), slowest run {worst:.2f} s", start, 3.0)


def test_criterion_02_query_accounting():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    bad = 0
    for n in range(1000):
        size = int(rng.integers(1, 30))
        kind = n % 4
        if kind == 0:
            r = 2 * rng.integers(0, 10**6, size) + 1.0
        elif kind == 1:
            r = rng.uniform(1, 1e6, size)
        elif kind == 2:
            r = 2 * rng.integers(0, 10**6, size) + 1.0
            r[rng.integers(size)] = 2 * rng.integers(1, 10**6)
        else:
            r = 2 * rng.integers(0, 10**6, size) + 1.0
            r[rng.integers(size)] += rng.uniform(0.01, 0.99)
        t = rng.integers(1, 10**6, size)
        cost = query_cost(GroverSchedule(r, t))
        half_rt = sum(Fraction(float(x)) * int(y) for x, y in zip(r, t)) / 2
        half_r1t = sum((Fraction(float(x)) - 1) * int(y) for x, y in zip(r, t)) / 2
        all_odd = all(float(x).is_integer() and int(x) % 2 == 1 for x in r)
        if not (cost.exact <= half_rt and (cost.exact == half_r1t) == all_odd):
            bad += 1
    _finish(2, "exact cost <= bound, equality pattern iff all rotations odd", bad == 0,
            f"{bad} of 1000 schedules violate", start, 1.0)


def test_criterion_03_scaling():
    start = time.perf_counter()
    cfg = ExperimentConfig(instances=[(2**14, 1)], eps=(1.0, 0.5, 0.25, 0.125), delta=0.2, pad_factor=8)
    rep = scaling_sweep(cfg)
    ratios = ", ".join(f"{r.queries_exact / r.sqrt_n_over_eps:.4g}" for r in rep.rows)
    _finish(3, "queries / sqrt(N/eps) stable over eps in {1, 1/2, 1/4, 1/8}", rep.spread <= 2,
            f"max/min {rep.spread:.4f} (ratios {ratios})", start, 60.0)


def test_criterion_04_end_to_end():
    start = time.perf_counter()
    cfg = ExperimentConfig(instances=[(2**14, k) for k in (1, 4, 16, 64)], eps=(0.5,), delta=0.2,
                           trials=200, base_seed=40_000, pad_factor=8)
    cells = summarize(run_trials(cfg))
    rates = {key[1]: c.success_rate for key, c in cells.items()}
    ok = all(r >= 0.75 for r in rates.values())
    detail = ", ".join(f"K={k}: {r:.3f}" for k, r in rates.items())
    _finish(4, "practical constants, success >= 0.75 per cell", ok, detail, start, 600.0)


def test_criterion_05_stage1_rigorous():
    start = time.perf_counter()
    cfg = Stage1Config(delta=0.1)
    N, K = 2**20 * 8, 64
    theta = math.asin(math.sqrt(K / N))
    sched = build_stage1_schedule(N, cfg)
    hits = sum(approx_within(extract_constant_estimate(SimulatedOracle(N, K, 5000 + s).perform(sched), cfg),
                             theta, 0.1) for s in range(100))
    _finish(5, "rigorous stage 1 within 1.1 of theta*", hits >= 90, f"{hits}/100 trials", start, 300.0)


def test_criterion_06_distinguisher_soundness():
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    settings = [(t, e) for t in (2.0**-40, 2.0**-30, 2.0**-21) for e in (1.0, 0.3, 0.05)]
    grids = {s: build_rotation_grid(FineParams(s[0], s[1], 0.05)) for s in settings}
    cells = excluded = violations = 0
    while cells < 500:
        theta_p, eps = settings[cells % len(settings)]
        params = FineParams(theta_p, eps, 0.05)
        a, b = np.sort(theta_p * 1.1 ** rng.uniform(-1, 1, 2))
        if approx_within(a, b, eps / 6.1):
            continue
        side = int(rng.integers(2))
        theta_star = (a, b)[side] * (1 + 0.001 * eps) ** rng.uniform(-1, 1)
        r = true_side_rejection(a, b, theta_star, side, grids[(theta_p, eps)], params)
        cells += 1
        if not r.margin_ok:
            excluded += 1
        elif r.probability > r.hoeffding_bound:
            violations += 1
    ok = excluded == 0 and violations == 0
    _finish(6, "exact true-side rejection <= exp(-2 T 0.005^2)", ok,
            f"500 cells, {violations} above the bound, {excluded} excluded by margin", start, 60.0)


def _valid_pairs(params, n, rng):
    lo, hi = params.theta_prime / 1.11, params.theta_prime * 1.11
    kept = np.empty((0, 2))
    while len(kept) < n:
        pairs = np.sort(rng.uniform(lo, hi, (4 * n, 2)), axis=1)
        kept = np.vstack([kept, pairs[pairs[:, 1] / pairs[:, 0] > 1 + params.eps_prime / 6.1]])
    return kept[:n]


def test_criterion_07_geometry():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    fails = checked = 0
    settings = [(1e-3, 0.5), (0.3, 1.0), (2e-5, 0.05), (2.0**-40, 0.01)]
    for theta_p, eps in settings:
        params = FineParams(theta_p, eps, 0.1)
        grid = build_rotation_grid(params)
        pairs = _valid_pairs(params, 2500, rng)
        checked += len(pairs)
        for a, b in pairs:
            i = split_index(b - a, grid)
            fails += not approx_within(grid.u[i] * (b - a), TARGET_SEPARATION, 0.01)
        i, j, ok = refine_pairs(pairs[:, 0], pairs[:, 1], grid)
        fails += int((~ok).sum())
        s = grid.u[i] + grid.a[j]
        for sk, a, b in zip(s, pairs[:, 0], pairs[:, 1]):
            same = quadrant(sk * a) == quadrant(sk * b)
            fails += not (same and approx_within(sk * (b - a), TARGET_SEPARATION, 0.5))
    _finish(7, "split_index and refine_pair on 10^4 valid pairs", fails == 0 and checked == 10**4,
            f"{fails} failures over {checked} pairs", start, 30.0)


def _perfect(theta_star, eps):
    def compare(a, b):
        out = np.full(len(a), MatchResult.VOID, dtype=np.int8)
        live = np.maximum(a, b) / np.minimum(a, b) > 1 + eps / 6.1
        worse_first = np.abs(np.log(a / theta_star)) > np.abs(np.log(b / theta_star))
        out[live] = np.where(worse_first[live], MatchResult.REJECT_FIRST, MatchResult.REJECT_SECOND)
        return out
    return compare


def test_criterion_08_tournament():
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    misses = 0
    for n in range(1000):
        eps = (1.0, 0.3, 0.1, 0.05)[n % 4]
        params = FineParams(10.0 ** rng.uniform(-9, -1), eps, 0.1)
        nodes = build_node_grid(params)
        theta_star = params.theta_prime * 1.11 ** rng.uniform(-1, 1)
        res = run_tournament(nodes, comparator=_perfect(theta_star, eps))
        bound = (1 + 0.001 * eps) * (1 + eps / 6.1)
        misses += res.failure or not approx_within(res.theta, theta_star, bound - 1)
    _finish(8, "perfect comparator tournament within (1+.001e)(1+e/6.1)", misses == 0,
            f"{misses} of 1000 placements missed", start, 30.0)


def test_criterion_09_count_roundtrip():
    start = time.perf_counter()
    bad = sum(count_from_angle(N, angle_from_count(N, K))[1] != K for N in range(1, 257) for K in range(N + 1))
    _finish(9, "count_from_angle(angle_from_count) is the identity for N <= 256", bad == 0,
            f"{bad} mismatches over 33152 pairs", start, 1.0)


def test_criterion_10_two_round_advantage():
    start = time.perf_counter()
    cfg = DriverConfig(eps=0.25, delta=0.2, pad_factor=8)
    N = 2**14 * 8
    master = build_master_schedule(N, cfg).query_cost().exact
    many = run_two_round(SimulatedOracle(N, 512, seed=10), cfg).queries_exact
    one = run_two_round(SimulatedOracle(N, 1, seed=10), cfg).queries_exact
    ok = many <= 0.5 * master and one <= 2 * master
    _finish(10, "two-round queries vs single-round master", ok,
            f"master {master:.4g}, K=512 {many:.4g} ({many / master:.2e}x), K=1 {one:.4g} ({one / master:.2e}x)",
            start, 300.0)
