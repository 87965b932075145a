"""
Refining one guess: rotation grid and tournament
================================================

Given a guess theta' within 1.11 of theta*, the fine stage flips every cell
s = u_i + a_j of a rotation grid, lays candidate angles around theta' and
lets them knock each other out. A match between two candidates uses one cell
where both angles land in the same quadrant about pi/8 apart; whichever side
the coin's frequency points away from is rejected.
"""

import math

from nonadaptive_counting.core import approx_within
from nonadaptive_counting.oracle import SimulatedOracle
from nonadaptive_counting.stage2 import (
    FineParams,
    build_node_grid,
    build_rotation_grid,
    estimate_fine,
    fine_schedule_cost,
    refine_pair,
)

N, K = 2**17, 40
theta = math.asin(math.sqrt(K / N))
params = FineParams(theta_prime=theta * 1.07, eps_prime=0.25, delta_prime=0.1, practical_factor=0.01)

grid = build_rotation_grid(params)
nodes = build_node_grid(params)
cost = fine_schedule_cost(grid, params)
print(f"grid: {len(grid.u)} rows x {len(grid.a)} columns, {cost.exact:.3e} queries")
print(f"nodes: {nodes.n_real} candidates plus {nodes.byes} byes")

# the cell one match-up would read
a, b = theta / 1.05, theta * 1.05
i, j = refine_pair(a, b, grid)
s = grid.u[i] + grid.a[j]
print(f"pair ({a:.6f}, {b:.6f}) -> cell ({i}, {j}), s={s:.1f}, separation {s * (b - a):.4f} vs pi/8={math.pi / 8:.4f}")

hits = 0
for seed in range(20):
    est = estimate_fine(SimulatedOracle(N, K, seed), params)
    hits += not est.failure and approx_within(est.theta_est, theta, params.eps_prime / 6)
    if seed < 3:
        t = est.tournament
        print(f"seed {seed}: theta_est/theta*={est.theta_est / theta:.5f}, phase-2 entrants {t.phase2_entrants}, "
              f"{t.matches} match-ups")
print(f"within 1 + eps'/6 in {hits}/20 runs")
