"""
The constant-factor stage
=========================

Rotations grow geometrically by 12/11 up to sqrt(N). The first rotation
whose coin shows heads at least a third of the time pins theta* down to
within a factor 1.1. Here we look at that crossing for a few K values and
then repeat one instance many times to see how often the factor holds.
"""

import math

import numpy as np

from nonadaptive_counting.core import approx_within
from nonadaptive_counting.oracle import SimulatedOracle
from nonadaptive_counting.stage1 import Stage1Config, build_stage1_schedule, crossing_index, extract_constant_estimate

N = 2**20 * 8
cfg = Stage1Config(delta=0.1)
schedule = build_stage1_schedule(N, cfg)
print(f"N'={N}: {len(schedule)} entries, {cfg.flips} flips each, {schedule.rotations[-1]:.1f} top rotation")

for K in (1, 64, 4096, 2**18):
    theta = math.asin(math.sqrt(K / N))
    outcome = SimulatedOracle(N, K, seed=K).perform(schedule)
    t = crossing_index(outcome)
    est = extract_constant_estimate(outcome, cfg)
    print(f"K={K:7d} crossing at t={t:3d}  theta~/theta*={est / theta:.4f}")

# repeat K = 64 with fresh seeds
theta = math.asin(math.sqrt(64 / N))
ratios = np.array([extract_constant_estimate(SimulatedOracle(N, 64, s).perform(schedule), cfg) / theta
                   for s in range(300)])
inside = np.mean([approx_within(r, 1.0, 0.1) for r in ratios])
print(f"\n300 runs at K=64: within 1.1 in {inside:.1%}, ratio range [{ratios.min():.3f}, {ratios.max():.3f}]")
