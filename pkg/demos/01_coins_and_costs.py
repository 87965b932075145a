"""
Coins, schedules and query costs
================================

A Grover coin of parameter r lands heads with probability
sin^2(floor_odd(r) theta*), where sin^2(theta*) = K/N, and one flip costs
(floor_odd(r) - 1) / 2 oracle queries. This script flips a few coins and
checks the bookkeeping.
"""

import math

import numpy as np

from nonadaptive_counting.core import GroverSchedule, coin_bias, floor_odd, query_cost
from nonadaptive_counting.oracle import SimulatedOracle

N, K = 4096, 37
theta = math.asin(math.sqrt(K / N))
print(f"N={N} K={K} theta*={theta:.6f}")

# a schedule is a fixed list of (rotation, flips) entries
rotations = np.array([1.0, 4.0, 9.5, 21.0, 40.2])
flips = np.array([20000, 20000, 20000, 20000, 20000])
schedule = GroverSchedule(rotations, flips)

oracle = SimulatedOracle(N, K, seed=1)
outcome = oracle.perform(schedule)

print("\n   r  floor_odd   p(r)      p_hat")
for r, p_hat in zip(rotations, outcome.p_hat):
    print(f"{r:5.1f}  {floor_odd(r):9d}  {coin_bias(r, theta):.5f}  {p_hat:.5f}")

# exact cost uses floor_odd; the bound is half the sum of r t
cost = query_cost(schedule)
print(f"\nexact queries {cost.exact}, bound {cost.bound:.0f}, counter {oracle.read_query_counter()}")

# the same seed gives the same coins, whatever else the oracle did before
again = SimulatedOracle(N, K, seed=1).perform(schedule)
print("replay identical:", again == outcome)
