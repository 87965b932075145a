"""Constant-factor estimate of the Grover angle from a geometric schedule.

Rotations grow as ``(12/11)^i`` until they reach ``sqrt(N)``; the first
position whose empirical heads frequency reaches 1/3 fixes the estimate
``(5/8) (11/12)^t``, which lands within a factor 1.1 of ``theta*`` with
probability at least ``1 - delta/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import GroverSchedule, InvalidArgument, ScheduleOutcome


class NoThresholdCrossed(RuntimeError):
    """No schedule position reached the heads-frequency threshold."""


@dataclass(frozen=True)
class Stage1Config:
    delta: float
    ratio: Fraction = Fraction(12, 11)
    flip_constant: float = 1e5
    threshold: Fraction = Fraction(1, 3)
    output_coefficient: float = 5 / 8
    practical_factor: float = 1.0

    def __post_init__(self) -> None:
        if not 0 < self.delta < 1:
            raise InvalidArgument(f"delta must lie in (0, 1), got {self.delta}")
        if not self.ratio > 1:
            raise InvalidArgument("ratio must exceed 1")
        if not 0 < self.threshold < 1:
            raise InvalidArgument("threshold must lie in (0, 1)")
        if not 0 < self.practical_factor <= 1:
            raise InvalidArgument(f"practical_factor must lie in (0, 1], got {self.practical_factor}")

    @property
    def flips(self) -> int:
        return math.ceil(self.practical_factor * self.flip_constant * math.log(120 / self.delta))


def stage1_length(N: int, ratio: float = 12 / 11) -> int:
    """Minimal ``m`` with ``ratio**m >= sqrt(N)``."""
    if N < 1:
        raise InvalidArgument(f"N must be positive, got {N}")
    target = math.sqrt(N)
    m = max(0, math.ceil(math.log(target) / math.log(ratio)))
    while m > 0 and ratio ** (m - 1) >= target:
        m -= 1
    while ratio**m < target:
        m += 1
    return m


def build_stage1_schedule(N: int, cfg: Stage1Config) -> GroverSchedule:
    if N < 2:
        raise InvalidArgument(f"stage 1 needs N >= 2, got {N}")
    ratio = float(cfg.ratio)
    m = stage1_length(N, ratio)
    rotations = np.array([ratio**i for i in range(m + 1)])
    return GroverSchedule(rotations, np.full(m + 1, cfg.flips), labels=np.arange(m + 1))


def crossing_index(outcome: ScheduleOutcome, threshold: Fraction = Fraction(1, 3)) -> int:
    """First position whose ``successes / flips >= threshold`` (exact rational test)."""
    thr = Fraction(threshold)
    for t, (s, n) in enumerate(zip(outcome.successes.tolist(), outcome.flips.tolist())):
        if s * thr.denominator >= thr.numerator * n:
            return t
    raise NoThresholdCrossed("no stage-1 position reached the threshold")


def extract_constant_estimate(outcome: ScheduleOutcome, cfg: Stage1Config) -> float:
    t = crossing_index(outcome, cfg.threshold)
    return cfg.output_coefficient * float(1 / cfg.ratio) ** t
