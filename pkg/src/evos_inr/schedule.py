"""Selection-size schedules: how many coordinates train at iteration t."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .signal import round_half_up

SCHEDULES = ("constant", "stepwise", "linear", "cosine")


@dataclass(frozen=True)
class ScheduleConfig:
    kind: str = "constant"
    beta: float = 0.5
    start_ratio: float = 0.2
    end_ratio: float = 1.0
    step_count: int = 5
    total_iterations: int = 5000

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.kind!r}")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError(f"beta must lie in (0, 1], got {self.beta}")
        if not 0.0 < self.start_ratio <= self.end_ratio <= 1.0:
            raise ValueError("need 0 < start_ratio <= end_ratio <= 1")
        if self.step_count < 1 or self.total_iterations < 1:
            raise ValueError("step_count and total_iterations must be positive")


def _ratio(config: ScheduleConfig, t: int) -> float:
    T = config.total_iterations
    if config.kind == "constant":
        return config.beta
    if config.kind == "stepwise":
        # step_count equal blocks; ratios evenly spaced start..end
        block = min((t - 1) * config.step_count // T, config.step_count - 1)
        if config.step_count == 1:
            return config.end_ratio
        frac = block / (config.step_count - 1)
        return config.start_ratio + (config.end_ratio - config.start_ratio) * frac
    if config.kind == "linear":
        return t / T
    progress = (1.0 - math.cos(math.pi * t / T)) / 2.0
    return config.start_ratio + (config.end_ratio - config.start_ratio) * progress


def selection_size(config: ScheduleConfig, t: int, n: int) -> int:
    """Number of coordinates ``q`` trained at iteration ``t`` (1-based)."""
    if not 1 <= t <= config.total_iterations:
        raise ValueError(f"iteration {t} outside [1, {config.total_iterations}]")
    q = round_half_up(n * _ratio(config, t))
    return min(max(q, 1), n)


def survivor_count(q: int, alpha: float) -> int:
    """Survivors ``k`` such that ``(1 + alpha) k`` matches ``q``."""
    if q < 1:
        raise ValueError("selection size must be positive")
    return max(1, round_half_up(q / (1.0 + alpha)))
