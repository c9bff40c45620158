"""Closed-form learning-rate schedules used as manual baselines.

All schedules are total deterministic functions of the integer step on
[0, total_steps]. base_lr is the initial value for the decay family and the
peak value for the warm-up family.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

from .errors import ConfigError

SCHEDULE_KINDS = (
    "constant",
    "linear",
    "quadratic",
    "cosine",
    "exponential",
    "piecewise",
    "sgdr",
    "warmup_cosine",
    "cosine_one_cycle",
)

# (fraction of training, multiplier on base_lr) staircase
DEFAULT_PIECEWISE = ((0.0, 1.0), (1.0 / 3.0, 0.1), (2.0 / 3.0, 0.01))


@dataclass(frozen=True)
class ScheduleSpec:
    kind: str
    base_lr: float
    total_steps: int
    end_fraction: float = None  # decay target as a fraction of base_lr
    restart_period: int = None  # sgdr
    restart_mult: float = 1.0
    warmup_fraction: float = 0.1
    start_fraction: float = 1e-3  # warm-up start value as a fraction of the peak
    breakpoints: tuple = DEFAULT_PIECEWISE

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"unknown schedule kind {self.kind!r}")
        if self.base_lr <= 0.0:
            raise ConfigError(f"base_lr must be > 0, got {self.base_lr}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.end_fraction is None:
            default_end = 0.01 if self.kind == "exponential" else 0.0
            object.__setattr__(self, "end_fraction", default_end)
        if not 0.0 <= self.end_fraction <= 1.0:
            raise ConfigError(f"end_fraction must be in [0, 1], got {self.end_fraction}")
        if self.kind == "exponential" and self.end_fraction <= 0.0:
            raise ConfigError("exponential decay needs end_fraction > 0")
        if self.kind == "sgdr":
            if self.restart_period is None:
                object.__setattr__(self, "restart_period", max(1, self.total_steps // 4))
            if self.restart_period < 1:
                raise ConfigError(f"restart_period must be >= 1, got {self.restart_period}")
            if self.restart_mult < 1.0:
                raise ConfigError(f"restart_mult must be >= 1, got {self.restart_mult}")
        if self.kind in ("warmup_cosine", "cosine_one_cycle"):
            if not 0.0 < self.warmup_fraction < 1.0:
                raise ConfigError(
                    f"warmup_fraction must be in (0, 1), got {self.warmup_fraction}"
                )
            if not 0.0 <= self.start_fraction < 1.0:
                raise ConfigError(
                    f"start_fraction must be in [0, 1), got {self.start_fraction}"
                )
            if self.total_steps < 2:
                raise ConfigError("warm-up schedules need total_steps >= 2")
        if self.kind == "piecewise":
            fracs = [f for f, _ in self.breakpoints]
            if not self.breakpoints or fracs[0] != 0.0 or fracs != sorted(fracs):
                raise ConfigError("piecewise breakpoints must start at 0 and be ascending")

    @property
    def warmup_steps(self) -> int:
        return min(max(1, round(self.warmup_fraction * self.total_steps)), self.total_steps - 1)


def _cos_ramp(frac: float) -> float:
    """1 at frac=0 down to 0 at frac=1, half-cosine."""
    return 0.5 * (1.0 + math.cos(math.pi * frac))


def lr_at(spec: ScheduleSpec, step: int) -> float:
    """Learning rate at an integer step in [0, total_steps]."""
    if not 0 <= step <= spec.total_steps:
        raise ConfigError(f"step {step} outside [0, {spec.total_steps}]")
    peak = spec.base_lr
    end = spec.end_fraction * peak
    s = step / spec.total_steps
    if spec.kind == "constant":
        return peak
    if spec.kind == "linear":
        return end + (peak - end) * (1.0 - s)
    if spec.kind == "quadratic":
        return end + (peak - end) * (1.0 - s) ** 2
    if spec.kind == "cosine":
        return end + (peak - end) * _cos_ramp(s)
    if spec.kind == "exponential":
        return peak * spec.end_fraction**s
    if spec.kind == "piecewise":
        mult = spec.breakpoints[0][1]
        for frac, m in spec.breakpoints:
            if s >= frac:
                mult = m
        return peak * mult
    if spec.kind == "sgdr":
        period = spec.restart_period
        local = step
        while local >= period:
            local -= period
            period = max(1, round(period * spec.restart_mult))
        return end + (peak - end) * _cos_ramp(local / period)
    # warm-up family
    w = spec.warmup_steps
    start = spec.start_fraction * peak
    if step <= w:
        frac = step / w
        if spec.kind == "warmup_cosine":
            return start + (peak - start) * frac
        return start + (peak - start) * (1.0 - _cos_ramp(frac))
    decay_frac = (step - w) / (spec.total_steps - w)
    return end + (peak - end) * _cos_ramp(decay_frac)


def schedule_table(spec: ScheduleSpec, stride: int) -> list:
    """Sampled (step, lr) curve; both endpoints are always included."""
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    steps = list(range(0, spec.total_steps + 1, stride))
    if steps[-1] != spec.total_steps:
        steps.append(spec.total_steps)
    return [(t, lr_at(spec, t)) for t in steps]


def write_schedule_csv(spec: ScheduleSpec, stride: int, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr"])
        for step, lr in schedule_table(spec, stride):
            writer.writerow([step, repr(lr)])
