"""Beta trajectories over training steps."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import StepOutOfRange
from .validation import check_beta

SCHEDULE_KINDS = ("constant", "linear_decay")


@dataclass(frozen=True)
class BetaSchedule:
    """A beta trajectory: constant, or linear decay from beta_init to 0.

    Linear decay re-derives beta from beta_init at every step,
    beta_init * (1 - i/N), so the trajectory is a straight line hitting
    exactly 0 at step N. Set ``cumulative=True`` for the alternative
    reading where each step rescales the previous value (decays much
    faster than linearly); kept for comparison only.
    """

    kind: str = "linear_decay"
    beta_init: float = 0.8
    total_steps: int = 2000
    cumulative: bool = False

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ValueError(f"unknown schedule kind {self.kind!r}; expected one of {SCHEDULE_KINDS}")
        check_beta(self.beta_init)
        if int(self.total_steps) < 1:
            raise ValueError(f"total_steps must be >= 1, got {self.total_steps}")
        object.__setattr__(self, "beta_init", float(self.beta_init))
        object.__setattr__(self, "total_steps", int(self.total_steps))


def beta_at(schedule: BetaSchedule, i: int) -> float:
    """Beta for 1-based step i; linear decay is exactly beta_init*(1 - i/N)."""
    i = int(i)
    n = schedule.total_steps
    if not (1 <= i <= n):
        raise StepOutOfRange(f"step {i} outside 1..{n}")
    if schedule.kind == "constant":
        return schedule.beta_init
    if schedule.cumulative:
        beta = schedule.beta_init
        for j in range(1, i + 1):
            beta *= 1.0 - j / n
        return beta
    return schedule.beta_init * (1.0 - i / n)
