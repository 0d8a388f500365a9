from builtins import float, int, range
from dataclasses import dataclass
from typing import Optional

import numpy as np

from app.schemas.env_schemas import EnvConfig, EnvState
from app.schemas.training_schemas import LearningRateSchedule
from app.utils.errors import DomainError


@dataclass
class QTable:
    """
    Dense action-value table with one row per (q, c) state and one column per frame count.

    Row ``q * C + c`` holds the state ``(q, c)``; column ``j`` is the action of
    sending ``j + 1`` frames. ``visits`` counts updates per cell and drives the
    harmonic learning-rate schedule. ``alpha`` is used by the constant schedule
    only; the harmonic rate reaches 1.0 on the first update of a cell.
    """
    values: np.ndarray
    visits: np.ndarray
    class_count: int
    alpha: float = 0.1
    eta: float = 0.9
    schedule: LearningRateSchedule = LearningRateSchedule.CONSTANT

    def __post_init__(self):
        if not 0.0 <= self.alpha < 1.0:
            raise DomainError(f"Constant learning rate must lie in [0, 1), got {self.alpha!r}.")

    @classmethod
    def zeros(cls, cfg: EnvConfig, alpha: float = 0.1, eta: float = 0.9,
              schedule: LearningRateSchedule = LearningRateSchedule.CONSTANT) -> "QTable":
        shape = (cfg.state_count, cfg.max_frames)
        return cls(values=np.zeros(shape), visits=np.zeros(shape, dtype=np.int64),
                   class_count=cfg.class_count, alpha=alpha, eta=eta, schedule=LearningRateSchedule(schedule))

    def row_index(self, state: EnvState) -> int:
        return state.q * self.class_count + state.c

    def row(self, state: EnvState) -> np.ndarray:
        return self.values[self.row_index(state)]

    def learning_rate(self, row: int, column: int) -> float:
        if self.schedule == LearningRateSchedule.HARMONIC:
            return 1.0 / max(int(self.visits[row, column]), 1)
        return self.alpha

    def greedy_policy(self) -> np.ndarray:
        """Best frame count (1-based) per row, lowest on ties."""
        return self.values.argmax(axis=1) + 1


@dataclass
class EpsilonSchedule:
    """Linear decay from ``start`` to ``end`` over ``decay_steps`` steps, then constant."""
    start: float = 1.0
    end: float = 0.01
    decay_steps: int = 100_000

    def value(self, step: int) -> float:
        if self.decay_steps <= 0 or step >= self.decay_steps:
            return self.end
        if step <= 0:
            return self.start
        return max(self.end, self.start - (self.start - self.end) * step / self.decay_steps)
