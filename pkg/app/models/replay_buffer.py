"""
Uniform experience replay.

Transitions are kept in a fixed-capacity ring: once full, each push
overwrites the oldest entry. Sampling draws indices uniformly with
replacement from whatever is currently stored.
"""

from builtins import int, len, range
from dataclasses import dataclass
from typing import List, NamedTuple, Sequence

import numpy as np

from app.schemas.env_schemas import EnvConfig, EnvState
from app.utils.errors import ContractViolation


class Transition(NamedTuple):
    state: EnvState
    action: int
    reward: float
    next_state: EnvState


@dataclass
class TransitionBatch:
    """Network-ready arrays; ``actions`` holds 0-based output columns (frames - 1)."""
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition], cfg: EnvConfig) -> "TransitionBatch":
        class_scale = cfg.class_count - 1 if cfg.class_count > 1 else 1

        def encode(states: Sequence[EnvState]) -> np.ndarray:
            # vectorised form of encode_state
            q = np.fromiter((s.q for s in states), dtype=np.float64, count=len(states))
            c = np.fromiter((s.c for s in states), dtype=np.float64, count=len(states))
            return np.column_stack([q / cfg.queue_capacity, c / class_scale])

        return cls(
            states=encode([t.state for t in transitions]),
            actions=np.array([t.action - 1 for t in transitions], dtype=np.int64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_states=encode([t.next_state for t in transitions]),
        )

    def __len__(self) -> int:
        return len(self.actions)


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ContractViolation("Replay buffer capacity must be at least 1.")
        self.capacity = capacity
        self._items: List[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        if not self._items:
            raise ContractViolation("Cannot sample from an empty replay buffer.")
        indices = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in indices]

    def contents(self) -> List[Transition]:
        """Stored transitions, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return [self._items[(self._cursor + i) % self.capacity] for i in range(self.capacity)]
