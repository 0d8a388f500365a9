"""
Tabular Q-learning and the non-learning baselines, behind one policy interface.

Actions handed to the environment are frame counts ``1..N``; value vectors
and Q-table columns are indexed ``0..N-1``. Argmax ties always go to the
lowest index.
"""

from builtins import float, int, len, range
import logging
from typing import Optional, Protocol

import numpy as np

from app.models.dueling_net import DuelingNet, forward
from app.models.q_table import QTable
from app.schemas.env_schemas import EnvConfig, EnvState, Timing
from app.services.env_service import (
    TransitionModel, capacity, derive_timing, encode_state, sensing_accuracy, state_from_index, state_index,
)
from app.utils.errors import ContractViolation, DomainError, TrainingError

logger = logging.getLogger(__name__)


def epsilon_greedy(q_values: np.ndarray, eps: float, rng: np.random.Generator) -> int:
    """
    Pick a 0-based action index: uniform with probability ``eps``, argmax otherwise.

    One uniform is always drawn so the generator advances identically
    whichever branch is taken.
    """
    if not 0.0 <= eps <= 1.0:
        raise DomainError(f"epsilon must lie in [0, 1], got {eps!r}.")
    q_values = np.asarray(q_values)
    if q_values.size == 0:
        raise ContractViolation("epsilon_greedy needs at least one action value.")
    if rng.random() < eps:
        return int(rng.integers(q_values.size))
    return int(np.argmax(q_values))


def q_update(table: QTable, state: EnvState, action_index: int, reward: float, next_state: EnvState) -> QTable:
    """
    One temporal-difference update ``q <- q + alpha (r + eta max_a' q(s', a') - q)``.

    Only cell ``(state, action_index)`` changes.
    """
    row = table.row_index(state)
    next_row = table.row_index(next_state)
    if not 0 <= action_index < table.values.shape[1]:
        raise DomainError(f"Action index {action_index} out of range.")
    if not (0 <= row < table.values.shape[0] and 0 <= next_row < table.values.shape[0]):
        raise DomainError(f"State {state!r} or {next_state!r} is outside the table.")
    table.visits[row, action_index] += 1
    alpha = table.learning_rate(row, action_index)
    td_target = reward + table.eta * table.values[next_row].max()
    table.values[row, action_index] += alpha * (td_target - table.values[row, action_index])
    return table


def greedy_scores(q: int, cfg: EnvConfig, timing: Optional[Timing] = None) -> np.ndarray:
    """
    One-step reward of each frame count assuming lossless frames and no arrivals.

    Entry ``j`` scores ``j + 1`` frames as ``-(w1 max(0, q - capacity) + w2 delta)``.
    """
    timing = timing or derive_timing(cfg)
    w1, w2, _ = cfg.weights
    return np.array([
        -(w1 * max(0, q - capacity(a, cfg, timing).total_packets) + w2 * sensing_accuracy(a, cfg.snr_r, cfg, timing))
        for a in range(1, cfg.max_frames + 1)
    ])


def greedy_baseline(state: EnvState, cfg: EnvConfig, timing: Optional[Timing] = None) -> int:
    """Myopic frame count: the best one-step reward under the lossless, arrival-free model."""
    if not 0 <= state.q <= cfg.queue_capacity:
        raise DomainError(f"State {state!r} is outside the state space.")
    return int(np.argmax(greedy_scores(state.q, cfg, timing))) + 1


def deterministic_baseline(cfg: EnvConfig, n_dp: Optional[int] = None) -> int:
    """Constant frame count, half of N unless overridden."""
    frames = cfg.max_frames // 2 if n_dp is None else n_dp
    if not 1 <= frames <= cfg.max_frames:
        raise DomainError(f"Deterministic frame count must lie in [1, {cfg.max_frames}], got {frames}.")
    return frames


def value_iteration(model: TransitionModel, eta: float, tol: float = 1e-10, max_iterations: int = 100_000) -> np.ndarray:
    """
    Optimal action values of a finite MDP by repeated Bellman backups.

    Returns Q* with one row per state and one column per action; stops when
    successive sweeps differ by less than ``tol`` in the max norm.
    """
    if not 0.0 <= eta < 1.0:
        raise DomainError(f"Discount must lie in [0, 1), got {eta!r}.")
    q = np.zeros_like(model.rewards)
    for iteration in range(1, max_iterations + 1):
        updated = model.rewards + eta * model.probabilities @ q.max(axis=1)
        gap = float(np.abs(updated - q).max())
        q = updated
        if gap < tol:
            logger.debug(f"Value iteration converged after {iteration} sweeps (gap {gap:.3e}).")
            return q
    raise TrainingError(f"Value iteration did not reach tolerance {tol} in {max_iterations} sweeps.")


class Policy(Protocol):
    def act(self, state: EnvState) -> int:
        """Frame count for ``state``."""
        ...


class _LookupPolicy:
    """Policy backed by a precomputed action per state index."""

    def __init__(self, cfg: EnvConfig, actions: np.ndarray):
        self.cfg = cfg
        self.actions = np.asarray(actions, dtype=np.int64)
        if self.actions.shape != (cfg.state_count,):
            raise ContractViolation(f"Expected {cfg.state_count} actions, got shape {self.actions.shape}.")

    def act(self, state: EnvState) -> int:
        return int(self.actions[state_index(state, self.cfg)])


class DqnPolicy(_LookupPolicy):
    """Greedy (epsilon = 0) policy of a trained Q-network, tabulated over every state."""

    def __init__(self, net: DuelingNet, cfg: EnvConfig):
        inputs = np.vstack([encode_state(state_from_index(i, cfg), cfg) for i in range(cfg.state_count)])
        super().__init__(cfg, forward(net, inputs).q.argmax(axis=1) + 1)
        self.net = net


class QTablePolicy(_LookupPolicy):
    def __init__(self, table: QTable, cfg: EnvConfig):
        super().__init__(cfg, table.greedy_policy())
        self.table = table


class GreedyPolicy(_LookupPolicy):
    def __init__(self, cfg: EnvConfig):
        timing = derive_timing(cfg)
        by_queue = [greedy_baseline(EnvState(q=q, c=0), cfg, timing) for q in range(cfg.queue_capacity + 1)]
        super().__init__(cfg, np.repeat(by_queue, cfg.class_count))


class DeterministicPolicy:
    def __init__(self, cfg: EnvConfig, n_dp: Optional[int] = None):
        self.frames = deterministic_baseline(cfg, n_dp)

    def act(self, state: EnvState) -> int:
        return self.frames


class RandomPolicy:
    """Uniform frame count every slot; used to test state-space irreducibility."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator):
        self.max_frames = cfg.max_frames
        self.rng = rng

    def act(self, state: EnvState) -> int:
        return int(self.rng.integers(1, self.max_frames + 1))
