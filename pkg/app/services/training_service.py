"""
Training loops for the dueling double-DQN agent and tabular Q-learning, plus
the frozen-policy evaluator.

Every run is driven by one integer seed. It is expanded with
``numpy.random.SeedSequence`` into independent streams for the environment,
the agent (exploration and replay sampling) and the network initialisation,
so a seed fully determines every action, sample and update.
"""

from builtins import float, int, len, range
from collections import deque
from dataclasses import dataclass, field
import logging
import math
from typing import Deque, List, Optional

import numpy as np

from app.models.dueling_net import (
    AdamState, DuelingNet, OptimizerState, SgdState, apply_gradients, copy_params, forward, init_dueling_net,
    loss_and_grads,
)
from app.models.q_table import EpsilonSchedule, QTable
from app.models.replay_buffer import ReplayBuffer, Transition, TransitionBatch
from app.schemas.env_schemas import EnvConfig, EnvState
from app.schemas.experiment_schemas import EvaluationReport, SeedMetrics
from app.schemas.training_schemas import ConvergenceEntry, OptimizerName, TrainConfig
from app.services.agent_service import Policy, epsilon_greedy, q_update
from app.services.env_service import IcsEnvironment, encode_state
from app.dependencies import get_settings
from app.utils.errors import ContractViolation, TrainingError

settings = get_settings()
logger = logging.getLogger(__name__)


@dataclass
class StepMetrics:
    step: int
    frames: int
    reward: float
    epsilon: float
    next_state: EnvState
    loss: Optional[float] = None
    synced: bool = False


@dataclass
class TrainingResult:
    net: DuelingNet
    target_net: DuelingNet
    log: List[ConvergenceEntry]
    steps: int


@dataclass
class QLearningResult:
    table: QTable
    log: List[ConvergenceEntry]
    steps: int


def spawn_streams(seed: int):
    """Independent (environment, agent, network-init) streams for one run seed."""
    env_seq, agent_seq, init_seq = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(env_seq), np.random.default_rng(agent_seq), int(init_seq.generate_state(1)[0])


def schedule_for(train_cfg: TrainConfig) -> EpsilonSchedule:
    return EpsilonSchedule(train_cfg.epsilon_start, train_cfg.epsilon_end, train_cfg.epsilon_decay_steps)


def build_optimizer(net: DuelingNet, train_cfg: TrainConfig) -> OptimizerState:
    if train_cfg.optimizer == OptimizerName.SGD:
        return SgdState(learning_rate=train_cfg.learning_rate)
    return AdamState.for_params(
        net.params, learning_rate=train_cfg.learning_rate, beta1=train_cfg.adam_beta1,
        beta2=train_cfg.adam_beta2, epsilon=train_cfg.adam_epsilon,
    )


def train_step(env: IcsEnvironment, net: DuelingNet, target_net: DuelingNet, buffer: ReplayBuffer,
               optimizer: OptimizerState, schedule: EpsilonSchedule, state: EnvState, step_index: int,
               rng: np.random.Generator, train_cfg: TrainConfig) -> StepMetrics:
    """
    One interleaved act/learn step of the i-ICS loop; ``step_index`` counts from 1.

    Acts epsilon-greedily on the online network (epsilon is
    ``schedule.value(step_index - 1)``), stores the transition, and once
    the buffer holds ``learn_start`` transitions takes one optimizer step on
    a uniformly sampled mini-batch with double-Q targets. The target
    network is overwritten with the online parameters whenever
    ``step_index`` is a multiple of ``target_sync``.

    Raises:
        TrainingError: If the mini-batch loss is not finite.
    """
    if net.architecture != target_net.architecture:
        raise ContractViolation("Online and target networks must share an architecture.")
    cfg = env.cfg
    epsilon = schedule.value(step_index - 1)
    q_values = forward(net, encode_state(state, cfg)).q
    frames = epsilon_greedy(q_values, epsilon, rng) + 1
    outcome = env.step(state, frames)
    buffer.push(Transition(state, frames, outcome.reward, outcome.next_state))

    loss = None
    if len(buffer) >= train_cfg.learn_start:
        batch = TransitionBatch.from_transitions(buffer.sample(train_cfg.batch_size, rng), cfg)
        result = loss_and_grads(net, target_net, batch, train_cfg.discount)
        if not math.isfinite(result.loss):
            raise TrainingError(f"Non-finite loss {result.loss!r} at step {step_index}.")
        apply_gradients(net, result.grads, optimizer)
        loss = result.loss

    synced = step_index % train_cfg.target_sync == 0
    if synced:
        copy_params(net, target_net)
        logger.debug(f"Target network synced at step {step_index}.")
    return StepMetrics(step=step_index, frames=frames, reward=outcome.reward, epsilon=epsilon,
                       next_state=outcome.next_state, loss=loss, synced=synced)


@dataclass
class _RewardWindow:
    size: int
    rewards: Deque[float] = field(default_factory=deque)

    def push(self, value: float) -> None:
        self.rewards.append(value)
        if len(self.rewards) > self.size:
            self.rewards.popleft()

    def mean(self) -> float:
        return float(np.mean(self.rewards)) if self.rewards else 0.0


class DqnTrainer:
    """Owns the mutable state of one i-ICS training run."""

    def __init__(self, env_cfg: EnvConfig, train_cfg: TrainConfig):
        self.env_cfg = env_cfg
        self.train_cfg = train_cfg
        env_rng, self.rng, init_seed = spawn_streams(train_cfg.seed)
        self.env = IcsEnvironment(env_cfg, rng=env_rng)
        self.net = init_dueling_net(init_seed, train_cfg.hidden_dim, action_count=env_cfg.max_frames,
                                    aggregation=train_cfg.aggregation)
        self.target_net = copy_params(self.net)
        self.buffer = ReplayBuffer(train_cfg.buffer_capacity)
        self.optimizer = build_optimizer(self.net, train_cfg)
        self.schedule = schedule_for(train_cfg)
        self.state = self.env.reset()
        self.step_index = 0
        self.log: List[ConvergenceEntry] = []
        self._window = _RewardWindow(train_cfg.moving_average_window)

    def step(self) -> StepMetrics:
        self.step_index += 1
        metrics = train_step(self.env, self.net, self.target_net, self.buffer, self.optimizer, self.schedule,
                             self.state, self.step_index, self.rng, self.train_cfg)
        self.state = metrics.next_state
        self._window.push(metrics.reward)
        if self.step_index % self.train_cfg.log_every == 0:
            entry = ConvergenceEntry(step=self.step_index, epsilon=metrics.epsilon,
                                     moving_avg_reward=self._window.mean(), loss=metrics.loss)
            self.log.append(entry)
            if self.step_index % settings.progress_every == 0:
                logger.info(f"i-ICS step {self.step_index}: epsilon={entry.epsilon:.4f}, "
                            f"moving_avg_reward={entry.moving_avg_reward:.4f}")
        return metrics

    def run(self) -> TrainingResult:
        for _ in range(self.train_cfg.total_steps):
            try:
                self.step()
            except TrainingError as e:
                logger.error(f"Training aborted at step {self.step_index}: {e}")
                raise
        return TrainingResult(net=self.net, target_net=self.target_net, log=self.log, steps=self.step_index)


def run_training(env_cfg: EnvConfig, train_cfg: TrainConfig) -> TrainingResult:
    """Train the dueling double-DQN agent for ``train_cfg.total_steps`` slots."""
    logger.info(f"Training i-ICS for {train_cfg.total_steps} steps (seed {train_cfg.seed}, "
                f"lambda {env_cfg.arrival_mean}).")
    return DqnTrainer(env_cfg, train_cfg).run()


def run_qlearning(env_cfg: EnvConfig, train_cfg: TrainConfig) -> QLearningResult:
    """
    Tabular Q-learning with the same exploration schedule and logging as the deep agent.

    The table starts at zero and receives one temporal-difference update per slot.
    """
    env_rng, rng, _ = spawn_streams(train_cfg.seed)
    env = IcsEnvironment(env_cfg, rng=env_rng)
    table = QTable.zeros(env_cfg, alpha=train_cfg.q_learning_rate, eta=train_cfg.discount,
                         schedule=train_cfg.q_learning_rate_schedule)
    schedule = schedule_for(train_cfg)
    window = _RewardWindow(train_cfg.moving_average_window)
    log: List[ConvergenceEntry] = []
    logger.info(f"Training Q-learning for {train_cfg.total_steps} steps (seed {train_cfg.seed}, "
                f"lambda {env_cfg.arrival_mean}).")

    state = env.reset()
    for t in range(1, train_cfg.total_steps + 1):
        epsilon = schedule.value(t - 1)
        action_index = epsilon_greedy(table.row(state), epsilon, rng)
        outcome = env.step(state, action_index + 1)
        q_update(table, state, action_index, outcome.reward, outcome.next_state)
        window.push(outcome.reward)
        if t % train_cfg.log_every == 0:
            log.append(ConvergenceEntry(step=t, epsilon=epsilon, moving_avg_reward=window.mean()))
        state = outcome.next_state
    return QLearningResult(table=table, log=log, steps=train_cfg.total_steps)


def evaluate(policy: Policy, env_cfg: EnvConfig, n_slots: int, n_seeds: int = 1, seed: int = 0) -> EvaluationReport:
    """
    Run a frozen policy for ``n_slots`` slots under each of ``n_seeds`` replicas.

    Replica ``i`` uses the environment stream ``SeedSequence([seed, i])`` and
    reports ``seed = i``. Averages are per slot; cost is the negated reward.
    """
    if n_slots < 1 or n_seeds < 1:
        raise ContractViolation("n_slots and n_seeds must be at least 1.")
    per_seed: List[SeedMetrics] = []
    for replica in range(n_seeds):
        env = IcsEnvironment(env_cfg, rng=np.random.default_rng(np.random.SeedSequence([seed, replica])))
        costs = np.empty(n_slots)
        queues = np.empty(n_slots)
        deltas = np.empty(n_slots)
        drops = np.empty(n_slots)
        losses = np.empty(n_slots)
        state = env.reset()
        for t in range(n_slots):
            outcome = env.step(state, policy.act(state))
            costs[t] = outcome.cost
            queues[t] = outcome.queue_end
            deltas[t] = outcome.sensing_accuracy
            drops[t] = outcome.overflow_drops
            losses[t] = outcome.frame_loss_packets
            state = outcome.next_state
        per_seed.append(SeedMetrics(
            seed=replica, avg_cost=float(costs.mean()), avg_queue_len=float(queues.mean()),
            avg_delta=float(deltas.mean()), avg_drops=float(drops.mean()), frame_loss_packets=float(losses.mean()),
        ))
    mean = SeedMetrics(
        seed=seed,
        avg_cost=float(np.mean([m.avg_cost for m in per_seed])),
        avg_queue_len=float(np.mean([m.avg_queue_len for m in per_seed])),
        avg_delta=float(np.mean([m.avg_delta for m in per_seed])),
        avg_drops=float(np.mean([m.avg_drops for m in per_seed])),
        frame_loss_packets=float(np.mean([m.frame_loss_packets for m in per_seed])),
    )
    return EvaluationReport(per_seed=per_seed, mean=mean)
