"""
Built-in consistency checks run by the ``check`` command.

Each check is a plain function returning a :class:`CheckResult`; none of
them raise on failure so the command can report every result at once.
"""

from builtins import Exception, bool, float, int, len, range, str
from dataclasses import dataclass
import logging
import math
from typing import Callable, List

import numpy as np

from app.models.dueling_net import (
    DuelingNet, forward, grad_check, init_dueling_net, loss_and_grads,
)
from app.models.q_table import QTable
from app.models.replay_buffer import Transition, TransitionBatch
from app.schemas.env_schemas import EnvConfig, EnvState, WEIGHT_PRESETS, WeightPreset
from app.schemas.training_schemas import Aggregation
from app.services.agent_service import RandomPolicy, q_update, value_iteration
from app.services.env_service import (
    IcsEnvironment, bit_error_prob, capacity, frame_error_prob, reward, sensing_accuracy, sensing_resolution,
    state_from_index, state_index, transition_model,
)

logger = logging.getLogger(__name__)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _relative_gap(actual: float, expected: float) -> float:
    return abs(actual - expected) / max(abs(expected), 1e-300)


def check_formulas() -> CheckResult:
    cfg = EnvConfig()
    w2 = EnvConfig(weights=WEIGHT_PRESETS[WeightPreset.W2])
    gaps = {
        "reward W1": _relative_gap(reward(10, 1.0, 2, cfg), -1.9),
        "reward W2": _relative_gap(reward(20, 0.5, 0, w2), -0.9),
        "bit_error_prob": _relative_gap(bit_error_prob(0.01, 12000), 1.0 - 0.99 ** (1.0 / 12000)),
        "frame_error_prob": _relative_gap(frame_error_prob(1e-5, 100_000), 1.0 - (1.0 - 1e-5) ** 100_000),
        "sensing_resolution": _relative_gap(sensing_resolution(10, cfg), 10.0),
        "sensing_accuracy": _relative_gap(sensing_accuracy(10, 100.0, cfg), 10.0 / math.sqrt(200.0)),
    }
    worst = max(gaps, key=gaps.get)
    return CheckResult("formulas", gaps[worst] < 1e-9, f"worst relative gap {gaps[worst]:.2e} ({worst})")


def check_tradeoff(cfg: EnvConfig = None) -> CheckResult:
    cfg = cfg or EnvConfig()
    frames = range(1, cfg.max_frames + 1)
    packets = [capacity(a, cfg).total_packets for a in frames]
    deltas = [sensing_accuracy(a, cfg.snr_r, cfg) for a in frames]
    passed = all(x >= y for x, y in zip(packets, packets[1:])) and all(x > y for x, y in zip(deltas, deltas[1:]))
    return CheckResult("tradeoff", passed, f"capacities {packets}")


def check_gradients(n_nets: int = 100, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(n_nets):
        hidden = (4, 128)[i % 2]
        net = init_dueling_net(int(rng.integers(2**31)), hidden, aggregation=Aggregation.MEAN)
        net.b_hidden[:] = rng.uniform(-0.5, 0.5, size=hidden)
        x = rng.uniform(0.0, 1.0, size=(3, 2))
        worst = max(worst, grad_check(net, x, target=float(rng.uniform(-2.0, 2.0))))
    return CheckResult("gradients", worst < 1e-4, f"max relative gap {worst:.2e} over {n_nets} nets")


def hand_built_pair():
    """Online/target nets whose greedy next actions differ: online picks 0, target favours 2."""
    def make(b_advantage):
        return DuelingNet(
            input_dim=2, hidden_dim=2, action_count=3, aggregation=Aggregation.MEAN,
            w_hidden=np.eye(2), b_hidden=np.ones(2),
            w_value=np.zeros((1, 2)), b_value=np.zeros(1),
            w_advantage=np.zeros((3, 2)), b_advantage=np.array(b_advantage, dtype=np.float64),
        )
    return make([3.0, 0.0, 0.0]), make([0.0, 0.0, 3.0])


def check_double_q_target() -> CheckResult:
    online, target = hand_built_pair()
    reward_value, discount = 0.5, 0.9
    batch = TransitionBatch(states=np.array([[0.2, 0.0]]), actions=np.array([1]),
                            rewards=np.array([reward_value]), next_states=np.array([[0.4, 1.0]]))
    computed = float(loss_and_grads(online, target, batch, discount).targets[0])
    # online argmax is action 0; target Q-values are [-1, -1, 2]
    expected = reward_value + discount * -1.0
    return CheckResult("double_q_target", abs(computed - expected) <= 1e-12, f"Y={computed!r}, expected {expected!r}")


def check_dueling_identity(n_pairs: int = 1000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs // 100):
        net = init_dueling_net(int(rng.integers(2**31)), 16)
        net.b_value[:] = rng.normal(size=1)
        out = forward(net, rng.uniform(0.0, 1.0, size=(100, 2)))
        worst = max(worst, float(np.abs((out.q - out.v[:, None]).mean(axis=1)).max()))
    return CheckResult("dueling_identity", worst < 1e-9, f"max |mean_a(Q - V)| = {worst:.2e}")


def check_irreducibility(seed: int = 0, max_steps: int = 1_000_000) -> CheckResult:
    cfg = EnvConfig(queue_capacity=5, arrival_mean=2.0)
    env = IcsEnvironment(cfg, seed=seed)
    policy = RandomPolicy(cfg, np.random.default_rng(seed + 1))
    seen = np.zeros(cfg.state_count, dtype=bool)
    state = env.reset()
    seen[state_index(state, cfg)] = True
    steps = 0
    while not seen.all() and steps < max_steps:
        state = env.step(state, policy.act(state)).next_state
        seen[state_index(state, cfg)] = True
        steps += 1
    return CheckResult("irreducibility", bool(seen.all()),
                       f"visited {int(seen.sum())}/{cfg.state_count} states in {steps} steps")


def micro_mdp_config() -> EnvConfig:
    """Two-packet queue, one near-lossless class, no arrivals."""
    return EnvConfig(queue_capacity=2, arrival_mean=0.0, per_levels=[1e-12], class_probs=[1.0])


def sampled_q_learning(cfg: EnvConfig, steps: int, alpha: float = 0.1, eta: float = 0.9, seed: int = 0) -> QTable:
    """Q-learning from uniformly drawn (state, action) pairs, so every cell keeps being updated."""
    env = IcsEnvironment(cfg, seed=seed)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    table = QTable.zeros(cfg, alpha=alpha, eta=eta)
    for _ in range(steps):
        state = state_from_index(int(rng.integers(cfg.state_count)), cfg)
        action_index = int(rng.integers(cfg.max_frames))
        outcome = env.step(state, action_index + 1)
        q_update(table, state, action_index, outcome.reward, outcome.next_state)
    return table


def check_oracle_equivalence(steps: int = 100_000, seed: int = 0) -> CheckResult:
    cfg = micro_mdp_config()
    oracle = value_iteration(transition_model(cfg), eta=0.9, tol=1e-10)
    learned = sampled_q_learning(cfg, steps, seed=seed).values
    gap = float(np.abs(learned - oracle).max())
    return CheckResult("oracle_equivalence", gap < 1e-2, f"max |Q - Q*| = {gap:.2e} after {steps} steps")


CHECKS: List[Callable[[], CheckResult]] = [
    check_formulas,
    check_tradeoff,
    check_gradients,
    check_double_q_target,
    check_dueling_identity,
    check_irreducibility,
    check_oracle_equivalence,
]


def run_self_checks() -> List[CheckResult]:
    results = []
    for check in CHECKS:
        try:
            result = check()
        except Exception as e:
            logger.error(f"Self-check {check.__name__} raised: {e}")
            result = CheckResult(check.__name__.replace("check_", ""), False, f"{type(e).__name__}: {e}")
        logger.info(f"{result.name}: {'ok' if result.passed else 'FAILED'} ({result.detail})")
        results.append(result)
    return results
