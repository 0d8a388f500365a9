import math

import numpy as np
import pytest

from app.models.dueling_net import (
    LossAndGrads, SgdState, apply_gradients, copy_params, init_dueling_net, loss_and_grads, param_checksum,
)
from app.models.replay_buffer import TransitionBatch
from app.schemas.env_schemas import EnvConfig
from app.schemas.training_schemas import OptimizerName, TrainConfig
from app.services.agent_service import DeterministicPolicy, GreedyPolicy
from app.services.env_service import sensing_accuracy
from app.services import training_service
from app.services.training_service import (
    DqnTrainer, build_optimizer, evaluate, run_qlearning, run_training, schedule_for,
)
from app.utils.errors import TrainingError


# Test the warm-up phase: transitions are stored but no update happens
def test_train_step_before_learn_start(default_config, small_train_config):
    trainer = DqnTrainer(default_config, small_train_config)
    before = param_checksum(trainer.net)
    metrics = trainer.step()
    assert len(trainer.buffer) == 1
    assert metrics.loss is None
    assert param_checksum(trainer.net) == before
    assert metrics.epsilon == 1.0
    assert 1 <= metrics.frames <= 10


# Test the target network sync rule and its constancy between syncs
def test_target_network_changes_only_at_sync(default_config, small_train_config):
    cfg = small_train_config.model_copy(update={"learn_start": 5, "target_sync": 25})
    trainer = DqnTrainer(default_config, cfg)
    target_checksums = []
    for _ in range(60):
        metrics = trainer.step()
        target_checksums.append(param_checksum(trainer.target_net))
        if metrics.synced:
            assert param_checksum(trainer.target_net) == param_checksum(trainer.net)
    assert len(set(target_checksums[:24])) == 1
    assert len(set(target_checksums[24:49])) == 1
    assert target_checksums[23] != target_checksums[24]
    assert param_checksum(trainer.net) != target_checksums[-1]


def test_epsilon_follows_schedule(default_config, small_train_config):
    trainer = DqnTrainer(default_config, small_train_config)
    schedule = schedule_for(small_train_config)
    for t in range(1, 40):
        assert trainer.step().epsilon == schedule.value(t - 1)


# Test that repeated updates on a fixed batch reduce its loss
def test_fixed_batch_loss_decreases():
    net = init_dueling_net(seed=8, hidden_dim=8)
    target = copy_params(net)
    batch = TransitionBatch(states=np.array([[0.3, 0.5]]), actions=np.array([2]), rewards=np.array([-1.0]),
                            next_states=np.array([[0.6, 0.0]]))
    sgd = SgdState(learning_rate=1e-3)
    losses = []
    for _ in range(100):
        result = loss_and_grads(net, target, batch, discount=0.0)
        losses.append(result.loss)
        apply_gradients(net, result.grads, sgd)
    losses.append(loss_and_grads(net, target, batch, discount=0.0).loss)
    assert all(a > b for a, b in zip(losses, losses[1:]))


# Test that a one-slot buffer degenerates to online double-DQN with hand-checkable targets
def test_single_transition_buffer_targets(default_config, mocker):
    cfg = TrainConfig(total_steps=3, buffer_capacity=1, batch_size=1, learn_start=1, target_sync=100,
                      hidden_dim=4, seed=2)
    trainer = DqnTrainer(default_config, cfg)
    spy = mocker.spy(training_service, "loss_and_grads")
    for _ in range(3):
        target_before = copy_params(trainer.target_net)
        online_before = copy_params(trainer.net)
        trainer.step()
        stored = trainer.buffer.contents()[0]
        result = spy.spy_return
        batch = TransitionBatch.from_transitions([stored], default_config)
        expected = loss_and_grads(online_before, target_before, batch, cfg.discount).targets
        np.testing.assert_allclose(result.targets, expected, rtol=0, atol=1e-12)
    assert len(trainer.buffer) == 1


def test_run_training_zero_steps(default_config):
    result = run_training(default_config, TrainConfig(total_steps=0, hidden_dim=4))
    assert result.log == []
    assert result.steps == 0
    assert param_checksum(result.net) == param_checksum(result.target_net)


def test_run_training_is_deterministic(default_config, small_train_config):
    first = run_training(default_config, small_train_config)
    second = run_training(default_config, small_train_config)
    assert first.log == second.log
    assert param_checksum(first.net) == param_checksum(second.net)
    assert len(first.log) == small_train_config.total_steps // small_train_config.log_every
    assert [e.step for e in first.log[:3]] == [10, 20, 30]
    assert first.log[-1].loss is not None
    other = run_training(default_config, small_train_config.model_copy(update={"seed": 12}))
    assert other.log != first.log


def test_run_training_with_sgd(default_config, small_train_config):
    cfg = small_train_config.model_copy(update={"optimizer": OptimizerName.SGD})
    assert isinstance(build_optimizer(init_dueling_net(0, 4), cfg), SgdState)
    result = run_training(default_config, cfg)
    assert all(math.isfinite(e.moving_avg_reward) for e in result.log)


def test_non_finite_loss_aborts(default_config, small_train_config, mocker):
    mocker.patch(
        "app.services.training_service.loss_and_grads",
        return_value=LossAndGrads(loss=float("nan"), grads={}, targets=np.zeros(1)),
    )
    with pytest.raises(TrainingError):
        run_training(default_config, small_train_config)


def test_moving_average_window(default_config):
    cfg = TrainConfig(total_steps=40, buffer_capacity=50, batch_size=4, learn_start=50, hidden_dim=4,
                      moving_average_window=10, log_every=20, seed=1)
    trainer = DqnTrainer(default_config, cfg)
    rewards = [trainer.step().reward for _ in range(40)]
    assert trainer.log[0].moving_avg_reward == pytest.approx(np.mean(rewards[10:20]))
    assert trainer.log[1].moving_avg_reward == pytest.approx(np.mean(rewards[30:40]))


# Test tabular Q-learning
def test_run_qlearning_logs_and_updates(default_config, small_train_config):
    result = run_qlearning(default_config, small_train_config)
    assert result.steps == 300
    assert len(result.log) == 30
    assert all(e.loss is None for e in result.log)
    assert result.table.visits.sum() == 300
    assert np.count_nonzero(result.table.values) > 0
    again = run_qlearning(default_config, small_train_config)
    np.testing.assert_array_equal(result.table.values, again.table.values)


# Test the frozen-policy evaluator
def test_evaluate_deterministic_on_idle_link():
    cfg = EnvConfig(per_levels=[1e-12] * 3, arrival_mean=0.0)
    report = evaluate(DeterministicPolicy(cfg), cfg, n_slots=500, n_seeds=2)
    assert len(report.per_seed) == 2
    assert report.mean.avg_queue_len == 0.0
    assert report.mean.avg_drops == 0.0
    assert report.mean.avg_delta == pytest.approx(sensing_accuracy(5, 100.0, cfg), rel=1e-12)
    assert report.mean.avg_cost == pytest.approx(0.4 * sensing_accuracy(5, 100.0, cfg), rel=1e-12)


def test_evaluate_zero_weights_costs_nothing(default_config):
    cfg = default_config.with_overrides(weights=(0.0, 0.0, 0.0))
    report = evaluate(GreedyPolicy(cfg), cfg, n_slots=300)
    assert report.mean.avg_cost == 0.0


def test_evaluate_is_deterministic(default_config):
    policy = GreedyPolicy(default_config)
    first = evaluate(policy, default_config, n_slots=400, n_seeds=3, seed=5)
    second = evaluate(policy, default_config, n_slots=400, n_seeds=3, seed=5)
    assert first == second
    assert first.mean.avg_cost == pytest.approx(np.mean([m.avg_cost for m in first.per_seed]), rel=1e-12)
    assert first.per_seed[0] != first.per_seed[1]
