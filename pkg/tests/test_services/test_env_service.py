import math

import numpy as np
import pytest

from app.schemas.env_schemas import EnvConfig, EnvState, LostFramePolicy
from app.services.env_service import (
    IcsEnvironment, bit_error_prob, capacity, derive_timing, encode_state, frame_error_prob, reward,
    sensing_accuracy, sensing_resolution, state_from_index, state_index, transition_model,
)
from app.services.agent_service import RandomPolicy
from app.utils.errors import ConfigurationError, DomainError

LOSSLESS = [1e-12, 1e-12, 1e-12]


# Test the timing derived from the default carrier and velocity
def test_derive_timing_defaults(default_config):
    timing = derive_timing(default_config)
    assert timing.wavelength == pytest.approx(4.99654e-3, rel=1e-5)
    assert timing.max_doppler == pytest.approx(20.0138e3, rel=1e-5)
    assert timing.frame_spacing == pytest.approx(24.9827e-6, rel=1e-5)
    assert timing.cpi_duration == pytest.approx(10 * timing.frame_spacing)
    assert timing.slot_samples == 43970


def test_doubling_v_max_halves_frame_spacing(default_config):
    base = derive_timing(default_config).frame_spacing
    doubled = derive_timing(default_config.with_overrides(v_max=100.0, preamble_samples=1000)).frame_spacing
    assert doubled == pytest.approx(base / 2, rel=1e-12)


def test_derive_timing_rejects_non_positive_inputs(default_config):
    broken = default_config.model_copy(update={"carrier_freq": 0.0})
    with pytest.raises(ConfigurationError):
        derive_timing(broken)


# Test the packet budget per frame count
@pytest.mark.parametrize("frames, expected", [
    (1, 18), (2, 17), (3, 16), (4, 15), (5, 14), (6, 14), (7, 13), (8, 12), (9, 11), (10, 10),
])
def test_capacity_defaults(default_config, frames, expected):
    cap = capacity(frames, default_config)
    assert cap.total_packets == expected
    assert cap.frame_count == frames
    assert sum(cap.per_frame_packets) == expected


def test_capacity_short_frames_carry_one_packet(default_config):
    cap = capacity(10, default_config)
    assert cap.per_frame_packets == (1,) * 10
    assert cap.per_frame_bits == (20321,) * 10


def test_capacity_uniform_frames_hold_exactly_one_packet():
    # 1000-sample slots, 200-sample preamble, 15 bits/sample: 12000 data bits per frame
    cfg = EnvConfig(sample_rate=1000 / derive_timing(EnvConfig()).frame_spacing, preamble_samples=200,
                    spectral_eff=15.0)
    assert derive_timing(cfg).slot_samples == 1000
    assert capacity(cfg.max_frames, cfg).total_packets == cfg.max_frames


@pytest.mark.parametrize("frames", [0, 11, -1])
def test_capacity_rejects_out_of_range(default_config, frames):
    with pytest.raises(DomainError):
        capacity(frames, default_config)


# Test the bit and frame error probabilities
def test_bit_error_prob_examples():
    assert bit_error_prob(0.01, 12000) == pytest.approx(8.3757e-7, rel=1e-4)
    assert bit_error_prob(0.01, 12000) == pytest.approx(1 - 0.99 ** (1 / 12000), rel=1e-9)
    assert bit_error_prob(0.37, 1) == pytest.approx(0.37, rel=1e-12)
    assert bit_error_prob(1e-15, 12000) < 1e-18


@pytest.mark.parametrize("per", [0.0, 1.0, -0.1, 1.5])
def test_bit_error_prob_rejects_out_of_range(per):
    with pytest.raises(DomainError):
        bit_error_prob(per, 12000)


def test_frame_error_prob_examples():
    assert frame_error_prob(0.0, 10**6) == 0.0
    assert frame_error_prob(3e-4, 1) == pytest.approx(3e-4, rel=1e-12)
    assert frame_error_prob(1e-5, 100_000) == pytest.approx(0.63212, rel=1e-5)
    assert frame_error_prob(1e-5, 100_000) == pytest.approx(1 - (1 - 1e-5) ** 100_000, rel=1e-9)


def test_frame_error_prob_increases_with_frame_size():
    probs = [frame_error_prob(1e-6, bits) for bits in (1000, 10_000, 100_000, 1_000_000)]
    assert all(a < b for a, b in zip(probs, probs[1:]))


# Test the sensing metrics
def test_sensing_resolution_examples(default_config):
    assert sensing_resolution(10, default_config) == pytest.approx(10.0, rel=1e-9)
    assert sensing_resolution(1, default_config) == pytest.approx(100.0, rel=1e-9)
    assert sensing_resolution(5, default_config) == pytest.approx(2 * sensing_resolution(10, default_config))


def test_sensing_accuracy_examples(default_config):
    assert sensing_accuracy(10, 100.0, default_config) == pytest.approx(10 / math.sqrt(200), rel=1e-9)
    assert sensing_accuracy(10, 100.0, default_config) == pytest.approx(0.70711, rel=1e-5)
    ratio = sensing_accuracy(5, 100.0, default_config) / sensing_accuracy(10, 100.0, default_config)
    assert ratio == pytest.approx(2.0, rel=1e-12)
    assert sensing_accuracy(10, 1e12, default_config) < 1e-4
    with pytest.raises(DomainError):
        sensing_accuracy(10, 0.0, default_config)


def test_tradeoff_monotonicity(default_config):
    packets = [capacity(a, default_config).total_packets for a in range(1, 11)]
    deltas = [sensing_accuracy(a, default_config.snr_r, default_config) for a in range(1, 11)]
    resolutions = [sensing_resolution(a, default_config) for a in range(1, 11)]
    assert all(x >= y for x, y in zip(packets, packets[1:]))
    assert all(x > y for x, y in zip(deltas, deltas[1:]))
    assert all(x > y for x, y in zip(resolutions, resolutions[1:]))


# Test the reward function
def test_reward_examples(default_config):
    assert reward(10, 1.0, 2, default_config) == pytest.approx(-1.9, rel=1e-12)
    assert reward(0, 0.0, 0, default_config) == 0.0
    assert reward(20, 0.5, 0, default_config.with_overrides(weights="W2")) == pytest.approx(-0.9, rel=1e-12)


# Test the network state encoding
@pytest.mark.parametrize("q, c, expected", [(0, 0, [0.0, 0.0]), (50, 2, [1.0, 1.0]), (25, 1, [0.5, 0.5])])
def test_encode_state(default_config, q, c, expected):
    np.testing.assert_allclose(encode_state(EnvState(q=q, c=c), default_config), expected)


def test_encode_state_single_class(micro_config):
    np.testing.assert_allclose(encode_state(EnvState(q=1, c=0), micro_config), [0.5, 0.0])


def test_state_index_bijection(default_config):
    indices = [state_index(EnvState(q=q, c=c), default_config) for q in range(51) for c in range(3)]
    assert indices == list(range(default_config.state_count))
    assert state_from_index(77, default_config) == EnvState(q=25, c=2)


# Test the slot dynamics
def test_step_empty_system_pays_only_sensing():
    cfg = EnvConfig(arrival_mean=0.0)
    env = IcsEnvironment(cfg, seed=1)
    for frames in range(1, 11):
        outcome = env.step(EnvState(q=0, c=1), frames)
        assert outcome.queue_end == 0
        assert outcome.overflow_drops == 0
        assert outcome.reward == pytest.approx(-0.4 * sensing_accuracy(frames, 100.0, cfg), rel=1e-12)


def test_step_dequeues_capacity(lossless_config):
    env = IcsEnvironment(lossless_config, seed=2)
    outcome = env.step(EnvState(q=30, c=0), 1)
    assert outcome.transmitted_ok == 18
    assert outcome.queue_end == 12
    assert outcome.overflow_drops == 0
    assert outcome.next_state.q == 12


def test_step_overflow_with_forced_arrivals():
    cfg = EnvConfig(per_levels=LOSSLESS)
    env = IcsEnvironment(cfg, seed=3)
    outcome = env.step(EnvState(q=50, c=1), 10, arrivals=25)
    assert outcome.transmitted_ok == 10
    assert outcome.queue_end == 50
    assert outcome.overflow_drops == 15
    assert outcome.arrivals == 25
    assert outcome.reward == pytest.approx(-(0.05 * 50 + 0.4 * sensing_accuracy(10, 100.0, cfg) + 0.5 * 15))


@pytest.mark.parametrize("frames", [0, 11])
def test_step_rejects_invalid_action(default_env, frames):
    with pytest.raises(DomainError):
        default_env.step(EnvState(q=0, c=0), frames)


def test_step_rejects_state_outside_space(default_env):
    with pytest.raises(DomainError):
        default_env.step(EnvState(q=51, c=0), 3)
    with pytest.raises(DomainError):
        default_env.step(EnvState(q=3, c=3), 3)


# Test per-slot conservation, bounds and the reward identity over a long random run
@pytest.mark.parametrize("channel", ["poor", "normal", "good"])
def test_step_invariants_hold(channel):
    cfg = EnvConfig(channel=channel, per_levels=[0.3, 0.1, 0.05], arrival_mean=16.0)
    env = IcsEnvironment(cfg, seed=4)
    policy = RandomPolicy(cfg, np.random.default_rng(5))
    w1, w2, w3 = cfg.weights
    state = env.reset()
    lost_total = 0
    for _ in range(3000):
        frames = policy.act(state)
        outcome = env.step(state, frames)
        cap = env.capacities[frames]
        assert outcome.transmitted_ok + outcome.frame_loss_packets <= cap.total_packets
        assert 0 <= outcome.queue_end <= cfg.queue_capacity
        assert outcome.arrivals == (outcome.queue_end - state.q + outcome.transmitted_ok
                                    + outcome.frame_loss_packets + outcome.overflow_drops)
        assert outcome.reward == -(w1 * outcome.queue_end + w2 * outcome.sensing_accuracy
                                   + w3 * outcome.overflow_drops)
        assert outcome.next_state.c == outcome.realized_class
        lost_total += outcome.frame_loss_packets
        state = outcome.next_state
    assert lost_total > 0


def test_requeue_policy_keeps_lost_packets():
    cfg = EnvConfig(per_levels=[0.9, 0.9, 0.9], lost_frame_policy=LostFramePolicy.REQUEUE)
    env = IcsEnvironment(cfg, seed=6)
    outcome = env.step(EnvState(q=40, c=0), 1, arrivals=0)
    assert outcome.queue_end == 40 - outcome.transmitted_ok
    assert outcome.frame_loss_packets == 18 - outcome.transmitted_ok


def test_same_seed_same_trajectory(default_config):
    def trajectory(seed):
        env = IcsEnvironment(default_config, seed=seed)
        state = env.reset()
        outcomes = []
        for t in range(200):
            outcome = env.step(state, 1 + t % 10)
            outcomes.append(outcome)
            state = outcome.next_state
        return outcomes

    assert trajectory(9) == trajectory(9)
    assert trajectory(9) != trajectory(10)


def test_reset_starts_empty(default_env):
    state = default_env.reset()
    assert state.q == 0
    assert 0 <= state.c < 3


def test_poisson_arrivals_match_mean(default_config):
    env = IcsEnvironment(default_config, seed=8)
    draws = np.array([env._draw_arrivals() for _ in range(20_000)])
    assert draws.mean() == pytest.approx(14.0, abs=0.15)
    assert draws.var() == pytest.approx(14.0, rel=0.05)


# Test that a random policy reaches every state of the reduced instance
@pytest.mark.parametrize("seed", range(10))
def test_random_policy_visits_every_state(reduced_config, seed):
    env = IcsEnvironment(reduced_config, seed=seed)
    policy = RandomPolicy(reduced_config, np.random.default_rng(1000 + seed))
    seen = set()
    state = env.reset()
    for _ in range(1_000_000):
        seen.add((state.q, state.c))
        if len(seen) == reduced_config.state_count:
            break
        state = env.step(state, policy.act(state)).next_state
    assert len(seen) == 18


# Test the exact transition kernel
def test_transition_model_is_stochastic(reduced_config):
    model = transition_model(reduced_config)
    assert model.probabilities.shape == (18, 10, 18)
    np.testing.assert_allclose(model.probabilities.sum(axis=2), 1.0, atol=1e-12)
    assert np.all(model.probabilities >= 0.0)


def test_transition_model_matches_simulation(reduced_config):
    model = transition_model(reduced_config)
    env = IcsEnvironment(reduced_config, seed=21)
    state, frames = EnvState(q=4, c=1), 3
    counts = np.zeros(reduced_config.state_count)
    rewards = []
    for _ in range(20_000):
        outcome = env.step(state, frames)
        counts[state_index(outcome.next_state, reduced_config)] += 1
        rewards.append(outcome.reward)
    row = state_index(state, reduced_config)
    np.testing.assert_allclose(counts / counts.sum(), model.probabilities[row, frames - 1], atol=0.015)
    assert np.mean(rewards) == pytest.approx(model.rewards[row, frames - 1], abs=0.02)
