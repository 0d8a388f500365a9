import pytest
from pydantic import ValidationError

from app.schemas.env_schemas import (
    CHANNEL_PRESETS, EnvConfig, EnvState, LostFramePolicy, ChannelPreset, WeightPreset,
)
from app.schemas.experiment_schemas import AgentName, CellKey, ExperimentSpec
from app.schemas.training_schemas import TrainConfig


# Test the documented defaults
def test_env_config_defaults(default_config):
    assert default_config.queue_capacity == 50
    assert default_config.max_frames == 10
    assert default_config.class_probs == [0.2, 0.6, 0.2]
    assert default_config.weights == (0.05, 0.4, 0.5)
    assert default_config.lost_frame_policy is LostFramePolicy.DISCARD
    assert default_config.state_count == 51 * 3


@pytest.mark.parametrize("preset", list(ChannelPreset))
def test_channel_preset_resolves_class_probs(preset):
    cfg = EnvConfig(channel=preset.value)
    assert tuple(cfg.class_probs) == CHANNEL_PRESETS[preset]


# Test that an explicit vector wins over the preset
def test_explicit_class_probs_win_over_channel():
    cfg = EnvConfig(channel="poor", class_probs="0.1, 0.1, 0.8")
    assert cfg.class_probs == [0.1, 0.1, 0.8]


def test_weight_preset_by_name():
    assert EnvConfig(weights="W2").weights == (0.025, 0.8, 0.5)
    assert EnvConfig(weights=WeightPreset.W1).weights == (0.05, 0.4, 0.5)
    assert EnvConfig(weights="[0.1, 0.2, 0.3]").weights == (0.1, 0.2, 0.3)


@pytest.mark.parametrize("overrides", [
    {"class_probs": [0.5, 0.6, 0.2]},
    {"class_probs": [0.5, 0.5]},
    {"per_levels": [0.0, 0.01, 0.003]},
    {"per_levels": [0.1, 1.0, 0.003]},
    {"weights": (-0.1, 0.4, 0.5)},
    {"preamble_samples": 50_000},
    {"v_max": 0.0},
    {"unknown_key": 1},
])
def test_env_config_rejects_invalid_values(overrides):
    with pytest.raises(ValidationError):
        EnvConfig(**overrides)


def test_class_probs_tolerance():
    EnvConfig(class_probs=[0.2, 0.6, 0.2 + 5e-13])
    with pytest.raises(ValidationError):
        EnvConfig(class_probs=[0.2, 0.6, 0.2 + 1e-9])


# Test that overrides re-validate and swap presets cleanly
def test_with_overrides_replaces_channel(default_config):
    good = default_config.with_overrides(channel=ChannelPreset.GOOD, arrival_mean=2.0)
    assert good.class_probs == [0.2, 0.2, 0.6]
    assert good.arrival_mean == 2.0
    assert default_config.arrival_mean == 14.0
    with pytest.raises(ValidationError):
        default_config.with_overrides(arrival_mean=-1.0)


def test_env_state_bounds():
    with pytest.raises(ValidationError):
        EnvState(q=-1, c=0)


def test_train_config_accepts_scientific_integers():
    cfg = TrainConfig(total_steps="2e5", buffer_capacity="1e5", target_sync=1e4)
    assert cfg.total_steps == 200_000
    assert cfg.buffer_capacity == 100_000
    assert cfg.target_sync == 10_000


@pytest.mark.parametrize("overrides", [
    {"batch_size": 64, "buffer_capacity": 32},
    {"target_sync": 0},
    {"discount": 1.0},
    {"epsilon_start": 0.1, "epsilon_end": 0.5},
    {"total_steps": "2.5"},
])
def test_train_config_rejects_invalid_values(overrides):
    with pytest.raises(ValidationError):
        TrainConfig(**overrides)


def test_experiment_spec_defaults_and_lists():
    spec = ExperimentSpec()
    assert spec.lambdas == [2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0, 20.0]
    assert spec.cell_count == 4 * 10 * 1 * 1 * 5
    parsed = ExperimentSpec(agents="greedy, deterministic", lambdas="[2, 14]", seeds="0,1,2", channels="good")
    assert parsed.agents == [AgentName.GREEDY, AgentName.DETERMINISTIC]
    assert parsed.lambdas == [2.0, 14.0]
    assert parsed.seeds == [0, 1, 2]
    assert parsed.cell_count == 12


@pytest.mark.parametrize("overrides", [{"lambdas": []}, {"seeds": []}, {"lambdas": [-2.0]}, {"agents": "dqn"}])
def test_experiment_spec_rejects_invalid_values(overrides):
    with pytest.raises(ValidationError):
        ExperimentSpec(**overrides)


def test_cell_key_label_is_stable():
    key = CellKey(agent="i-ics", arrival_mean=14.0, channel="normal", weights="W1", seed=3)
    assert key.label() == "i-ics|14.0|normal|W1|3"
    assert AgentName.I_ICS.learns and not AgentName.GREEDY.learns
