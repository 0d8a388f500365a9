from pathlib import Path

import pytest

from app.schemas.env_schemas import ChannelPreset, WeightPreset
from app.schemas.experiment_schemas import AgentName
from app.services.harness_service import cell_env_config, cell_keys
from app.utils.config_loader import RunConfig, group_sections, load_config_file
from app.utils.errors import ConfigurationError

CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"


def _write(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text)
    return str(path)


# Test reading a dotted run file
def test_load_config_file(tmp_path):
    path = _write(tmp_path, "\n".join([
        "# comment line",
        "env.channel = poor",
        "env.queue_capacity = 40",
        "train.total_steps = 2e5",
        "experiment.lambdas = 2,4,6",
        "experiment.agents = greedy, deterministic",
    ]))
    config = load_config_file(path)
    assert config.env.class_probs == [0.6, 0.2, 0.2]
    assert config.env.queue_capacity == 40
    assert config.train.total_steps == 200_000
    assert config.experiment.lambdas == [2.0, 4.0, 6.0]
    assert config.experiment.agents == [AgentName.GREEDY, AgentName.DETERMINISTIC]


def test_empty_file_gives_defaults(tmp_path):
    assert load_config_file(_write(tmp_path, "")) == RunConfig()


def test_shipped_configs_load():
    assert load_config_file(str(CONFIG_DIR / "default.conf")) == RunConfig()
    assert load_config_file(str(CONFIG_DIR / "smoke.conf")).experiment.cell_count == 16


@pytest.mark.parametrize("text", [
    "envx.channel = poor",
    "channel = poor",
    "env.unknown_key = 3",
    "env.class_probs = 0.5, 0.6, 0.2",
    "train.batch_size = 64\ntrain.buffer_capacity = 10",
])
def test_invalid_files_are_rejected(tmp_path, text):
    with pytest.raises(ConfigurationError):
        load_config_file(_write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config_file(str(tmp_path / "absent.conf"))


def test_group_sections_rejects_empty_value():
    with pytest.raises(ConfigurationError):
        group_sections({"env.channel": None})


# Test command-line overrides on top of a loaded file
def test_with_overrides(tmp_path):
    config = load_config_file(_write(tmp_path, "env.channel = poor\ntrain.seed = 3"))
    updated = config.with_overrides(env={"channel": "good", "arrival_mean": None}, train={"total_steps": 10})
    assert updated.env.class_probs == [0.2, 0.2, 0.6]
    assert updated.env.arrival_mean == 14.0
    assert updated.train.total_steps == 10
    assert updated.train.seed == 3
    assert config.env.class_probs == [0.6, 0.2, 0.2]
    with pytest.raises(ConfigurationError):
        config.with_overrides(experiment={"seeds": []})


# Test that env presets in a run file reach the matrix cells
def test_env_presets_reach_matrix_cells(tmp_path):
    config = load_config_file(_write(tmp_path, "env.channel = poor\nenv.weights = W2\nexperiment.lambdas = 4"))
    keys = cell_keys(config.experiment, config.env)
    assert (keys[0].channel, keys[0].weights) == (ChannelPreset.POOR, WeightPreset.W2)
    assert {(k.channel, k.weights) for k in keys} == {(ChannelPreset.POOR, WeightPreset.W2)}
    cell_env = cell_env_config(keys[0], config.env)
    assert cell_env.weights == (0.025, 0.8, 0.5)
    assert cell_env.class_probs == [0.6, 0.2, 0.2]
    assert cell_env.arrival_mean == 4.0


def test_custom_env_vectors_are_kept(tmp_path):
    config = load_config_file(_write(tmp_path, "env.class_probs = 0.5, 0.3, 0.2\nenv.weights = 0.1, 0.2, 0.3"))
    key = cell_keys(config.experiment, config.env)[0]
    assert key.channel is None
    assert key.weights is None
    assert "|custom|custom|" in key.label()
    cell_env = cell_env_config(key, config.env)
    assert cell_env.class_probs == [0.5, 0.3, 0.2]
    assert cell_env.weights == (0.1, 0.2, 0.3)


@pytest.mark.parametrize("text", [
    "env.channel = poor\nexperiment.channels = good",
    "env.channel = poor\nexperiment.channels = poor, good",
    "env.class_probs = 0.5, 0.3, 0.2\nexperiment.channels = normal",
    "env.weights = W2\nexperiment.weights = W1",
])
def test_contradicting_presets_are_rejected(tmp_path, text):
    with pytest.raises(ConfigurationError, match="make them agree"):
        load_config_file(_write(tmp_path, text))


def test_agreeing_presets_are_accepted(tmp_path):
    config = load_config_file(_write(tmp_path, "env.channel = good\nenv.weights = W2\n"
                                               "experiment.channels = good\nexperiment.weights = W2"))
    assert config.experiment.channels == [ChannelPreset.GOOD]
    assert config.env.weight_preset == WeightPreset.W2
