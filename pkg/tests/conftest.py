"""
File: conftest.py

Overview:
Shared pytest fixtures for the simulator and learning suite. Every fixture
is cheap and deterministic so tests can be combined freely.

Fixtures:
- `default_config`: the documented default link (normal channel, W1, lambda = 14).
- `lossless_config`: defaults with near-zero packet error ratios and no arrivals.
- `micro_config`: the two-packet, one-class, arrival-free instance used by the oracle checks.
- `reduced_config`: Q = 5, C = 3, lambda = 2, used for state-space coverage.
- `rng`: a seeded numpy generator.
- `small_net` / `small_train_config`: a narrow network and a short training run.
"""

# Third-party imports
import numpy as np
import pytest

# Application-specific imports
from app.models.dueling_net import init_dueling_net
from app.schemas.env_schemas import EnvConfig
from app.schemas.training_schemas import TrainConfig
from app.services.env_service import IcsEnvironment
from app.services.self_check_service import micro_mdp_config

LOSSLESS_PER = [1e-12, 1e-12, 1e-12]


@pytest.fixture
def default_config():
    return EnvConfig()


@pytest.fixture
def lossless_config():
    return EnvConfig(per_levels=LOSSLESS_PER, arrival_mean=0.0)


@pytest.fixture
def micro_config():
    return micro_mdp_config()


@pytest.fixture
def reduced_config():
    return EnvConfig(queue_capacity=5, arrival_mean=2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def default_env(default_config):
    return IcsEnvironment(default_config, seed=7)


@pytest.fixture
def small_net():
    return init_dueling_net(seed=3, hidden_dim=8)


@pytest.fixture
def small_train_config():
    return TrainConfig(
        total_steps=300,
        buffer_capacity=200,
        batch_size=8,
        target_sync=50,
        learn_start=20,
        epsilon_decay_steps=200,
        hidden_dim=8,
        moving_average_window=50,
        log_every=10,
        learning_rate=1e-3,
        seed=11,
    )
