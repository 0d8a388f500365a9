"""
Run-configuration files.

A run file is a flat list of ``section.key = value`` lines with ``#``
comments, read with python-dotenv. Keys are grouped by their first dotted
component into the ``env``, ``train`` and ``experiment`` sections and
validated by the matching pydantic model::

    env.channel = poor
    env.queue_capacity = 50
    train.total_steps = 2e5
    experiment.lambdas = 2,4,6
"""

from builtins import dict, str
import logging
from typing import Dict, Mapping, Optional

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from app.schemas.env_schemas import EnvConfig
from app.schemas.experiment_schemas import ExperimentSpec, scenario_name
from app.schemas.training_schemas import TrainConfig
from app.utils.errors import ConfigurationError

logger = logging.getLogger(__name__)

SECTIONS = ("env", "train", "experiment")


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    env: EnvConfig = Field(default_factory=EnvConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    experiment: ExperimentSpec = Field(default_factory=ExperimentSpec)

    def with_overrides(self, env: Optional[Mapping] = None, train: Optional[Mapping] = None,
                       experiment: Optional[Mapping] = None) -> "RunConfig":
        """Apply CLI-level overrides on top of the file values, re-validating each section."""
        sections = {
            "env": {**self.env.model_dump(), **_clean(env)},
            "train": {**self.train.model_dump(), **_clean(train)},
            "experiment": {**self.experiment.model_dump(), **_clean(experiment)},
        }
        if env and "channel" in env and "class_probs" not in env:
            sections["env"].pop("class_probs")
        return build_run_config(sections)


def _clean(overrides: Optional[Mapping]) -> Dict:
    return {k: v for k, v in (overrides or {}).items() if v is not None}


def group_sections(values: Mapping[str, Optional[str]]) -> Dict[str, Dict[str, str]]:
    """Split dotted keys into per-section dictionaries."""
    grouped: Dict[str, Dict[str, str]] = {section: {} for section in SECTIONS}
    for raw_key, value in values.items():
        section, _, key = raw_key.partition(".")
        if section not in grouped or not key:
            raise ConfigurationError(f"Unknown configuration key '{raw_key}'; expected one of "
                                     f"{', '.join(s + '.<key>' for s in SECTIONS)}.")
        if value is None:
            raise ConfigurationError(f"Configuration key '{raw_key}' has no value.")
        grouped[section][key] = value
    return grouped


def build_run_config(sections: Mapping[str, Mapping]) -> RunConfig:
    try:
        return RunConfig(
            env=EnvConfig(**sections.get("env", {})),
            train=TrainConfig(**sections.get("train", {})),
            experiment=ExperimentSpec(**sections.get("experiment", {})),
        )
    except ValidationError as e:
        logger.error(f"Invalid run configuration: {e}")
        raise ConfigurationError(f"Invalid run configuration: {e}") from e


def load_config_file(path: str) -> RunConfig:
    """
    Read and validate a run file.

    Raises:
        ConfigurationError: If the file is missing, has keys outside the
            known sections, any value fails validation, or the env presets
            contradict the experiment channel or weight lists.
    """
    try:
        with open(path, encoding="utf-8") as stream:
            values = dotenv_values(stream=stream)
    except OSError as e:
        logger.error(f"Cannot read configuration file {path}: {e}")
        raise ConfigurationError(f"Cannot read configuration file {path}: {e}") from e
    logger.debug(f"Loaded {len(values)} keys from {path}")
    sections = group_sections(dict(values))
    config = build_run_config(sections)
    check_scenario_consistency(config, sections)
    return config


def check_scenario_consistency(config: RunConfig, sections: Mapping[str, Mapping]) -> None:
    """
    A file that fixes the env channel or weights and also lists the matrix axis must agree with itself.

    Without an ``experiment.channels`` or ``experiment.weights`` list the
    matrix takes its single scenario from the env section instead.
    """
    env_keys, experiment_keys = set(sections.get("env", {})), set(sections.get("experiment", {}))
    if "channels" in experiment_keys and env_keys & {"channel", "class_probs"}:
        preset = config.env.channel_preset
        if config.experiment.channels != [preset]:
            raise ConfigurationError(
                f"env selects channel '{scenario_name(preset)}' but experiment.channels is "
                f"{[c.value for c in config.experiment.channels]}; drop one of them or make them agree."
            )
    if "weights" in experiment_keys and "weights" in env_keys:
        preset = config.env.weight_preset
        if config.experiment.weights != [preset]:
            raise ConfigurationError(
                f"env selects weights '{scenario_name(preset)}' but experiment.weights is "
                f"{[w.value for w in config.experiment.weights]}; drop one of them or make them agree."
            )
