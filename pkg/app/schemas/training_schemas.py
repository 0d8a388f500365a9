from builtins import float, int, str
from enum import Enum
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.utils.validators import coerce_int


class Aggregation(str, Enum):
    """How the value and advantage streams are recombined into Q-values."""
    MEAN = "mean"
    MAX = "max"
    NAIVE = "naive"


class OptimizerName(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


class LearningRateSchedule(str, Enum):
    """Tabular learning-rate rule: fixed alpha, or 1/n(s,a) visits (Robbins-Monro)."""
    CONSTANT = "constant"
    #: 1/n(s,a) counting the current update, so the first visit uses 1.0 and overwrites the zero initial
    #: value. The [0, 1) bound on ``alpha`` applies to the constant rule only.
    HARMONIC = "harmonic"


class TrainConfig(BaseModel):
    """Hyperparameters shared by the deep and the tabular training loops."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    total_steps: int = Field(default=200_000, ge=0, description="T, environment steps")
    buffer_capacity: int = Field(default=100_000, ge=1, description="|E|, replay memory size")
    batch_size: int = Field(default=32, ge=1, description="S_b, mini-batch size")
    target_sync: int = Field(default=10_000, ge=1, description="U, steps between target network copies")
    discount: float = Field(default=0.9, ge=0.0, lt=1.0, description="eta, discount factor")
    learning_rate: float = Field(default=1e-4, gt=0.0, description="Optimizer step size for the Q-network")
    optimizer: OptimizerName = Field(default=OptimizerName.ADAM)
    adam_beta1: float = Field(default=0.9, ge=0.0, lt=1.0)
    adam_beta2: float = Field(default=0.999, ge=0.0, lt=1.0)
    adam_epsilon: float = Field(default=1e-8, gt=0.0)
    epsilon_start: float = Field(default=1.0, ge=0.0, le=1.0)
    epsilon_end: float = Field(default=0.01, ge=0.0, le=1.0)
    epsilon_decay_steps: int = Field(default=100_000, ge=0)
    learn_start: int = Field(default=1000, ge=1, description="Transitions stored before gradient updates begin")
    hidden_dim: int = Field(default=128, ge=1, description="H, hidden layer width")
    aggregation: Aggregation = Field(default=Aggregation.MEAN)
    q_learning_rate: float = Field(default=0.1, ge=0.0, lt=1.0, description="alpha for tabular Q-learning")
    q_learning_rate_schedule: LearningRateSchedule = Field(default=LearningRateSchedule.CONSTANT)
    moving_average_window: int = Field(default=1000, ge=1)
    log_every: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0)

    @field_validator(
        "total_steps", "buffer_capacity", "batch_size", "target_sync", "epsilon_decay_steps",
        "learn_start", "hidden_dim", "moving_average_window", "log_every", "seed", mode="before",
    )
    @classmethod
    def accept_scientific_integers(cls, value):
        return coerce_int(value)

    @model_validator(mode="after")
    def check_sizes(self):
        if self.batch_size > self.buffer_capacity:
            raise ValueError("batch_size must not exceed buffer_capacity.")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end must not exceed epsilon_start.")
        return self


class ConvergenceEntry(BaseModel):
    """One row of a convergence log."""
    step: int
    epsilon: float
    moving_avg_reward: float
    loss: Optional[float] = None
