from builtins import float, int, str
from enum import Enum
from typing import Annotated, List, Optional

from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, PlainSerializer, field_validator

from app.schemas.env_schemas import ChannelPreset, WeightPreset
from app.utils.validators import coerce_int, split_list

CUSTOM_SCENARIO = "custom"


def _custom_as_none(value):
    return None if value == CUSTOM_SCENARIO else value


def scenario_name(preset) -> str:
    """Label of a channel or weight preset; ``custom`` when the base config vector is used as is."""
    return CUSTOM_SCENARIO if preset is None else preset.value


# None means "keep the base environment's vector"; written as "custom" in tables.
ScenarioChannel = Annotated[Optional[ChannelPreset], BeforeValidator(_custom_as_none),
                            PlainSerializer(scenario_name, return_type=str)]
ScenarioWeights = Annotated[Optional[WeightPreset], BeforeValidator(_custom_as_none),
                            PlainSerializer(scenario_name, return_type=str)]


class AgentName(str, Enum):
    I_ICS = "i-ics"
    QLEARNING = "qlearning"
    GREEDY = "greedy"
    DETERMINISTIC = "deterministic"

    @property
    def learns(self) -> bool:
        return self in (AgentName.I_ICS, AgentName.QLEARNING)


class ExperimentSpec(BaseModel):
    """The experiment matrix: agents x arrival rates x channel presets x weight presets x seeds."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    agents: List[AgentName] = Field(default=list(AgentName), min_length=1)
    lambdas: List[float] = Field(default=[float(x) for x in range(2, 21, 2)], min_length=1)
    channels: Optional[List[ChannelPreset]] = Field(default=None, min_length=1, description="Defaults to the env preset")
    weights: Optional[List[WeightPreset]] = Field(default=None, min_length=1, description="Defaults to the env preset")
    seeds: List[int] = Field(default=[0, 1, 2, 3, 4], min_length=1)
    eval_slots: int = Field(default=20_000, ge=1)
    deterministic_frames: Optional[int] = Field(default=None, ge=1, description="n_dp; defaults to N // 2")

    @field_validator("agents", "lambdas", "channels", "weights", "seeds", mode="before")
    @classmethod
    def parse_lists(cls, value):
        return split_list(value)

    @field_validator("lambdas")
    @classmethod
    def check_lambdas(cls, value):
        if any(lam < 0 for lam in value):
            raise ValueError("Arrival rates must be non-negative.")
        return value

    @field_validator("eval_slots", mode="before")
    @classmethod
    def accept_scientific_integers(cls, value):
        return coerce_int(value)

    @property
    def cell_count(self) -> int:
        return (len(self.agents) * len(self.lambdas) * len(self.channels or [None]) * len(self.weights or [None])
                * len(self.seeds))


class CellKey(BaseModel):
    """Coordinates of one experiment-matrix cell."""
    model_config = ConfigDict(frozen=True)

    agent: AgentName
    arrival_mean: float
    channel: ScenarioChannel
    weights: ScenarioWeights
    seed: int

    def label(self) -> str:
        return (f"{self.agent.value}|{self.arrival_mean!r}|{scenario_name(self.channel)}|"
                f"{scenario_name(self.weights)}|{self.seed}")


class SeedMetrics(BaseModel):
    """Per-slot averages from evaluating one policy under one seed."""
    seed: int
    avg_cost: float = Field(..., ge=0.0, description="Mean of the negated reward")
    avg_queue_len: float = Field(..., ge=0.0)
    avg_delta: float = Field(..., ge=0.0)
    avg_drops: float = Field(..., ge=0.0)
    frame_loss_packets: float = Field(..., ge=0.0, description="Packets lost to frame errors, per slot")


class EvaluationReport(BaseModel):
    per_seed: List[SeedMetrics]
    mean: SeedMetrics


class MetricsRecord(BaseModel):
    """One row of the result table: a matrix cell and its evaluated averages."""
    agent: AgentName
    arrival_mean: float
    channel: ScenarioChannel
    weights: ScenarioWeights
    seed: int
    avg_cost: float = Field(..., ge=0.0, description="Mean of the negated reward")
    avg_queue_len: float = Field(..., ge=0.0)
    avg_delta: float = Field(..., ge=0.0)
    avg_drops: float = Field(..., ge=0.0)
    frame_loss_packets: float = Field(..., ge=0.0)
    wall_time: float = Field(default=0.0, ge=0.0)

    @property
    def key(self) -> CellKey:
        return CellKey(agent=self.agent, arrival_mean=self.arrival_mean, channel=self.channel,
                       weights=self.weights, seed=self.seed)


class MetricSummary(BaseModel):
    mean: float
    std: float


class AggregateRecord(BaseModel):
    """Seed-averaged metrics of one (agent, lambda, channel, weights) cell."""
    agent: AgentName
    arrival_mean: float
    channel: ScenarioChannel
    weights: ScenarioWeights
    n_seeds: int
    avg_cost: MetricSummary
    avg_queue_len: MetricSummary
    avg_delta: MetricSummary
    avg_drops: MetricSummary
    frame_loss_packets: MetricSummary


class CellFailure(BaseModel):
    key: CellKey
    error: str


class MatrixSummary(BaseModel):
    cells: List[AggregateRecord]
    failures: List[CellFailure] = []
