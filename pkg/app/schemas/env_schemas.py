from builtins import float, int, len, str
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.utils.validators import split_list, validate_open_unit_interval, validate_probability_vector

SPEED_OF_LIGHT = 2.99792458e8


class LostFramePolicy(str, Enum):
    """What happens to packets carried by a frame that fails to decode."""
    DISCARD = "discard"
    REQUEUE = "requeue"


class ChannelPreset(str, Enum):
    POOR = "poor"
    NORMAL = "normal"
    GOOD = "good"


class WeightPreset(str, Enum):
    W1 = "W1"
    W2 = "W2"


CHANNEL_PRESETS: Dict[ChannelPreset, Tuple[float, ...]] = {
    ChannelPreset.POOR: (0.6, 0.2, 0.2),
    ChannelPreset.NORMAL: (0.2, 0.6, 0.2),
    ChannelPreset.GOOD: (0.2, 0.2, 0.6),
}

WEIGHT_PRESETS: Dict[WeightPreset, Tuple[float, float, float]] = {
    WeightPreset.W1: (0.05, 0.4, 0.5),
    WeightPreset.W2: (0.025, 0.8, 0.5),
}


class EnvConfig(BaseModel):
    """
    Physical, queueing, channel and reward parameters of the simulated ICS link.

    The keys ``channel`` (poor/normal/good) and ``weights`` given as a preset
    name (W1/W2) are resolved into ``class_probs`` and ``weights``. An explicit
    ``class_probs`` always wins over a ``channel`` preset.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    queue_capacity: int = Field(default=50, ge=1, description="Q, packets the data queue can hold")
    packet_bytes: int = Field(default=1500, ge=1, description="B, bytes per packet")
    arrival_mean: float = Field(default=14.0, ge=0.0, description="lambda, mean Poisson arrivals per slot")
    max_frames: int = Field(default=10, ge=1, description="N, frames per CPI (T_CPI = N * T_d)")
    v_max: float = Field(default=50.0, gt=0.0, description="Maximum relative target velocity in m/s")
    carrier_freq: float = Field(default=60e9, gt=0.0, description="f_c in Hz")
    sample_rate: float = Field(default=1.76e9, gt=0.0, description="f_s in samples/s")
    preamble_samples: int = Field(default=3328, ge=0, description="P_s, preamble length in samples per frame")
    spectral_eff: float = Field(default=0.5, gt=0.0, description="Data bits carried per sample")
    per_levels: List[float] = Field(default=[0.10, 0.01, 0.003], min_length=1, description="Packet error ratio per channel class")
    class_probs: List[float] = Field(default=list(CHANNEL_PRESETS[ChannelPreset.NORMAL]), min_length=1, description="Per-slot channel class distribution")
    snr_r: float = Field(default=100.0, gt=0.0, description="Linear radar SNR used by the velocity accuracy metric")
    weights: Tuple[float, float, float] = Field(default=WEIGHT_PRESETS[WeightPreset.W1], description="(w1, w2, w3) reward weights")
    lost_frame_policy: LostFramePolicy = Field(default=LostFramePolicy.DISCARD)

    @model_validator(mode="before")
    @classmethod
    def resolve_channel_preset(cls, data: Any) -> Any:
        if isinstance(data, dict) and "channel" in data:
            data = dict(data)
            preset = ChannelPreset(data.pop("channel"))
            data.setdefault("class_probs", list(CHANNEL_PRESETS[preset]))
        return data

    @field_validator("per_levels", "class_probs", mode="before")
    @classmethod
    def parse_vectors(cls, value):
        return split_list(value)

    @field_validator("weights", mode="before")
    @classmethod
    def parse_weights(cls, value):
        if isinstance(value, WeightPreset):
            return WEIGHT_PRESETS[value]
        if isinstance(value, str) and value.strip() in WeightPreset._value2member_map_:
            return WEIGHT_PRESETS[WeightPreset(value.strip())]
        return split_list(value)

    @field_validator("per_levels")
    @classmethod
    def check_per_levels(cls, value):
        return validate_open_unit_interval(value, "per_levels")

    @field_validator("class_probs")
    @classmethod
    def check_class_probs(cls, value):
        return validate_probability_vector(value)

    @field_validator("weights")
    @classmethod
    def check_weights(cls, value):
        if any(w < 0.0 for w in value):
            raise ValueError("Reward weights must be non-negative.")
        return value

    @model_validator(mode="after")
    def check_consistency(self):
        if len(self.per_levels) != len(self.class_probs):
            raise ValueError("per_levels and class_probs must have one entry per channel class.")
        wavelength = SPEED_OF_LIGHT / self.carrier_freq
        frame_spacing = wavelength / (4.0 * self.v_max)
        slot_samples = round(frame_spacing * self.sample_rate)
        if self.preamble_samples * self.spectral_eff >= slot_samples * self.spectral_eff:
            raise ValueError(
                f"Preamble of {self.preamble_samples} samples does not fit a {slot_samples}-sample slot."
            )
        return self

    @property
    def class_count(self) -> int:
        return len(self.class_probs)

    @property
    def state_count(self) -> int:
        return (self.queue_capacity + 1) * self.class_count

    @property
    def channel_preset(self) -> Optional[ChannelPreset]:
        """Preset whose class distribution equals ``class_probs``, or None for a custom vector."""
        probs = tuple(self.class_probs)
        return next((preset for preset, values in CHANNEL_PRESETS.items() if values == probs), None)

    @property
    def weight_preset(self) -> Optional[WeightPreset]:
        return next((preset for preset, values in WEIGHT_PRESETS.items() if values == tuple(self.weights)), None)

    def with_overrides(self, **overrides) -> "EnvConfig":
        """Return a re-validated copy with ``overrides`` applied (presets accepted)."""
        data = self.model_dump()
        if "channel" in overrides and "class_probs" not in overrides:
            data.pop("class_probs")
        data.update(overrides)
        return EnvConfig(**data)


class EnvState(BaseModel):
    """Observable MDP state: queue length and the channel class seen as feedback."""
    model_config = ConfigDict(frozen=True)

    q: int = Field(..., ge=0, description="Packets waiting in the data queue")
    c: int = Field(..., ge=0, description="Channel class index observed at slot start")


class StepOutcome(BaseModel):
    """Full record of one slot transition."""
    model_config = ConfigDict(frozen=True)

    next_state: EnvState
    reward: float
    queue_end: int = Field(..., ge=0)
    sensing_accuracy: float = Field(..., ge=0.0)
    overflow_drops: int = Field(..., ge=0)
    frame_loss_packets: int = Field(..., ge=0)
    arrivals: int = Field(..., ge=0)
    transmitted_ok: int = Field(..., ge=0)
    realized_class: int = Field(..., ge=0)

    @property
    def cost(self) -> float:
        return -self.reward


class Timing(BaseModel):
    """Quantities derived from the carrier, velocity and sampling parameters."""
    model_config = ConfigDict(frozen=True)

    wavelength: float
    max_doppler: float
    frame_spacing: float
    cpi_duration: float
    slot_samples: int


class FrameCapacity(BaseModel):
    """Packet and bit budget of every frame in one CPI for a given frame count."""
    model_config = ConfigDict(frozen=True)

    total_packets: int
    per_frame_packets: Tuple[int, ...]
    per_frame_bits: Tuple[int, ...]

    @property
    def frame_count(self) -> int:
        return len(self.per_frame_packets)
