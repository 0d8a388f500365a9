"""
Discrete-time model of the integrated communication-and-sensing (ICS) link.

At the start of every slot the vehicle picks how many frames ``a`` (1..N) to
place in the coherent processing interval. More frames mean more preambles:
velocity estimation improves, but preamble overhead eats into the data budget
and the queue drains more slowly. Fewer frames mean long frames that carry
more packets but are more likely to be lost on a bad channel.

The module exposes the closed-form link metrics as plain functions and the
stochastic slot dynamics through :class:`IcsEnvironment`.
"""

from builtins import float, int, len, max, min, range, round
from itertools import product
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from app.schemas.env_schemas import (
    SPEED_OF_LIGHT, EnvConfig, EnvState, FrameCapacity, LostFramePolicy, StepOutcome, Timing,
)
from app.utils.errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)


def derive_timing(cfg: EnvConfig) -> Timing:
    """
    Derive wavelength, maximum Doppler shift and frame spacing.

    The frame spacing is the largest sub-Doppler-Nyquist interval,
    ``T_d = 1 / (2 * 2 v_max / zeta)``, and the CPI spans ``N * T_d``.

    Raises:
        ConfigurationError: If the carrier frequency or v_max is not positive.
    """
    if cfg.carrier_freq <= 0 or cfg.v_max <= 0:
        raise ConfigurationError("carrier_freq and v_max must be positive.")
    wavelength = SPEED_OF_LIGHT / cfg.carrier_freq
    max_doppler = 2.0 * cfg.v_max / wavelength
    frame_spacing = 1.0 / (2.0 * max_doppler)
    return Timing(
        wavelength=wavelength,
        max_doppler=max_doppler,
        frame_spacing=frame_spacing,
        cpi_duration=cfg.max_frames * frame_spacing,
        slot_samples=round(frame_spacing * cfg.sample_rate),
    )


def _check_frames(frames: int, cfg: EnvConfig) -> None:
    if not 1 <= frames <= cfg.max_frames:
        raise DomainError(f"Frame count must lie in [1, {cfg.max_frames}], got {frames}.")


def capacity(frames: int, cfg: EnvConfig, timing: Optional[Timing] = None) -> FrameCapacity:
    """
    Packet budget of a CPI split into ``frames`` frames.

    The first ``frames - 1`` frames each occupy one T_d slot; the last frame
    stretches over the remaining ``N - frames + 1`` slots. Every frame pays
    one preamble. Packets per frame are ``floor(data_bits / (8 B))``.
    """
    _check_frames(frames, cfg)
    timing = timing or derive_timing(cfg)
    packet_bits = 8 * cfg.packet_bytes
    spans = [1] * (frames - 1) + [cfg.max_frames - frames + 1]
    bits = [int((span * timing.slot_samples - cfg.preamble_samples) * cfg.spectral_eff) for span in spans]
    packets = [b // packet_bits for b in bits]
    return FrameCapacity(total_packets=sum(packets), per_frame_packets=tuple(packets), per_frame_bits=tuple(bits))


def bit_error_prob(per: float, packet_bits: int) -> float:
    """Recover the bit error probability from a packet error ratio on ``packet_bits``-bit packets."""
    if not 0.0 < per < 1.0:
        raise DomainError(f"Packet error ratio must lie in (0, 1), got {per!r}.")
    if packet_bits < 1:
        raise DomainError("packet_bits must be at least 1.")
    return -math.expm1(math.log1p(-per) / packet_bits)


def frame_error_prob(p_b: float, frame_bits: int) -> float:
    """Probability that an F-bit frame contains at least one bit error, ``1 - (1 - p_b)^F``."""
    if not 0.0 <= p_b < 1.0 or frame_bits < 0:
        raise DomainError(f"Invalid bit error probability {p_b!r} or frame size {frame_bits!r}.")
    return -math.expm1(frame_bits * math.log1p(-p_b))


def sensing_resolution(frames: int, cfg: EnvConfig, timing: Optional[Timing] = None) -> float:
    """Velocity resolution ``zeta / (2 N_f T_d)`` in m/s."""
    _check_frames(frames, cfg)
    timing = timing or derive_timing(cfg)
    return timing.wavelength / (2.0 * frames * timing.frame_spacing)


def sensing_accuracy(frames: int, snr_r: float, cfg: EnvConfig, timing: Optional[Timing] = None) -> float:
    """Velocity RMS error ``zeta / (2 N_f T_d sqrt(2 SNR_r))`` in m/s."""
    if not snr_r > 0:
        raise DomainError(f"Radar SNR must be positive, got {snr_r!r}.")
    return sensing_resolution(frames, cfg, timing) / math.sqrt(2.0 * snr_r)


def reward(queue_len: int, delta: float, drops: int, cfg: EnvConfig) -> float:
    """Immediate reward ``-(w1 q + w2 delta + w3 l)``; the reported cost is its negation."""
    w1, w2, w3 = cfg.weights
    return -(w1 * queue_len + w2 * delta + w3 * drops)


def encode_state(state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """Network input ``[q / Q, c / (C - 1)]``; the class coordinate is 0 when there is one class."""
    classes = cfg.class_count
    return np.array(
        [state.q / cfg.queue_capacity, state.c / (classes - 1) if classes > 1 else 0.0],
        dtype=np.float64,
    )


def state_index(state: EnvState, cfg: EnvConfig) -> int:
    return state.q * cfg.class_count + state.c


def state_from_index(index: int, cfg: EnvConfig) -> EnvState:
    q, c = divmod(index, cfg.class_count)
    return EnvState(q=q, c=c)


class IcsEnvironment:
    """
    Seeded simulator of the ICS slot dynamics.

    An instance owns its generator and precomputes per-action capacities,
    frame error probabilities per channel class, and sensing accuracies.
    Random draws happen in a fixed order (channel class, one uniform per
    data-bearing frame, arrivals) so identical seeds reproduce identical
    trajectories.
    """

    def __init__(self, cfg: EnvConfig, seed: Optional[int] = None, rng: Optional[np.random.Generator] = None):
        self.cfg = cfg
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.timing = derive_timing(cfg)
        packet_bits = 8 * cfg.packet_bytes
        self.capacities: Dict[int, FrameCapacity] = {
            a: capacity(a, cfg, self.timing) for a in range(1, cfg.max_frames + 1)
        }
        self.accuracies: Dict[int, float] = {
            a: sensing_accuracy(a, cfg.snr_r, cfg, self.timing) for a in range(1, cfg.max_frames + 1)
        }
        bit_probs = [bit_error_prob(per, packet_bits) for per in cfg.per_levels]
        self.frame_drop_probs: Dict[int, List[List[float]]] = {
            a: [[frame_error_prob(p_b, bits) for bits in cap.per_frame_bits] for p_b in bit_probs]
            for a, cap in self.capacities.items()
        }
        self._class_cdf = np.cumsum(cfg.class_probs)
        self._class_cdf[-1] = 1.0
        logger.debug(
            f"Environment ready: T_d={self.timing.frame_spacing:.4e}s, slot_samples={self.timing.slot_samples}, "
            f"capacities={[c.total_packets for c in self.capacities.values()]}"
        )

    def reset(self) -> EnvState:
        """Empty queue, channel class drawn from ``class_probs``."""
        return EnvState(q=0, c=self._draw_class())

    def step(self, state: EnvState, frames: int, arrivals: Optional[int] = None) -> StepOutcome:
        """
        Advance one slot with ``frames`` frames in the CPI.

        Args:
            state: State observed at the start of the slot.
            frames: Number of frames ``a`` in the CPI, 1..N.
            arrivals: Force the number of arriving packets instead of sampling it.

        Raises:
            DomainError: If the state or frame count is out of range.
        """
        cfg = self.cfg
        if not (0 <= state.q <= cfg.queue_capacity and 0 <= state.c < cfg.class_count):
            raise DomainError(f"State {state!r} is outside the state space.")
        _check_frames(frames, cfg)

        realized_class = self._draw_class()
        cap = self.capacities[frames]
        drop_probs = self.frame_drop_probs[frames][realized_class]

        to_send = min(state.q, cap.total_packets)
        remaining = to_send
        transmitted_ok = 0
        lost = 0
        for frame_packets, p_f in zip(cap.per_frame_packets, drop_probs):
            load = min(remaining, frame_packets)
            if load == 0:
                # dummy payload, still a preamble for sensing
                continue
            remaining -= load
            if self.rng.random() < p_f:
                lost += load
            else:
                transmitted_ok += load

        queue = state.q - to_send
        if cfg.lost_frame_policy is LostFramePolicy.REQUEUE:
            queue += lost

        arrived = self._draw_arrivals() if arrivals is None else int(arrivals)
        if arrived < 0:
            raise DomainError("Arrivals must be non-negative.")
        accepted = min(arrived, cfg.queue_capacity - queue)
        overflow = arrived - accepted
        queue += accepted

        delta = self.accuracies[frames]
        return StepOutcome(
            next_state=EnvState(q=queue, c=realized_class),
            reward=reward(queue, delta, overflow, cfg),
            queue_end=queue,
            sensing_accuracy=delta,
            overflow_drops=overflow,
            frame_loss_packets=lost,
            arrivals=arrived,
            transmitted_ok=transmitted_ok,
            realized_class=realized_class,
        )

    def _draw_class(self) -> int:
        index = int(np.searchsorted(self._class_cdf, self.rng.random(), side="right"))
        return min(index, self.cfg.class_count - 1)

    def _draw_arrivals(self) -> int:
        """Poisson sample by CDF inversion of a single uniform draw."""
        lam = self.cfg.arrival_mean
        u = self.rng.random()
        if lam == 0.0:
            return 0
        k = 0
        pmf = math.exp(-lam)
        cdf = pmf
        while u > cdf:
            k += 1
            pmf *= lam / k
            if pmf == 0.0 and k > lam:
                break
            cdf += pmf
        return k


@dataclass
class TransitionModel:
    """Exact kernel ``P[s, a, s']`` and expected reward ``R[s, a]``; column ``a`` means ``a + 1`` frames."""
    probabilities: np.ndarray
    rewards: np.ndarray


def _poisson_pmf(lam: float, upto: int) -> np.ndarray:
    pmf = np.zeros(upto + 1)
    if lam == 0.0:
        pmf[0] = 1.0
        return pmf
    pmf[0] = math.exp(-lam)
    for k in range(1, upto + 1):
        pmf[k] = pmf[k - 1] * lam / k
    return pmf


def transition_model(cfg: EnvConfig) -> TransitionModel:
    """
    Enumerate the slot dynamics of a small instance.

    Frame drops are enumerated over the data-bearing frames, arrivals over
    ``0..Q`` with the Poisson tail folded into the full-queue state and the
    expected overflow. Intended for oracle checks, so cost grows with
    ``2^N * Q^2 * C``.
    """
    env = IcsEnvironment(cfg, seed=0)
    n_states, n_actions = cfg.state_count, cfg.max_frames
    w1, w2, w3 = cfg.weights
    lam = cfg.arrival_mean
    pmf = _poisson_pmf(lam, cfg.queue_capacity)
    probabilities = np.zeros((n_states, n_actions, n_states))
    rewards = np.zeros((n_states, n_actions))

    for q in range(cfg.queue_capacity + 1):
        for a in range(1, n_actions + 1):
            cap = env.capacities[a]
            to_send = min(q, cap.total_packets)
            loads, remaining = [], to_send
            for frame_packets in cap.per_frame_packets:
                load = min(remaining, frame_packets)
                remaining -= load
                loads.append(load)
            row = np.zeros(n_states)
            expected_queue = 0.0
            expected_drops = 0.0
            for c_new, p_class in enumerate(cfg.class_probs):
                drop_probs = env.frame_drop_probs[a][c_new]
                lost_dist: Dict[int, float] = {}
                carrying = [(load, p) for load, p in zip(loads, drop_probs) if load > 0]
                for pattern in product((False, True), repeat=len(carrying)):
                    prob, lost = 1.0, 0
                    for dropped, (load, p_f) in zip(pattern, carrying):
                        prob *= p_f if dropped else 1.0 - p_f
                        lost += load if dropped else 0
                    lost_dist[lost] = lost_dist.get(lost, 0.0) + prob
                for lost, p_lost in lost_dist.items():
                    base = q - to_send + (lost if cfg.lost_frame_policy is LostFramePolicy.REQUEUE else 0)
                    space = cfg.queue_capacity - base
                    head = pmf[:space]
                    tail = max(0.0, 1.0 - float(head.sum()))
                    weight = p_class * p_lost
                    for k, p_k in enumerate(head):
                        row[(base + k) * cfg.class_count + c_new] += weight * p_k
                        expected_queue += weight * p_k * (base + k)
                    row[cfg.queue_capacity * cfg.class_count + c_new] += weight * tail
                    expected_queue += weight * tail * cfg.queue_capacity
                    # E[(K - space)^+] = lam - space + sum_{k<space} (space - k) p_k
                    overflow = lam - space + float(np.dot(space - np.arange(space), head))
                    expected_drops += weight * max(0.0, overflow)
            r = -(w1 * expected_queue + w2 * env.accuracies[a] + w3 * expected_drops)
            for c in range(cfg.class_count):
                s = q * cfg.class_count + c
                probabilities[s, a - 1] = row
                rewards[s, a - 1] = r
    return TransitionModel(probabilities=probabilities, rewards=rewards)
