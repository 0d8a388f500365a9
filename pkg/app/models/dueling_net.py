from builtins import float, int, len, range, str
from dataclasses import dataclass, field
import copy
import hashlib
import logging
from typing import Dict, Optional, Union

import numpy as np

from app.schemas.training_schemas import Aggregation
from app.utils.errors import ContractViolation, TrainingError

logger = logging.getLogger(__name__)

# Fixed parameter order: shared trunk, value head, advantage head.
PARAM_NAMES = ("w_hidden", "b_hidden", "w_value", "b_value", "w_advantage", "b_advantage")

Params = Dict[str, np.ndarray]


@dataclass
class DuelingNet:
    """
    Feed-forward Q-network with a shared ReLU trunk and two heads.

    ``input_dim -> hidden_dim`` (ReLU) feeds a value head (``hidden_dim -> 1``)
    and an advantage head (``hidden_dim -> action_count``); the heads are
    recombined according to ``aggregation``. All tensors are float64.

    One training step on a batch of ``S_b`` transitions costs
    O(S_b (I H + H V + H D)) with V = 1 value output and D = A advantage outputs.
    """
    input_dim: int
    hidden_dim: int
    action_count: int
    aggregation: Aggregation
    w_hidden: np.ndarray
    b_hidden: np.ndarray
    w_value: np.ndarray
    b_value: np.ndarray
    w_advantage: np.ndarray
    b_advantage: np.ndarray

    @property
    def params(self) -> Params:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    @property
    def architecture(self):
        return (self.input_dim, self.hidden_dim, self.action_count, Aggregation(self.aggregation))

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())


@dataclass
class ForwardPass:
    q: np.ndarray
    v: np.ndarray
    d: np.ndarray


@dataclass
class _Cache:
    x: np.ndarray
    z: np.ndarray
    h: np.ndarray
    v: np.ndarray
    d: np.ndarray
    q: np.ndarray


@dataclass
class LossAndGrads:
    loss: float
    grads: Params
    targets: np.ndarray


@dataclass
class AdamState:
    """Bias-corrected Adam moments, one accumulator pair per parameter tensor."""
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: Params = field(default_factory=dict)
    second_moment: Params = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Params, learning_rate: float = 1e-4, beta1: float = 0.9,
                   beta2: float = 0.999, epsilon: float = 1e-8) -> "AdamState":
        return cls(
            learning_rate=learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon,
            first_moment={k: np.zeros_like(v) for k, v in params.items()},
            second_moment={k: np.zeros_like(v) for k, v in params.items()},
        )


@dataclass
class SgdState:
    learning_rate: float = 1e-4
    step: int = 0


OptimizerState = Union[AdamState, SgdState]


def init_dueling_net(seed: Optional[int], hidden_dim: int, input_dim: int = 2, action_count: int = 10,
                     aggregation: Aggregation = Aggregation.MEAN) -> DuelingNet:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero; deterministic under ``seed``."""
    if min(hidden_dim, input_dim, action_count) < 1:
        raise ContractViolation("Network dimensions must be at least 1.")
    rng = np.random.default_rng(seed)

    def uniform(rows: int, fan_in: int) -> np.ndarray:
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(rows, fan_in))

    return DuelingNet(
        input_dim=input_dim,
        hidden_dim=hidden_dim,
        action_count=action_count,
        aggregation=Aggregation(aggregation),
        w_hidden=uniform(hidden_dim, input_dim),
        b_hidden=np.zeros(hidden_dim),
        w_value=uniform(1, hidden_dim),
        b_value=np.zeros(1),
        w_advantage=uniform(action_count, hidden_dim),
        b_advantage=np.zeros(action_count),
    )


def _as_batch(net: DuelingNet, x: np.ndarray) -> np.ndarray:
    batch = np.asarray(x, dtype=np.float64)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != net.input_dim:
        raise ContractViolation(f"Expected inputs of width {net.input_dim}, got shape {np.shape(x)}.")
    return batch


def _combine(net: DuelingNet, v: np.ndarray, d: np.ndarray) -> np.ndarray:
    if net.aggregation == Aggregation.MEAN:
        return v + (d - d.mean(axis=1, keepdims=True))
    if net.aggregation == Aggregation.MAX:
        return v + (d - d.max(axis=1, keepdims=True))
    return v + d


def _forward_cache(net: DuelingNet, batch: np.ndarray) -> _Cache:
    z = batch @ net.w_hidden.T + net.b_hidden
    h = np.maximum(z, 0.0)
    v = h @ net.w_value.T + net.b_value
    d = h @ net.w_advantage.T + net.b_advantage
    return _Cache(x=batch, z=z, h=h, v=v, d=d, q=_combine(net, v, d))


def forward(net: DuelingNet, x: np.ndarray) -> ForwardPass:
    """
    Evaluate the network on one input vector or a batch of rows.

    Returns Q-values, the raw value head output and the raw advantages; a
    single input yields 1-D ``q``/``d`` and a scalar ``v``.
    """
    single = np.ndim(x) == 1
    cache = _forward_cache(net, _as_batch(net, x))
    if single:
        return ForwardPass(q=cache.q[0], v=cache.v[0, 0], d=cache.d[0])
    return ForwardPass(q=cache.q, v=cache.v[:, 0], d=cache.d)


def _backward(net: DuelingNet, cache: _Cache, dq: np.ndarray) -> Params:
    """Back-propagate ``dL/dq`` (batch x actions) to every parameter."""
    if net.aggregation == Aggregation.MEAN:
        dd = dq - dq.mean(axis=1, keepdims=True)
    elif net.aggregation == Aggregation.MAX:
        dd = dq.copy()
        winners = cache.d.argmax(axis=1)
        dd[np.arange(len(winners)), winners] -= dq.sum(axis=1)
    else:
        dd = dq
    dv = dq.sum(axis=1, keepdims=True)

    dh = dv @ net.w_value + dd @ net.w_advantage
    dz = dh * (cache.z > 0.0)
    return {
        "w_hidden": dz.T @ cache.x,
        "b_hidden": dz.sum(axis=0),
        "w_value": dv.T @ cache.h,
        "b_value": dv.sum(axis=0),
        "w_advantage": dd.T @ cache.h,
        "b_advantage": dd.sum(axis=0),
    }


def _check_same_architecture(a: DuelingNet, b: DuelingNet) -> None:
    if a.architecture != b.architecture:
        raise ContractViolation(f"Architecture mismatch: {a.architecture} vs {b.architecture}.")


def loss_and_grads(net: DuelingNet, target_net: DuelingNet, batch, discount: float) -> LossAndGrads:
    """
    Double-Q temporal-difference loss and its exact gradient w.r.t. ``net``.

    The target ``Y = r + discount * Q_target(s', argmax_a' Q(s', a'))`` picks
    the next action with the online network and evaluates it with the target
    network. The loss is the batch mean of ``(Y - Q(s, a))^2``; the target
    network receives no gradient. Neither network is modified.

    Args:
        batch: Object exposing ``states``, ``actions`` (0-based column indices),
            ``rewards`` and ``next_states`` arrays.
    """
    _check_same_architecture(net, target_net)
    if len(batch.actions) == 0:
        raise ContractViolation("Cannot compute a loss on an empty batch.")
    states = _as_batch(net, batch.states)
    size = states.shape[0]
    next_states = _as_batch(net, batch.next_states)
    actions = np.asarray(batch.actions, dtype=np.int64)
    rewards = np.asarray(batch.rewards, dtype=np.float64)
    rows = np.arange(size)

    next_online = _forward_cache(net, next_states).q
    next_target = _forward_cache(target_net, next_states).q
    selected = next_online.argmax(axis=1)
    targets = rewards + discount * next_target[rows, selected]

    cache = _forward_cache(net, states)
    td = targets - cache.q[rows, actions]
    loss = float(np.mean(td ** 2))
    dq = np.zeros_like(cache.q)
    dq[rows, actions] = -2.0 * td / size
    return LossAndGrads(loss=loss, grads=_backward(net, cache, dq), targets=targets)


def _check_finite(grads: Params) -> None:
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(f"Non-finite gradient for parameter '{name}'.")


def adam_update(params: Params, grads: Params, adam: AdamState) -> None:
    """Apply one bias-corrected Adam step to ``params`` in place."""
    if set(grads) != set(params) or any(grads[k].shape != params[k].shape for k in params):
        raise ContractViolation("Gradient shapes do not match parameter shapes.")
    _check_finite(grads)
    if not adam.first_moment:
        adam.first_moment = {k: np.zeros_like(v) for k, v in params.items()}
        adam.second_moment = {k: np.zeros_like(v) for k, v in params.items()}
    adam.step += 1
    correction1 = 1.0 - adam.beta1 ** adam.step
    correction2 = 1.0 - adam.beta2 ** adam.step
    for name, param in params.items():
        g = grads[name]
        m = adam.first_moment[name]
        s = adam.second_moment[name]
        m *= adam.beta1
        m += (1.0 - adam.beta1) * g
        s *= adam.beta2
        s += (1.0 - adam.beta2) * g * g
        param -= adam.learning_rate * (m / correction1) / (np.sqrt(s / correction2) + adam.epsilon)


def adam_step(net: DuelingNet, grads: Params, adam: AdamState) -> DuelingNet:
    """Update ``net`` in place with Adam and return it."""
    adam_update(net.params, grads, adam)
    return net


def sgd_step(net: DuelingNet, grads: Params, sgd: SgdState) -> DuelingNet:
    """Plain gradient descent ``theta <- theta - beta * grad``."""
    _check_finite(grads)
    sgd.step += 1
    for name, param in net.params.items():
        param -= sgd.learning_rate * grads[name]
    return net


def apply_gradients(net: DuelingNet, grads: Params, optimizer: OptimizerState) -> DuelingNet:
    if isinstance(optimizer, AdamState):
        return adam_step(net, grads, optimizer)
    return sgd_step(net, grads, optimizer)


def copy_params(src: DuelingNet, dst: Optional[DuelingNet] = None) -> DuelingNet:
    """
    Copy every parameter of ``src``.

    With ``dst`` given, its arrays are overwritten in place (architectures
    must match); otherwise an independent deep copy is returned.
    """
    if dst is None:
        return copy.deepcopy(src)
    _check_same_architecture(src, dst)
    for name in PARAM_NAMES:
        np.copyto(getattr(dst, name), getattr(src, name))
    return dst


def param_checksum(net: DuelingNet) -> str:
    digest = hashlib.sha256()
    for name in PARAM_NAMES:
        digest.update(np.ascontiguousarray(getattr(net, name), dtype="<f8").tobytes())
    return digest.hexdigest()


def _check_loss(net: DuelingNet, x: np.ndarray, target: float):
    """Check loss plus a fingerprint of the active ReLU units and advantage winners."""
    cache = _forward_cache(net, x)
    loss = float(np.mean((target - cache.q) ** 2))
    return loss, (cache.z > 0.0).tobytes() + cache.d.argmax(axis=1).tobytes()


def grad_check(net: DuelingNet, x: np.ndarray, target: float, eps: float = 1e-5) -> float:
    """
    Largest relative gap between analytic and central-difference gradients.

    The check loss is ``mean_a (target - Q(x, a))^2``. Parameters whose
    perturbation moves the input across a ReLU kink (or changes the winning
    advantage under max aggregation) are skipped, since the loss is not
    differentiable there. ``net`` is left untouched.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ContractViolation("eps must lie in [1e-7, 1e-3].")
    scratch = copy_params(net)
    batch = _as_batch(scratch, x)
    cache = _forward_cache(scratch, batch)
    dq = -2.0 * (target - cache.q) / cache.q.size
    analytic = _backward(scratch, cache, dq)

    worst = 0.0
    for name in PARAM_NAMES:
        param = getattr(scratch, name)
        flat = param.reshape(-1)
        grad = analytic[name].reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus, plus_region = _check_loss(scratch, batch, target)
            flat[i] = original - eps
            minus, minus_region = _check_loss(scratch, batch, target)
            flat[i] = original
            if plus_region != minus_region:
                continue
            numeric = (plus - minus) / (2.0 * eps)
            gap = abs(grad[i] - numeric) / max(abs(grad[i]) + abs(numeric), 1e-6)
            worst = max(worst, gap)
    return worst
