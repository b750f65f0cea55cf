"""Residual policy-value network on numpy arrays, with training support.

Architecture: a conv block (3x3 conv, batch-norm, relu) into a residual
tower, then two heads.  The policy head (1x1 conv to 2 channels, batch-norm,
relu, dense) emits 65 logits: 64 squares plus pass.  The value head (1x1 conv
to 1 channel, batch-norm, relu, dense, relu, dense, tanh) emits a scalar in
[-1, 1] from the mover's perspective.

Training minimizes squared value error plus policy cross-entropy plus an L2
penalty on conv/dense weights, via plain backprop and heavy-ball momentum SGD.
Inference normalizes batch-norm with running statistics, so single-position
evaluation is well defined and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .layers import (
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    relu_backward,
    relu_forward,
    softmax,
)

POLICY_SIZE = 65
INPUT_PLANES = 2
BOARD_SIDE = 8
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class NetConfig:
    residual_blocks: int = 2
    filters: int = 32
    value_hidden: int = 64
    policy_size: int = POLICY_SIZE
    l2_coefficient: float = 1e-4
    bn_momentum: float = 0.9

    def __post_init__(self):
        if self.policy_size != POLICY_SIZE:
            raise ValueError(f"policy_size must be {POLICY_SIZE}")
        if self.residual_blocks < 1:
            raise ValueError("residual_blocks must be >= 1")
        if self.filters < 1 or self.value_hidden < 1:
            raise ValueError("filters and value_hidden must be >= 1")

    def to_dict(self) -> dict:
        return {
            "residual_blocks": self.residual_blocks,
            "filters": self.filters,
            "value_hidden": self.value_hidden,
            "policy_size": self.policy_size,
            "l2_coefficient": self.l2_coefficient,
            "bn_momentum": self.bn_momentum,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetConfig":
        return cls(**data)


def tensor_shapes(config: NetConfig) -> tuple[dict[str, tuple], dict[str, tuple]]:
    """(trainable shapes, running-stat shapes), keyed by tensor name."""
    f = config.filters
    tensors: dict[str, tuple] = {"stem.conv.w": (f, INPUT_PLANES, 3, 3)}
    stats: dict[str, tuple] = {}

    def bn(prefix: str, channels: int):
        tensors[f"{prefix}.gamma"] = (channels,)
        tensors[f"{prefix}.beta"] = (channels,)
        stats[f"{prefix}.mean"] = (channels,)
        stats[f"{prefix}.var"] = (channels,)

    bn("stem.bn", f)
    for i in range(config.residual_blocks):
        tensors[f"block{i}.conv1.w"] = (f, f, 3, 3)
        bn(f"block{i}.bn1", f)
        tensors[f"block{i}.conv2.w"] = (f, f, 3, 3)
        bn(f"block{i}.bn2", f)
    tensors["policy.conv.w"] = (2, f, 1, 1)
    bn("policy.bn", 2)
    tensors["policy.fc.w"] = (2 * BOARD_SIDE * BOARD_SIDE, config.policy_size)
    tensors["policy.fc.b"] = (config.policy_size,)
    tensors["value.conv.w"] = (1, f, 1, 1)
    bn("value.bn", 1)
    tensors["value.fc1.w"] = (BOARD_SIDE * BOARD_SIDE, config.value_hidden)
    tensors["value.fc1.b"] = (config.value_hidden,)
    tensors["value.fc2.w"] = (config.value_hidden, 1)
    tensors["value.fc2.b"] = (1,)
    return tensors, stats


@dataclass
class NetParams:
    """Weights plus batch-norm running statistics for one network."""

    config: NetConfig
    tensors: dict[str, np.ndarray]
    stats: dict[str, np.ndarray]

    def copy(self) -> "NetParams":
        return NetParams(
            self.config,
            {k: v.copy() for k, v in self.tensors.items()},
            {k: v.copy() for k, v in self.stats.items()},
        )

    def num_parameters(self) -> int:
        return sum(v.size for v in self.tensors.values())

    def astype(self, dtype) -> "NetParams":
        return NetParams(
            self.config,
            {k: v.astype(dtype) for k, v in self.tensors.items()},
            {k: v.astype(dtype) for k, v in self.stats.items()},
        )


def init_params(
    config: NetConfig, seed: int = 0, dtype=np.float32, zero_logits: bool = False
) -> NetParams:
    """He-initialized weights; `zero_logits` gives the all-zero debug net
    whose policy is exactly uniform and whose value is exactly 0."""
    rng = np.random.default_rng(seed)
    tensor_spec, stat_spec = tensor_shapes(config)
    tensors = {}
    for name, shape in tensor_spec.items():
        if name.endswith(".gamma"):
            tensors[name] = np.ones(shape, dtype=dtype)
        elif name.endswith(".beta") or name.endswith(".b") or zero_logits:
            tensors[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[1:])) if len(shape) == 4 else shape[0]
            std = np.sqrt(2.0 / fan_in)
            tensors[name] = rng.normal(0.0, std, size=shape).astype(dtype)
    if zero_logits:
        for name in tensor_spec:
            if name.endswith(".gamma"):
                tensors[name] = np.ones(tensor_spec[name], dtype=dtype)
    stats = {}
    for name, shape in stat_spec.items():
        stats[name] = (np.ones if name.endswith(".var") else np.zeros)(shape, dtype=dtype)
    return NetParams(config, tensors, stats)


def _bn(params, cache, name, x, training, update_stats):
    out, bn_cache = batchnorm_forward(
        x,
        params.tensors[f"{name}.gamma"],
        params.tensors[f"{name}.beta"],
        params.stats[f"{name}.mean"],
        params.stats[f"{name}.var"],
        training,
        momentum=params.config.bn_momentum,
        update_stats=update_stats,
    )
    if cache is not None:
        cache[name] = bn_cache
    return out


def forward(
    params: NetParams,
    planes: np.ndarray,
    training: bool = False,
    update_stats: bool = False,
) -> tuple[np.ndarray, np.ndarray, dict | None]:
    """Run the tower; returns (policy logits (N,65), value (N,), cache).

    `training` selects batch statistics in batch-norm (and enables the
    backward pass); inference uses running statistics and returns no cache.
    """
    x = np.ascontiguousarray(planes)
    if x.ndim == 3:
        x = x[None]
    cache: dict | None = {} if training else None
    n = x.shape[0]

    h, c = conv2d_forward(x, params.tensors["stem.conv.w"])
    if cache is not None:
        cache["stem.conv"] = c
    h = _bn(params, cache, "stem.bn", h, training, update_stats)
    h, r = relu_forward(h)
    if cache is not None:
        cache["stem.relu"] = r

    for i in range(params.config.residual_blocks):
        prefix = f"block{i}"
        skip = h
        t, c = conv2d_forward(h, params.tensors[f"{prefix}.conv1.w"])
        if cache is not None:
            cache[f"{prefix}.conv1"] = c
        t = _bn(params, cache, f"{prefix}.bn1", t, training, update_stats)
        t, r = relu_forward(t)
        if cache is not None:
            cache[f"{prefix}.relu1"] = r
        t, c = conv2d_forward(t, params.tensors[f"{prefix}.conv2.w"])
        if cache is not None:
            cache[f"{prefix}.conv2"] = c
        t = _bn(params, cache, f"{prefix}.bn2", t, training, update_stats)
        h, r = relu_forward(t + skip)
        if cache is not None:
            cache[f"{prefix}.relu2"] = r

    # Policy head.
    t, c = conv2d_forward(h, params.tensors["policy.conv.w"])
    if cache is not None:
        cache["policy.conv"] = c
    t = _bn(params, cache, "policy.bn", t, training, update_stats)
    t, r = relu_forward(t)
    if cache is not None:
        cache["policy.relu"] = r
    flat = t.reshape(n, -1)
    logits, c = dense_forward(flat, params.tensors["policy.fc.w"], params.tensors["policy.fc.b"])
    if cache is not None:
        cache["policy.fc"] = c
        cache["policy.flat_shape"] = t.shape

    # Value head.
    t, c = conv2d_forward(h, params.tensors["value.conv.w"])
    if cache is not None:
        cache["value.conv"] = c
    t = _bn(params, cache, "value.bn", t, training, update_stats)
    t, r = relu_forward(t)
    if cache is not None:
        cache["value.relu"] = r
    vflat = t.reshape(n, -1)
    u, c = dense_forward(vflat, params.tensors["value.fc1.w"], params.tensors["value.fc1.b"])
    if cache is not None:
        cache["value.fc1"] = c
        cache["value.flat_shape"] = t.shape
    u, r = relu_forward(u)
    if cache is not None:
        cache["value.relu1"] = r
    u, c = dense_forward(u, params.tensors["value.fc2.w"], params.tensors["value.fc2.b"])
    if cache is not None:
        cache["value.fc2"] = c
    value = np.tanh(u[:, 0])
    return logits, value, cache


def predict(params: NetParams, planes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inference: (move probabilities (N,65), values (N,))."""
    logits, value, _ = forward(params, planes, training=False)
    return softmax(logits), value


def loss(
    pi: np.ndarray,
    omega,
    probs: np.ndarray,
    values,
    params: NetParams | None = None,
    c: float = 0.0,
) -> float:
    """Squared value error plus policy cross-entropy, batch-averaged, plus
    one L2 penalty c * sum(theta^2) over conv/dense weights."""
    pi = np.atleast_2d(pi)
    probs = np.atleast_2d(probs)
    omega = np.atleast_1d(np.asarray(omega, dtype=probs.dtype))
    values = np.atleast_1d(np.asarray(values, dtype=probs.dtype))
    ce = -(pi * np.log(np.maximum(probs, LOG_FLOOR))).sum(axis=1)
    sq = (omega - values) ** 2
    total = float((ce + sq).mean())
    if params is not None and c:
        total += l2_penalty(params, c)
    return total


def l2_penalty(params: NetParams, c: float) -> float:
    return float(c * sum(float((w ** 2).sum()) for k, w in params.tensors.items() if k.endswith(".w")))


@dataclass
class LossParts:
    total: float
    policy_ce: float
    value_sq: float
    l2: float


def compute_loss(params: NetParams, planes, pi, omega, c: float | None = None) -> float:
    """Training-mode loss as a pure function of params (for gradient checks)."""
    if c is None:
        c = params.config.l2_coefficient
    logits, value, _ = forward(params, planes, training=True)
    return loss(pi, omega, softmax(logits), value, params, c)


def compute_gradients(
    params: NetParams,
    planes: np.ndarray,
    pi: np.ndarray,
    omega: np.ndarray,
    c: float | None = None,
    update_stats: bool = False,
) -> tuple[dict[str, np.ndarray], LossParts]:
    """Backprop through the tower; gradients share names/shapes with tensors."""
    if c is None:
        c = params.config.l2_coefficient
    n = planes.shape[0]
    logits, value, cache = forward(params, planes, training=True, update_stats=update_stats)
    assert cache is not None
    probs = softmax(logits)
    pi = np.asarray(pi, dtype=probs.dtype)
    omega = np.asarray(omega, dtype=probs.dtype)

    ce = float(-(pi * np.log(np.maximum(probs, LOG_FLOOR))).sum(axis=1).mean())
    sq = float(((omega - value) ** 2).mean())
    l2 = l2_penalty(params, c)
    parts = LossParts(ce + sq + l2, ce, sq, l2)

    grads: dict[str, np.ndarray] = {}

    def bn_back(name, d):
        dx, dgamma, dbeta = batchnorm_backward(d, cache[name])
        grads[f"{name}.gamma"] = dgamma
        grads[f"{name}.beta"] = dbeta
        return dx

    # Policy head backward.
    dlogits = (probs - pi) / n
    dflat, grads["policy.fc.w"], grads["policy.fc.b"] = dense_backward(dlogits, cache["policy.fc"])
    d = relu_backward(dflat.reshape(cache["policy.flat_shape"]), cache["policy.relu"])
    d = bn_back("policy.bn", d)
    d_tower_p, grads["policy.conv.w"] = conv2d_backward(d, cache["policy.conv"])

    # Value head backward: d/dv of mean (omega - v)^2 through tanh.
    du = (2.0 * (value - omega) * (1.0 - value ** 2) / n)[:, None]
    d, grads["value.fc2.w"], grads["value.fc2.b"] = dense_backward(du, cache["value.fc2"])
    d = relu_backward(d, cache["value.relu1"])
    d, grads["value.fc1.w"], grads["value.fc1.b"] = dense_backward(d, cache["value.fc1"])
    d = relu_backward(d.reshape(cache["value.flat_shape"]), cache["value.relu"])
    d = bn_back("value.bn", d)
    d_tower_v, grads["value.conv.w"] = conv2d_backward(d, cache["value.conv"])

    d = d_tower_p + d_tower_v
    for i in reversed(range(params.config.residual_blocks)):
        prefix = f"block{i}"
        d = relu_backward(d, cache[f"{prefix}.relu2"])
        dskip = d
        t = bn_back(f"{prefix}.bn2", d)
        t, grads[f"{prefix}.conv2.w"] = conv2d_backward(t, cache[f"{prefix}.conv2"])
        t = relu_backward(t, cache[f"{prefix}.relu1"])
        t = bn_back(f"{prefix}.bn1", t)
        t, grads[f"{prefix}.conv1.w"] = conv2d_backward(t, cache[f"{prefix}.conv1"])
        d = t + dskip

    d = relu_backward(d, cache["stem.relu"])
    d = bn_back("stem.bn", d)
    _, grads["stem.conv.w"] = conv2d_backward(d, cache["stem.conv"])

    if c:
        for name, w in params.tensors.items():
            if name.endswith(".w"):
                grads[name] = grads[name] + 2.0 * c * w
    return grads, parts


def sgd_step(
    params: NetParams,
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float = 0.9,
    velocity: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Heavy-ball update in place: v = momentum*v + g; theta -= lr*v.

    Returns the velocity dict; pass it back in on the next step.
    """
    if velocity is None:
        velocity = {}
    for name, grad in grads.items():
        v = velocity.get(name)
        if v is None:
            v = np.zeros_like(params.tensors[name])
            velocity[name] = v
        v *= momentum
        v += grad
        params.tensors[name] -= (lr * v).astype(params.tensors[name].dtype, copy=False)
    return velocity


@dataclass(frozen=True)
class Prediction:
    """Oracle output for one position: move distribution and value."""

    p: np.ndarray
    v: float


@dataclass(frozen=True)
class TrainTarget:
    """Search-improved target: distribution pi, value omega, and its label
    kind ("z" = final game result, "q" = search value of a visited node)."""

    pi: np.ndarray
    omega: float
    label_kind: str

    def __post_init__(self):
        if self.label_kind not in ("z", "q"):
            raise ValueError(f"label_kind must be 'z' or 'q', got {self.label_kind!r}")


class NetEvaluator:
    """Batched inference oracle over Positions, shareable across searches."""

    def __init__(self, params: NetParams):
        self.params = params

    def __call__(self, planes_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return predict(self.params, planes_batch)
