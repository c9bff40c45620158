"""Minimal dense/conv network engine with reverse-mode gradients.

Everything is plain numpy. Parameters live in a NetworkState (float32 by
default); all ops are pure in the sense that they return fresh state/gradient
arrays and never mutate their inputs. The dtype of a state is respected
throughout, so gradient checks can run the whole engine in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError

LAYER_KINDS = ("dense", "conv2d", "attention")  # attention: reserved slot, not implemented
ACTIVATIONS = ("relu", "none")


@dataclass(frozen=True)
class LayerSpec:
    """One trainable layer. Dense layers use out_dim, conv layers out_channels."""

    kind: str
    out_dim: int = 0
    out_channels: int = 0
    kernel_size: int = 3
    pool: bool = False  # 2x2 max-pool after the activation (conv2d only)
    activation: str = "relu"


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture + loss description. input_shape is (D,) or (H, W, C)."""

    input_shape: tuple
    num_classes: int
    layers: tuple

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True)
class LayerPlan:
    kind: str
    in_shape: tuple
    out_shape: tuple
    w_shape: tuple
    b_shape: tuple
    activation: str
    pool: bool
    kernel_size: int
    flatten_input: bool


def _shape_size(shape):
    return int(np.prod(shape)) if shape else 0


@lru_cache(maxsize=256)
def plan_network(spec: NetworkSpec) -> tuple:
    """Resolve per-layer input/output/parameter shapes, validating composition."""
    if not spec.layers:
        raise ConfigError("network needs at least one trainable layer")
    if spec.num_classes < 2:
        raise ConfigError(f"num_classes must be >= 2, got {spec.num_classes}")
    plans = []
    shape = tuple(int(s) for s in spec.input_shape)
    for i, layer in enumerate(spec.layers):
        if layer.kind not in LAYER_KINDS:
            raise ConfigError(f"layer {i}: unknown kind {layer.kind!r}")
        if layer.kind == "attention":
            raise ConfigError("layer kind 'attention' is reserved but not implemented")
        if layer.activation not in ACTIVATIONS:
            raise ConfigError(f"layer {i}: unknown activation {layer.activation!r}")
        if layer.kind == "dense":
            in_dim = _shape_size(shape)
            if layer.out_dim < 1:
                raise ConfigError(f"layer {i}: dense out_dim must be >= 1")
            plans.append(
                LayerPlan(
                    kind="dense",
                    in_shape=shape,
                    out_shape=(layer.out_dim,),
                    w_shape=(in_dim, layer.out_dim),
                    b_shape=(layer.out_dim,),
                    activation=layer.activation,
                    pool=False,
                    kernel_size=0,
                    flatten_input=len(shape) > 1,
                )
            )
            shape = (layer.out_dim,)
        else:  # conv2d
            if len(shape) != 3:
                raise ConfigError(f"layer {i}: conv2d needs (H, W, C) input, got {shape}")
            h, w, c = shape
            k = layer.kernel_size
            if k < 1 or k % 2 == 0:
                raise ConfigError(f"layer {i}: kernel_size must be odd and >= 1, got {k}")
            if layer.out_channels < 1:
                raise ConfigError(f"layer {i}: conv2d out_channels must be >= 1")
            out = (h, w, layer.out_channels)
            if layer.pool:
                if h % 2 or w % 2:
                    raise ConfigError(f"layer {i}: 2x2 pool needs even spatial dims, got {h}x{w}")
                out = (h // 2, w // 2, layer.out_channels)
            plans.append(
                LayerPlan(
                    kind="conv2d",
                    in_shape=shape,
                    out_shape=out,
                    w_shape=(k, k, c, layer.out_channels),
                    b_shape=(layer.out_channels,),
                    activation=layer.activation,
                    pool=layer.pool,
                    kernel_size=k,
                    flatten_input=False,
                )
            )
            shape = out
    if _shape_size(shape) != spec.num_classes:
        raise ConfigError(
            f"final layer produces {_shape_size(shape)} values, expected {spec.num_classes} logits"
        )
    return tuple(plans)


@dataclass
class NetworkState:
    """Trainable parameters plus Adam moments and the gradient-step counter."""

    weights: list
    biases: list
    m_w: list
    m_b: list
    v_w: list
    v_b: list
    step: int = 0

    @property
    def num_layers(self) -> int:
        return len(self.weights)

    @property
    def dtype(self):
        return self.weights[0].dtype

    def copy(self) -> "NetworkState":
        return NetworkState(
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            m_w=[m.copy() for m in self.m_w],
            m_b=[m.copy() for m in self.m_b],
            v_w=[v.copy() for v in self.v_w],
            v_b=[v.copy() for v in self.v_b],
            step=self.step,
        )

    def astype(self, dtype) -> "NetworkState":
        return NetworkState(
            weights=[w.astype(dtype) for w in self.weights],
            biases=[b.astype(dtype) for b in self.biases],
            m_w=[m.astype(dtype) for m in self.m_w],
            m_b=[m.astype(dtype) for m in self.m_b],
            v_w=[v.astype(dtype) for v in self.v_w],
            v_b=[v.astype(dtype) for v in self.v_b],
            step=self.step,
        )

    def allclose(self, other: "NetworkState", **kw) -> bool:
        if self.step != other.step or self.num_layers != other.num_layers:
            return False
        for mine, theirs in zip(self._arrays(), other._arrays()):
            if not np.allclose(mine, theirs, **kw):
                return False
        return True

    def equal_bits(self, other: "NetworkState") -> bool:
        if self.step != other.step or self.num_layers != other.num_layers:
            return False
        for mine, theirs in zip(self._arrays(), other._arrays()):
            if mine.dtype != theirs.dtype or mine.shape != theirs.shape:
                return False
            if mine.tobytes() != theirs.tobytes():
                return False
        return True

    def _arrays(self):
        for group in (self.weights, self.biases, self.m_w, self.m_b, self.v_w, self.v_b):
            yield from group


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.shape[0] != self.labels.shape[0]:
            raise ConfigError(
                f"batch size mismatch: {self.inputs.shape[0]} inputs, {self.labels.shape[0]} labels"
            )
        if self.inputs.shape[0] < 1:
            raise ConfigError("batch must contain at least one example")

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])


@dataclass(frozen=True)
class LossStats:
    loss: float
    accuracy: float
    is_finite: bool


def num_params(spec: NetworkSpec) -> int:
    return sum(_shape_size(p.w_shape) + _shape_size(p.b_shape) for p in plan_network(spec))


def init_state(spec: NetworkSpec, seed: int, dtype=np.float32) -> NetworkState:
    """He-uniform init for relu layers, Glorot-uniform otherwise; zero biases/moments."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for p in plan_network(spec):
        if p.kind == "dense":
            fan_in, fan_out = p.w_shape
        else:
            k, c, f = p.kernel_size, p.w_shape[2], p.w_shape[3]
            fan_in = k * k * c
            fan_out = k * k * f
        if p.activation == "relu":
            limit = math.sqrt(6.0 / fan_in)
        else:
            limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=p.w_shape).astype(dtype))
        biases.append(np.zeros(p.b_shape, dtype=dtype))
    return NetworkState(
        weights=weights,
        biases=biases,
        m_w=[np.zeros_like(w) for w in weights],
        m_b=[np.zeros_like(b) for b in biases],
        v_w=[np.zeros_like(w) for w in weights],
        v_b=[np.zeros_like(b) for b in biases],
        step=0,
    )


def _im2col(x, k):
    b, h, w, c = x.shape
    p = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    win = sliding_window_view(xp, (k, k), axis=(1, 2))  # (B, H, W, C, k, k)
    col = win.transpose(0, 1, 2, 4, 5, 3).reshape(b * h * w, k * k * c)
    return np.ascontiguousarray(col)


def _col2im(dcol, b, h, w, c, k, dtype):
    p = (k - 1) // 2
    dxp = np.zeros((b, h + 2 * p, w + 2 * p, c), dtype=dtype)
    dwin = dcol.reshape(b, h, w, k, k, c)
    for i in range(k):
        for j in range(k):
            dxp[:, i : i + h, j : j + w, :] += dwin[:, :, :, i, j, :]
    return dxp[:, p : p + h, p : p + w, :]


def _maxpool(x):
    b, h, w, f = x.shape
    xr = (
        x.reshape(b, h // 2, 2, w // 2, 2, f)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(b, h // 2, w // 2, f, 4)
    )
    idx = xr.argmax(axis=4)
    out = np.take_along_axis(xr, idx[..., None], axis=4)[..., 0]
    return out, idx


def _maxpool_backward(dout, idx, in_shape, dtype):
    b, h, w, f = in_shape
    dxr = np.zeros((b, h // 2, w // 2, f, 4), dtype=dtype)
    np.put_along_axis(dxr, idx[..., None], dout[..., None], axis=4)
    return (
        dxr.reshape(b, h // 2, w // 2, f, 2, 2)
        .transpose(0, 1, 4, 2, 5, 3)
        .reshape(b, h, w, f)
    )


def _forward(spec, state, x, keep_caches):
    """Shared forward pass. Returns (logits, caches); caches is None unless requested."""
    plans = plan_network(spec)
    if state.num_layers != len(plans):
        raise ConfigError(f"state has {state.num_layers} layers, spec has {len(plans)}")
    caches = [] if keep_caches else None
    for i, p in enumerate(plans):
        w, bias = state.weights[i], state.biases[i]
        if w.shape != p.w_shape:
            raise ConfigError(f"layer {i}: state weight shape {w.shape} != spec {p.w_shape}")
        cache = {}
        if p.kind == "dense":
            orig_shape = x.shape
            if p.flatten_input:
                x = x.reshape(x.shape[0], -1)
            if x.shape[1] != w.shape[0]:
                raise ConfigError(f"layer {i}: input dim {x.shape[1]} != weight fan-in {w.shape[0]}")
            z = x @ w + bias
            if keep_caches:
                cache.update(a_in=x, orig_shape=orig_shape)
        else:
            if x.shape[1:] != p.in_shape:
                raise ConfigError(f"layer {i}: input shape {x.shape[1:]} != spec {p.in_shape}")
            b, h, wd, c = x.shape
            col = _im2col(x, p.kernel_size)
            z = (col @ w.reshape(-1, w.shape[-1]) + bias).reshape(b, h, wd, w.shape[-1])
            if keep_caches:
                cache.update(col=col, conv_in_shape=x.shape)
        a = np.maximum(z, 0) if p.activation == "relu" else z
        if keep_caches and p.activation == "relu":
            cache["relu_mask"] = z > 0
        if p.pool:
            pre_pool_shape = a.shape
            a, pool_idx = _maxpool(a)
            if keep_caches:
                cache.update(pool_idx=pool_idx, pre_pool_shape=pre_pool_shape)
        if keep_caches:
            caches.append(cache)
        x = a
    logits = x.reshape(x.shape[0], -1)
    return logits, caches


def _loss_from_logits(logits, labels):
    b = logits.shape[0]
    # non-finite logits are allowed to flow through; the caller flags them
    with np.errstate(over="ignore", invalid="ignore"):
        zmax = logits.max(axis=1, keepdims=True)
        ez = np.exp(logits - zmax)
        se = ez.sum(axis=1, keepdims=True)
        log_probs = logits - zmax - np.log(se)
        per_example = -log_probs[np.arange(b), labels]
        probs = ez / se
    return per_example, probs


def zero_grads(state: NetworkState) -> list:
    return [(np.zeros_like(w), np.zeros_like(b)) for w, b in zip(state.weights, state.biases)]


def forward_backward(spec: NetworkSpec, state: NetworkState, batch: Batch):
    """Mean cross-entropy loss/accuracy over the batch plus per-layer gradients.

    Does not mutate state. A non-finite loss is reported via
    LossStats.is_finite=False with all gradients zeroed; the caller decides
    how to proceed.
    """
    plans = plan_network(spec)
    x = batch.inputs.astype(state.dtype, copy=False)
    if x.shape[1:] != tuple(spec.input_shape):
        raise ConfigError(f"batch inputs {x.shape[1:]} != spec input shape {spec.input_shape}")
    logits, caches = _forward(spec, state, x, keep_caches=True)
    labels = batch.labels
    per_example, probs = _loss_from_logits(logits, labels)
    loss = float(per_example.mean())
    if not math.isfinite(loss):
        return LossStats(loss=loss, accuracy=0.0, is_finite=False), zero_grads(state)
    accuracy = float((logits.argmax(axis=1) == labels).mean())

    b = logits.shape[0]
    dlogits = probs
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    grads = [None] * len(plans)
    dx = dlogits
    for i in range(len(plans) - 1, -1, -1):
        p, cache = plans[i], caches[i]
        da = dx.reshape((b,) + p.out_shape)
        if p.pool:
            da = _maxpool_backward(da, cache["pool_idx"], cache["pre_pool_shape"], da.dtype)
        dz = da * cache["relu_mask"] if p.activation == "relu" else da
        if p.kind == "dense":
            a_in = cache["a_in"]
            gw = a_in.T @ dz
            gb = dz.sum(axis=0)
            dx = (dz @ state.weights[i].T).reshape(cache["orig_shape"])
        else:
            w = state.weights[i]
            f = w.shape[-1]
            dz_flat = dz.reshape(-1, f)
            gw = (cache["col"].T @ dz_flat).reshape(w.shape)
            gb = dz_flat.sum(axis=0)
            dcol = dz_flat @ w.reshape(-1, f).T
            bb, hh, ww, cc = cache["conv_in_shape"]
            dx = _col2im(dcol, bb, hh, ww, cc, p.kernel_size, dz.dtype)
        grads[i] = (gw, gb)
    return LossStats(loss=loss, accuracy=accuracy, is_finite=True), grads


def evaluate(spec: NetworkSpec, state: NetworkState, inputs, labels, chunk=1024) -> LossStats:
    """Mean loss/accuracy over a full split. Deterministic, no mutation."""
    n = inputs.shape[0]
    if n == 0:
        raise ConfigError("cannot evaluate an empty split")
    total_loss = 0.0
    correct = 0
    finite = True
    for start in range(0, n, chunk):
        x = inputs[start : start + chunk].astype(state.dtype, copy=False)
        y = labels[start : start + chunk]
        logits, _ = _forward(spec, state, x, keep_caches=False)
        per_example, _ = _loss_from_logits(logits, y)
        total_loss += float(per_example.sum())
        correct += int((logits.argmax(axis=1) == y).sum())
    loss = total_loss / n
    if not math.isfinite(loss):
        return LossStats(loss=loss, accuracy=0.0, is_finite=False)
    return LossStats(loss=loss, accuracy=correct / n, is_finite=True)
