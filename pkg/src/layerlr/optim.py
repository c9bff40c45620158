"""Per-layer-rate Adam and LAMB updates plus layerwise statistics.

Both optimizers share the bias-corrected Adam moments. The update direction
for a weight tensor is u = m_hat / (sqrt(v_hat) + eps) + wd * theta (decay
folded in, applied to weights only, never biases), so plain Adam applies
theta -= lr * u, which is exactly decoupled (AdamW-style) decay. LAMB
additionally rescales the weight update by the trust ratio
|theta| / |u|; biases are never trust-scaled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .nets import NetworkState

OPTIMIZERS = ("adam", "lamb")


@dataclass(frozen=True)
class OptimConfig:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0
    optimizer: str = "adam"

    def __post_init__(self):
        if not 0.0 <= self.beta1 < 1.0:
            raise ConfigError(f"beta1 must be in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ConfigError(f"beta2 must be in [0, 1), got {self.beta2}")
        if self.epsilon <= 0.0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.weight_decay < 0.0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class LayerStats:
    """Per-layer scalars over the weight tensor (biases excluded throughout)."""

    weight_mean: float
    weight_var: float
    weight_norm: float
    grad_norm: float
    update_norm: float
    trust_ratio: float  # weight_norm / update_norm, 0.0 when update_norm == 0


def _check_step_args(state, grads, per_layer_lr):
    if len(grads) != state.num_layers:
        raise ConfigError(f"got {len(grads)} gradient pairs for {state.num_layers} layers")
    if len(per_layer_lr) != state.num_layers:
        raise ConfigError(
            f"got {len(per_layer_lr)} learning rates for {state.num_layers} layers"
        )
    for i, lr in enumerate(per_layer_lr):
        if lr < 0.0:
            raise ConfigError(f"layer {i}: learning rate must be >= 0, got {lr}")


def _moments_and_direction(state, grads, cfg, out):
    """Advance Adam moments and compute the update direction u per layer.

    Returns (new_state_with_moments, directions); directions[i] = (u_w, u_b).
    """
    t = state.step + 1
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    directions = []
    for i in range(state.num_layers):
        gw, gb = grads[i]
        out.m_w[i] = cfg.beta1 * state.m_w[i] + (1.0 - cfg.beta1) * gw
        out.m_b[i] = cfg.beta1 * state.m_b[i] + (1.0 - cfg.beta1) * gb
        out.v_w[i] = cfg.beta2 * state.v_w[i] + (1.0 - cfg.beta2) * np.square(gw)
        out.v_b[i] = cfg.beta2 * state.v_b[i] + (1.0 - cfg.beta2) * np.square(gb)
        u_w = (out.m_w[i] / bc1) / (np.sqrt(out.v_w[i] / bc2) + cfg.epsilon)
        if cfg.weight_decay:
            u_w = u_w + cfg.weight_decay * state.weights[i]
        u_b = (out.m_b[i] / bc1) / (np.sqrt(out.v_b[i] / bc2) + cfg.epsilon)
        directions.append((u_w, u_b))
    out.step = t
    return directions


def _blank(state):
    n = state.num_layers
    return NetworkState(
        weights=[None] * n, biases=[None] * n,
        m_w=[None] * n, m_b=[None] * n, v_w=[None] * n, v_b=[None] * n,
    )


def adam_step(state, grads, per_layer_lr, cfg: OptimConfig):
    """One bias-corrected Adam step with a separate learning rate per layer.

    Weight decay is decoupled and hits weights only. Returns the updated
    state and the per-layer update directions (for layer statistics).
    """
    _check_step_args(state, grads, per_layer_lr)
    new = _blank(state)
    directions = _moments_and_direction(state, grads, cfg, new)
    for i, (u_w, u_b) in enumerate(directions):
        lr = per_layer_lr[i]
        new.weights[i] = state.weights[i] - lr * u_w
        new.biases[i] = state.biases[i] - lr * u_b
    return new, directions


def trust_scale(w, u_w) -> float:
    """LAMB trust ratio |w| / |u| with a zero sentinel for a zero update."""
    un = float(np.linalg.norm(u_w.astype(np.float64, copy=False)))
    if un == 0.0:
        return 0.0
    return float(np.linalg.norm(w.astype(np.float64, copy=False))) / un


def lamb_step(state, grads, per_layer_lr, cfg: OptimConfig):
    """Adam step with the weight update rescaled by the layer trust ratio."""
    _check_step_args(state, grads, per_layer_lr)
    new = _blank(state)
    directions = _moments_and_direction(state, grads, cfg, new)
    for i, (u_w, u_b) in enumerate(directions):
        lr = per_layer_lr[i]
        scale = trust_scale(state.weights[i], u_w)
        new.weights[i] = state.weights[i] - (lr * scale) * u_w
        new.biases[i] = state.biases[i] - lr * u_b
    return new, directions


def optimizer_step(state, grads, per_layer_lr, cfg: OptimConfig):
    if cfg.optimizer == "lamb":
        return lamb_step(state, grads, per_layer_lr, cfg)
    return adam_step(state, grads, per_layer_lr, cfg)


def layer_stats(state, grads, updates) -> list:
    """Layerwise observation statistics, computed in float64 over weights."""
    if len(grads) != state.num_layers or len(updates) != state.num_layers:
        raise ConfigError("grads/updates layer count does not match state")
    stats = []
    for i in range(state.num_layers):
        w = state.weights[i].astype(np.float64, copy=False)
        gw = grads[i][0].astype(np.float64, copy=False)
        uw = updates[i][0].astype(np.float64, copy=False)
        wn = float(np.linalg.norm(w))
        un = float(np.linalg.norm(uw))
        stats.append(
            LayerStats(
                weight_mean=float(w.mean()),
                weight_var=float(w.var()),
                weight_norm=wn,
                grad_norm=float(np.linalg.norm(gw)),
                update_norm=un,
                trust_ratio=wn / un if un > 0.0 else 0.0,
            )
        )
    return stats
