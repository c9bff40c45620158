"""Desk-scale environment and agent presets.

The full-scale configuration (tau=100, 50k agent timesteps, file-backed
datasets) is far beyond a test budget, so these presets shrink the
supervised problem and the control timescale while keeping every interface
identical. Synthetic blobs substitute for image datasets when no data
directory is available.
"""

from __future__ import annotations

from .agent import PPOConfig
from .env import EnvConfig
from .nets import LayerSpec, NetworkSpec
from .optim import OptimConfig


def mlp2_network(dim: int = 32, hidden: int = 64, classes: int = 10) -> NetworkSpec:
    """Two trainable layers: dense+relu, dense logits."""
    return NetworkSpec(
        input_shape=(dim,),
        num_classes=classes,
        layers=(
            LayerSpec(kind="dense", out_dim=hidden, activation="relu"),
            LayerSpec(kind="dense", out_dim=classes, activation="none"),
        ),
    )


def cnn2_network(side: int = 8, channels: int = 8, classes: int = 10) -> NetworkSpec:
    """Two trainable layers: 3x3 conv with pool, dense logits."""
    return NetworkSpec(
        input_shape=(side, side, 1),
        num_classes=classes,
        layers=(
            LayerSpec(kind="conv2d", out_channels=channels, pool=True, activation="relu"),
            LayerSpec(kind="dense", out_dim=classes, activation="none"),
        ),
    )


def cnn5_network(side: int = 8, classes: int = 10) -> NetworkSpec:
    """Five trainable layers: four 3x3 convs (two pooled), dense logits."""
    return NetworkSpec(
        input_shape=(side, side, 1),
        num_classes=classes,
        layers=(
            LayerSpec(kind="conv2d", out_channels=8, pool=True, activation="relu"),
            LayerSpec(kind="conv2d", out_channels=16, pool=True, activation="relu"),
            LayerSpec(kind="conv2d", out_channels=16, activation="relu"),
            LayerSpec(kind="conv2d", out_channels=16, activation="relu"),
            LayerSpec(kind="dense", out_dim=classes, activation="none"),
        ),
    )


def blob_dataset(dim: int = 32, classes: int = 10, per_class: int = 1112,
                 separation: float = 2.4, label_noise: float = 0.0,
                 image_shape=None, seed: int = 0) -> dict:
    cfg = {
        "name": "synthetic_blobs",
        "classes": classes,
        "per_class": per_class,
        "dim": dim,
        "seed": seed,
        "separation": separation,
        "label_noise": label_noise,
    }
    if image_shape is not None:
        cfg["image_shape"] = list(image_shape)
    return cfg


def mlp2_env(tau: int = 20, episode_epochs: float = 2.0, separation: float = 2.4,
             **env_overrides) -> EnvConfig:
    """2-layer MLP on 10-class blobs; the learning-signal workhorse."""
    return EnvConfig(
        network=mlp2_network(),
        dataset=blob_dataset(separation=separation),
        optim=OptimConfig(),
        tau=tau,
        batch_size=32,
        episode_epochs=episode_epochs,
        **env_overrides,
    )


def cnn2_env(tau: int = 10, episode_epochs: float = 1.0, **env_overrides) -> EnvConfig:
    return EnvConfig(
        network=cnn2_network(),
        dataset=blob_dataset(dim=64, per_class=300, image_shape=(8, 8, 1)),
        optim=OptimConfig(),
        tau=tau,
        batch_size=32,
        episode_epochs=episode_epochs,
        **env_overrides,
    )


def cnn5_env(tau: int = 10, episode_epochs: float = 1.0, **env_overrides) -> EnvConfig:
    return EnvConfig(
        network=cnn5_network(),
        dataset=blob_dataset(dim=64, per_class=300, image_shape=(8, 8, 1)),
        optim=OptimConfig(),
        tau=tau,
        batch_size=32,
        episode_epochs=episode_epochs,
        **env_overrides,
    )


def desk_ppo(total_timesteps: int = 2000, **overrides) -> PPOConfig:
    """PPO settings sized for minutes-long desk runs.

    Deviations from the full-scale defaults (more update epochs, larger agent
    learning rate) compensate for the tiny step budget: ~15 rollout batches
    have to carry the whole curriculum.
    """
    defaults = dict(
        num_executors=4,
        total_timesteps=total_timesteps,
        rollout_horizon=32,
        sequence_length=8,
        update_epochs=12,
        num_minibatches=4,
        learning_rate=3e-3,
        entropy_coef=0.015,
    )
    defaults.update(overrides)
    return PPOConfig(**defaults)
