"""Supervised-training control environment.

One episode wraps one training run of a small network. Every environment
timestep: each agent picks one of 9 learning-rate modifications for its
layer, the network trains for `tau` gradient updates, and the shared reward
is the change in validation accuracy relative to a no-op counterfactual run
from the same starting state over the same minibatches (difference reward).
Training then continues from the acted-on branch.

Observations have a fixed width regardless of network depth: a global block
(identical across agents) plus a per-layer local block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset, load_dataset
from .errors import ConfigError
from .nets import Batch, NetworkSpec, evaluate, forward_backward, init_state, plan_network
from .optim import OptimConfig, layer_stats, optimizer_step

# Appendix-style discrete modifications of the current learning rate;
# index 0 is the no-op.
ACTION_LABELS = (
    "+0.00", "*1.01", "*1.10", "/1.01", "/1.10",
    "+0.0005", "-0.0005", "+0.001", "-0.001",
)
NUM_ACTIONS = 9
NOOP_ACTION = 0

ABLATION_MODES = ("full", "lr_only", "timestep_only", "single_agent_global")

# Observation layout. Global block first, then the local block.
GLOBAL_DIM = 9
(
    G_TRAIN_ACC, G_VAL_ACC, G_TRAIN_LOSS, G_VAL_LOSS, G_NONFINITE,
    G_PROGRESS, G_LOSS_RATIO, G_INIT_LR, G_INIT_WD,
) = range(GLOBAL_DIM)
L_LOG_LR = 0
L_PREV_ACTION = 1   # one-hot over the 9 actions
L_LAYER_TYPE = 10   # one-hot: dense, conv2d, attention
L_DEPTH = 13        # one-hot: first, intermediate, final
L_TRUST = 16
L_GRAD_NORM = 17
L_UPDATE_NORM = 18
L_WEIGHT_MEAN = 19
L_WEIGHT_VAR = 20
L_WEIGHT_NORM = 21
LOCAL_DIM = 22
OBS_DIM = GLOBAL_DIM + LOCAL_DIM

_LAYER_TYPE_INDEX = {"dense": 0, "conv2d": 1, "attention": 2}


def apply_action(lr: float, action: int) -> float:
    """Exact arithmetic for one action id; no clamping."""
    if not 0 <= action < NUM_ACTIONS:
        raise ConfigError(f"action id {action} outside [0, {NUM_ACTIONS})")
    if action == 0:
        return lr
    if action == 1:
        return lr * 1.01
    if action == 2:
        return lr * 1.10
    if action == 3:
        return lr / 1.01
    if action == 4:
        return lr / 1.10
    if action == 5:
        return lr + 0.0005
    if action == 6:
        return lr - 0.0005
    if action == 7:
        return lr + 0.001
    return lr - 0.001


def shift_lrs(lrs, actions, lr_max: float) -> list:
    """Apply one action per layer and clamp into [0, lr_max]."""
    if len(actions) != len(lrs):
        raise ConfigError(f"got {len(actions)} actions for {len(lrs)} layers")
    return [min(max(apply_action(lr, a), 0.0), lr_max) for lr, a in zip(lrs, actions)]


def mask_keep_indices(mode: str):
    if mode == "full":
        return None
    if mode == "lr_only":
        return (GLOBAL_DIM + L_LOG_LR,)
    if mode == "timestep_only":
        return (G_PROGRESS,)
    if mode == "single_agent_global":
        return tuple(range(GLOBAL_DIM))
    raise ConfigError(f"unknown ablation mode {mode!r}")


def ablation_mask(observations: np.ndarray, mode: str) -> np.ndarray:
    """Zero out everything except the features the ablation keeps."""
    keep = mask_keep_indices(mode)
    if keep is None:
        return observations
    masked = np.zeros_like(observations)
    masked[..., list(keep)] = observations[..., list(keep)]
    return masked


class ObsNormalizer:
    """Per-feature running mean/variance; frozen copies are used at evaluation."""

    def __init__(self, dim: int = OBS_DIM, clip: float = 10.0):
        self.mean = np.zeros(dim, dtype=np.float64)
        self.var = np.ones(dim, dtype=np.float64)
        self.count = 1e-4
        self.clip = clip
        self.frozen = False

    def update(self, batch: np.ndarray) -> None:
        if self.frozen:
            return
        batch = batch.reshape(-1, self.mean.shape[0]).astype(np.float64)
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        delta = b_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * (n / total)
        m_a = self.var * self.count
        m_b = b_var * n
        self.var = (m_a + m_b + np.square(delta) * self.count * n / total) / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        z = (x - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(z, -self.clip, self.clip).astype(np.float32)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "var": self.var.tolist(),
            "count": self.count,
            "clip": self.clip,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObsNormalizer":
        norm = cls(dim=len(d["mean"]), clip=d.get("clip", 10.0))
        norm.mean = np.asarray(d["mean"], dtype=np.float64)
        norm.var = np.asarray(d["var"], dtype=np.float64)
        norm.count = float(d["count"])
        return norm


@dataclass
class EnvConfig:
    network: NetworkSpec
    dataset: dict
    optim: OptimConfig = field(default_factory=OptimConfig)
    tau: int = 100
    batch_size: int = 32
    episode_epochs: float = 1.0
    lr_init_bounds: tuple = (1e-5, 1e-2)
    wd_init_bounds: tuple = (1e-5, 1e-1)
    fixed_init_lr: float = None
    fixed_init_wd: float = None
    lr_max: float = 1.0
    difference_rewards: bool = True
    ablation: str = "full"
    normalize_observations: bool = True
    eval_train_examples: int = 2048

    def __post_init__(self):
        if self.tau < 1:
            raise ConfigError(f"tau must be >= 1, got {self.tau}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.episode_epochs <= 0:
            raise ConfigError(f"episode_epochs must be > 0, got {self.episode_epochs}")
        for name, (lo, hi) in (
            ("lr_init_bounds", self.lr_init_bounds),
            ("wd_init_bounds", self.wd_init_bounds),
        ):
            if not (0.0 < lo < hi):
                raise ConfigError(f"{name} must satisfy 0 < low < high, got ({lo}, {hi})")
        if self.lr_max <= 0.0:
            raise ConfigError(f"lr_max must be > 0, got {self.lr_max}")
        if self.ablation not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation mode {self.ablation!r}")


@dataclass
class StepDiagnostics:
    action_return: float          # validation accuracy after the acted branch
    noop_return: float            # counterfactual accuracy (None when disabled)
    lrs: tuple
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    batch_indices: np.ndarray     # (tau, batch_size) indices both branches consumed


@dataclass
class StepResult:
    observations: np.ndarray      # (num_agents, OBS_DIM)
    reward: float
    done: bool
    diagnostics: StepDiagnostics


def _log_uniform(rng, lo, hi) -> float:
    return float(10.0 ** rng.uniform(math.log10(lo), math.log10(hi)))


class Env:
    """One owned training run; not safe to share across workers."""

    def __init__(self, cfg: EnvConfig, dataset: Dataset = None, normalizer: ObsNormalizer = None,
                 data_dir=None):
        self.cfg = cfg
        self.dataset = dataset if dataset is not None else load_dataset(cfg.dataset, data_dir)
        self.plans = plan_network(cfg.network)
        if self.dataset.input_shape != tuple(cfg.network.input_shape):
            raise ConfigError(
                f"dataset shape {self.dataset.input_shape} != network input "
                f"{tuple(cfg.network.input_shape)}"
            )
        self.num_layers = len(self.plans)
        self.num_agents = 1 if cfg.ablation == "single_agent_global" else self.num_layers
        if normalizer is None and cfg.normalize_observations:
            normalizer = ObsNormalizer()
        self.normalizer = normalizer
        m = self.dataset.train_size
        self.episode_length = max(1, math.ceil(cfg.episode_epochs * m / (cfg.batch_size * cfg.tau)))
        self._net = None
        self._done = True

    # -- episode control ----------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        init_ss, cond_ss, batch_ss = np.random.SeedSequence(seed).spawn(3)
        cond_rng = np.random.default_rng(cond_ss)
        cfg = self.cfg
        self.alpha_init = (
            cfg.fixed_init_lr
            if cfg.fixed_init_lr is not None
            else _log_uniform(cond_rng, *cfg.lr_init_bounds)
        )
        self.wd_init = (
            cfg.fixed_init_wd
            if cfg.fixed_init_wd is not None
            else _log_uniform(cond_rng, *cfg.wd_init_bounds)
        )
        self._episode_optim = replace(cfg.optim, weight_decay=self.wd_init)
        self._net = init_state(cfg.network, init_ss)
        self._batch_rng = np.random.default_rng(batch_ss)
        self.layer_lrs = [float(self.alpha_init)] * self.num_layers
        self.prev_actions = [NOOP_ACTION] * self.num_agents
        self._t = 0
        self._done = False
        self._zero_layer_io = [
            (np.zeros_like(w), np.zeros_like(b))
            for w, b in zip(self._net.weights, self._net.biases)
        ]
        ds = self.dataset
        cap = min(cfg.eval_train_examples, ds.train_size)
        train_stats = evaluate(cfg.network, self._net, ds.train_x[:cap], ds.train_y[:cap])
        val_stats = evaluate(cfg.network, self._net, ds.val_x, ds.val_y)
        self._last_train = (train_stats.loss, train_stats.accuracy, train_stats.is_finite)
        self._last_val = val_stats
        self._last_stats = layer_stats(self._net, self._zero_layer_io, self._zero_layer_io)
        return self._build_observations()

    @property
    def done(self) -> bool:
        return self._done

    @property
    def net_state(self):
        return self._net

    # -- stepping -----------------------------------------------------------

    def step(self, actions, lr_override=None) -> StepResult:
        """Advance one timestep.

        `actions` is one action id per agent. `lr_override` (baseline mode)
        bypasses actions entirely: a callable mapping the global supervised
        step counter to a learning rate applied to every layer.
        """
        if self._done:
            raise RuntimeError("episode is done; call reset() first")
        cfg = self.cfg
        if lr_override is None:
            if len(actions) != self.num_agents:
                raise ConfigError(f"got {len(actions)} actions for {self.num_agents} agents")
            actions = [int(a) for a in actions]
            if cfg.ablation == "single_agent_global":
                layer_actions = [actions[0]] * self.num_layers
            else:
                layer_actions = actions
            new_lrs = shift_lrs(self.layer_lrs, layer_actions, cfg.lr_max)
            lr_source = new_lrs
        else:
            actions = [NOOP_ACTION] * self.num_agents
            new_lrs = None  # filled from the override after the branch runs
            lr_source = lr_override

        m = self.dataset.train_size
        batch_idx = self._batch_rng.integers(0, m, size=(cfg.tau, cfg.batch_size))

        acted = self._run_updates(self._net, lr_source, batch_idx)
        val_acted = evaluate(cfg.network, acted["net"], self.dataset.val_x, self.dataset.val_y)

        if new_lrs is None:
            new_lrs = acted["final_lrs"]

        noop_return = None
        if cfg.difference_rewards:
            if new_lrs == self.layer_lrs:
                # Branches would be bit-identical; the difference is exactly zero.
                noop_return = val_acted.accuracy
                reward = 0.0
            else:
                idle = self._run_updates(self._net, self.layer_lrs, batch_idx)
                val_idle = evaluate(cfg.network, idle["net"], self.dataset.val_x, self.dataset.val_y)
                noop_return = val_idle.accuracy
                reward = val_acted.accuracy - val_idle.accuracy
        else:
            reward = val_acted.accuracy

        # Continue from the acted-on branch.
        self._net = acted["net"]
        self.layer_lrs = new_lrs
        self.prev_actions = list(actions)
        self._t += 1
        self._done = self._t >= self.episode_length
        self._last_train = (acted["mean_loss"], acted["mean_acc"], acted["all_finite"])
        self._last_val = val_acted
        self._last_stats = layer_stats(self._net, acted["last_grads"], acted["last_updates"])

        diag = StepDiagnostics(
            action_return=val_acted.accuracy,
            noop_return=noop_return,
            lrs=tuple(self.layer_lrs),
            train_loss=acted["mean_loss"],
            train_acc=acted["mean_acc"],
            val_loss=val_acted.loss,
            val_acc=val_acted.accuracy,
            batch_indices=batch_idx,
        )
        return StepResult(
            observations=self._build_observations(),
            reward=float(reward),
            done=self._done,
            diagnostics=diag,
        )

    def _run_updates(self, start_net, lr_source, batch_idx):
        """Run tau supervised updates from start_net without mutating it."""
        cfg = self.cfg
        net = start_net
        ds = self.dataset
        loss_sum, acc_sum = 0.0, 0.0
        all_finite = True
        grads = updates = self._zero_layer_io
        lrs = None
        for k in range(batch_idx.shape[0]):
            idx = batch_idx[k]
            batch = Batch(inputs=ds.train_x[idx], labels=ds.train_y[idx])
            stats, grads = forward_backward(cfg.network, net, batch)
            loss_sum += stats.loss
            acc_sum += stats.accuracy
            all_finite = all_finite and stats.is_finite
            if callable(lr_source):
                lrs = [float(lr_source(net.step))] * self.num_layers
            else:
                lrs = lr_source
            net, updates = optimizer_step(net, grads, lrs, self._episode_optim)
        tau = batch_idx.shape[0]
        return {
            "net": net,
            "mean_loss": loss_sum / tau,
            "mean_acc": acc_sum / tau,
            "all_finite": all_finite,
            "last_grads": grads,
            "last_updates": updates,
            "final_lrs": list(lrs),
        }

    # -- observations ---------------------------------------------------------

    def _depth_slot(self, layer: int) -> int:
        if layer == 0:
            return 0
        if layer == self.num_layers - 1:
            return 2
        return 1

    def _build_observations(self) -> np.ndarray:
        cfg = self.cfg
        train_loss, train_acc, train_finite = self._last_train
        val = self._last_val
        finite_flag = 0.0 if (train_finite and val.is_finite) else 1.0
        ratio = train_loss / val.loss if val.loss else 0.0
        progress = self._t / self.episode_length
        global_block = np.array(
            [
                train_acc, val.accuracy, train_loss, val.loss, finite_flag,
                progress, ratio, self.alpha_init, self.wd_init,
            ],
            dtype=np.float64,
        )

        rows = np.zeros((self.num_agents, OBS_DIM), dtype=np.float64)
        for agent in range(self.num_agents):
            layer = 0 if cfg.ablation == "single_agent_global" else agent
            stats = self._last_stats[layer]
            local = np.zeros(LOCAL_DIM, dtype=np.float64)
            local[L_LOG_LR] = math.log10(self.layer_lrs[layer] + 1e-10)
            local[L_PREV_ACTION + self.prev_actions[agent]] = 1.0
            local[L_LAYER_TYPE + _LAYER_TYPE_INDEX[self.plans[layer].kind]] = 1.0
            local[L_DEPTH + self._depth_slot(layer)] = 1.0
            local[L_TRUST] = stats.trust_ratio
            local[L_GRAD_NORM] = stats.grad_norm
            local[L_UPDATE_NORM] = stats.update_norm
            local[L_WEIGHT_MEAN] = stats.weight_mean
            local[L_WEIGHT_VAR] = stats.weight_var
            local[L_WEIGHT_NORM] = stats.weight_norm
            rows[agent, :GLOBAL_DIM] = global_block
            rows[agent, GLOBAL_DIM:] = local

        rows[~np.isfinite(rows)] = 0.0
        if self.normalizer is not None and cfg.normalize_observations:
            self.normalizer.update(rows)
            rows = self.normalizer.normalize(rows)
        else:
            rows = rows.astype(np.float32)
        return ablation_mask(rows, cfg.ablation)
