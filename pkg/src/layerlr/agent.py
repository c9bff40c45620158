"""Independent PPO with a parameter-shared recurrent policy.

One actor/critic parameter set serves every agent; per-agent behaviour comes
only from inputs (local observation block, depth embedding, hidden state).
Rollouts are chunked into fixed-length sequences for truncated BPTT through
the GRU cell. The supervised engine stays in numpy; torch is used here for
the agent networks only.
"""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn

from .env import NUM_ACTIONS, OBS_DIM, ObsNormalizer
from .errors import ConfigError, SnapshotError
from .nets import evaluate as evaluate_network

logger = logging.getLogger(__name__)

POLICY_MAGIC = b"LLRP"
POLICY_VERSION = 1


@dataclass
class PPOConfig:
    num_executors: int = 4
    total_timesteps: int = 50_000
    rollout_horizon: int = 32     # env steps per executor between updates
    sequence_length: int = 8
    update_epochs: int = 2
    num_minibatches: int = 4
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    learning_rate: float = 3e-4
    max_grad_norm: float = 0.5
    clip_value: bool = True
    normalize_advantage: bool = True
    normalize_targets: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ConfigError(f"gae_lambda must be in [0, 1], got {self.gae_lambda}")
        if self.clip_eps <= 0.0:
            raise ConfigError(f"clip_eps must be > 0, got {self.clip_eps}")
        if self.rollout_horizon % self.sequence_length:
            raise ConfigError("rollout_horizon must be a multiple of sequence_length")
        if self.num_executors < 1 or self.total_timesteps < 1:
            raise ConfigError("num_executors and total_timesteps must be >= 1")


def _ortho(layer, gain=math.sqrt(2.0)):
    nn.init.orthogonal_(layer.weight, gain)
    nn.init.constant_(layer.bias, 0.0)
    return layer


class ActorCritic(nn.Module):
    """Shared actor (MLP -> GRU -> MLP -> 9 logits) and critic (MLP -> value)."""

    def __init__(self, obs_dim: int = OBS_DIM, hidden_sizes=(128, 128), gru_size: int = 64,
                 post_size: int = 64, critic_sizes=(64, 64), num_actions: int = NUM_ACTIONS):
        super().__init__()
        self.arch = {
            "obs_dim": obs_dim, "hidden_sizes": list(hidden_sizes), "gru_size": gru_size,
            "post_size": post_size, "critic_sizes": list(critic_sizes),
            "num_actions": num_actions,
        }
        self.obs_dim = obs_dim
        self.gru_size = gru_size
        trunk = []
        d = obs_dim
        for h in hidden_sizes:
            trunk += [_ortho(nn.Linear(d, h)), nn.Tanh()]
            d = h
        self.trunk = nn.Sequential(*trunk)
        self.gru = nn.GRUCell(d, gru_size)
        self.post = nn.Sequential(_ortho(nn.Linear(gru_size, post_size)), nn.Tanh())
        self.head = _ortho(nn.Linear(post_size, num_actions), gain=0.01)
        critic = []
        d = obs_dim
        for h in critic_sizes:
            critic += [_ortho(nn.Linear(d, h)), nn.Tanh()]
            d = h
        critic.append(_ortho(nn.Linear(d, 1), gain=1.0))
        self.critic = nn.Sequential(*critic)

    def initial_hidden(self, n: int) -> torch.Tensor:
        return torch.zeros(n, self.gru_size, dtype=next(self.parameters()).dtype)

    def actor_step(self, obs: torch.Tensor, hidden: torch.Tensor):
        """One recurrent step for a batch of agents: (logits, new_hidden)."""
        x = self.trunk(obs)
        hidden = self.gru(x, hidden)
        return self.head(self.post(hidden)), hidden

    def actor_sequence(self, obs_seq: torch.Tensor, init_hidden: torch.Tensor,
                       resets: torch.Tensor) -> torch.Tensor:
        """Re-run the GRU over (B, S, obs) chunks; resets[b, t] zeroes the
        hidden state before consuming step t (episode boundary)."""
        hidden = init_hidden
        logits = []
        for t in range(obs_seq.shape[1]):
            hidden = hidden * (1.0 - resets[:, t : t + 1])
            step_logits, hidden = self.actor_step(obs_seq[:, t], hidden)
            logits.append(step_logits)
        return torch.stack(logits, dim=1)

    def value(self, obs: torch.Tensor) -> torch.Tensor:
        return self.critic(obs).squeeze(-1)


def policy_forward(model: ActorCritic, observation, hidden):
    """Spec-level single forward: numpy obs rows -> (logits, new hidden)."""
    obs = torch.as_tensor(np.asarray(observation, dtype=np.float32))
    if obs.ndim == 1:
        obs = obs[None, :]
    if obs.shape[-1] != model.obs_dim:
        raise ConfigError(f"observation width {obs.shape[-1]} != policy input {model.obs_dim}")
    with torch.no_grad():
        logits, new_hidden = model.actor_step(obs, hidden)
    return logits, new_hidden


def sample_action(logits: torch.Tensor, generator: torch.Generator):
    """Categorical sample per row with its log-probability."""
    if not torch.isfinite(logits).all():
        raise ConfigError("non-finite logits passed to sample_action")
    log_probs = torch.log_softmax(logits, dim=-1)
    actions = torch.multinomial(log_probs.exp(), 1, generator=generator).squeeze(-1)
    return actions, log_probs.gather(-1, actions[:, None]).squeeze(-1)


def greedy_action(logits: torch.Tensor) -> torch.Tensor:
    return logits.argmax(dim=-1)


@dataclass
class Trajectory:
    """One agent stream: aligned per-timestep arrays plus the end bootstrap.

    Only rewards/values/dones enter the advantage recursion; the remaining
    fields carry the data PPO needs when the stream is chunked for updates.
    """

    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    bootstrap_value: float = 0.0
    observations: np.ndarray = None
    actions: np.ndarray = None
    log_probs: np.ndarray = None
    initial_hidden: np.ndarray = None  # recurrent state at sequence starts


def compute_gae(traj: Trajectory, gamma: float, gae_lambda: float):
    """Standard GAE recursion; value targets are advantages + values."""
    rewards = np.asarray(traj.rewards, dtype=np.float64)
    values = np.asarray(traj.values, dtype=np.float64)
    dones = np.asarray(traj.dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ConfigError("trajectory arrays must share one shape")
    n = rewards.shape[0]
    advantages = np.zeros(n, dtype=np.float64)
    gae = 0.0
    next_value = float(traj.bootstrap_value)
    for t in range(n - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        gae = delta + gamma * gae_lambda * nonterminal * gae
        advantages[t] = gae
        next_value = values[t]
    return advantages, advantages + values


def clipped_surrogate(ratio: torch.Tensor, advantages: torch.Tensor, clip_eps: float):
    clipped = torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    return -torch.min(ratio * advantages, clipped * advantages).mean()


class ValueNormalizer:
    """Running mean/std of value targets; the critic learns the normalized scale."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.mean = 0.0
        self.var = 1.0
        self.count = 1e-4

    def update(self, targets: np.ndarray) -> None:
        if not self.enabled:
            return
        targets = np.asarray(targets, dtype=np.float64).ravel()
        n = targets.size
        if n == 0:
            return
        b_mean = float(targets.mean())
        b_var = float(targets.var())
        delta = b_mean - self.mean
        total = self.count + n
        self.mean += delta * n / total
        self.var = (self.var * self.count + b_var * n + delta**2 * self.count * n / total) / total
        self.count = total

    @property
    def std(self) -> float:
        return math.sqrt(self.var + 1e-8)

    def normalize(self, x):
        if not self.enabled:
            return x
        return (x - self.mean) / self.std

    def denormalize(self, x):
        if not self.enabled:
            return x
        return x * self.std + self.mean


@dataclass
class SequenceBatch:
    """Chunked rollout data shaped (num_sequences, sequence_length, ...)."""

    obs: torch.Tensor
    actions: torch.Tensor
    old_log_probs: torch.Tensor
    old_values_norm: torch.Tensor
    advantages: torch.Tensor
    targets_norm: torch.Tensor
    resets: torch.Tensor
    init_hidden: torch.Tensor

    def select(self, idx) -> "SequenceBatch":
        return SequenceBatch(*(getattr(self, f.name)[idx] for f in
                               self.__dataclass_fields__.values()))

    @property
    def num_sequences(self) -> int:
        return self.obs.shape[0]


def ppo_losses(model: ActorCritic, mb: SequenceBatch, cfg: PPOConfig):
    """Clipped policy loss, clipped value loss and entropy for one minibatch."""
    logits = model.actor_sequence(mb.obs, mb.init_hidden, mb.resets)
    log_probs = torch.log_softmax(logits, dim=-1)
    taken = log_probs.gather(-1, mb.actions[..., None]).squeeze(-1)
    ratio = torch.exp(taken - mb.old_log_probs)

    adv = mb.advantages
    if cfg.normalize_advantage:
        adv = (adv - adv.mean()) / (adv.std(unbiased=False) + 1e-8)
    policy_loss = clipped_surrogate(ratio, adv, cfg.clip_eps)

    values = model.value(mb.obs.reshape(-1, model.obs_dim)).reshape(mb.obs.shape[:2])
    if cfg.clip_value:
        clipped = mb.old_values_norm + torch.clamp(
            values - mb.old_values_norm, -cfg.clip_eps, cfg.clip_eps
        )
        value_loss = 0.5 * torch.max(
            (values - mb.targets_norm) ** 2, (clipped - mb.targets_norm) ** 2
        ).mean()
    else:
        value_loss = 0.5 * ((values - mb.targets_norm) ** 2).mean()

    entropy = -(log_probs.exp() * log_probs).sum(-1).mean()
    return policy_loss, value_loss, entropy


def ppo_update(model, optimizer, batch: SequenceBatch, cfg: PPOConfig,
               torch_gen: torch.Generator) -> dict:
    """Run the configured epochs/minibatches over one rollout batch."""
    n_seq = batch.num_sequences
    last = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "skipped": 0}
    for _ in range(cfg.update_epochs):
        perm = torch.randperm(n_seq, generator=torch_gen)
        for chunk in torch.tensor_split(perm, cfg.num_minibatches):
            if chunk.numel() == 0:
                continue
            mb = batch.select(chunk)
            policy_loss, value_loss, entropy = ppo_losses(model, mb, cfg)
            loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
            if not torch.isfinite(loss):
                last["skipped"] += 1
                logger.warning("skipping PPO minibatch: non-finite loss")
                continue
            optimizer.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), cfg.max_grad_norm)
            optimizer.step()
            last.update(
                policy_loss=float(policy_loss.detach()),
                value_loss=float(value_loss.detach()),
                entropy=float(entropy.detach()),
            )
    return last


@dataclass
class PolicyBundle:
    model: ActorCritic
    normalizer: ObsNormalizer = None
    meta: dict = field(default_factory=dict)  # ablation mode, obs settings, ...


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)  # per finished episode
    total_env_steps: int = 0
    num_updates: int = 0
    skipped_minibatches: int = 0

    COLUMNS = (
        "timestep", "episode", "mean_reward", "mean_val_acc",
        "policy_loss", "value_loss", "entropy",
    )

    def write_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c]
                                 for c in self.COLUMNS])


def train(make_env, cfg: PPOConfig, seed: int, normalizer: ObsNormalizer = None,
          model: ActorCritic = None):
    """Synchronous IPPO over parallel environment copies.

    `make_env(normalizer)` must build a fresh environment each call; all
    copies share the observation normalizer. Returns (PolicyBundle,
    TrainingLog).
    """
    torch.manual_seed(seed)
    if normalizer is None:
        normalizer = ObsNormalizer()
    envs = [make_env(normalizer) for _ in range(cfg.num_executors)]
    num_agents = envs[0].num_agents
    sample_gen = torch.Generator().manual_seed(seed + 1)
    update_gen = torch.Generator().manual_seed(seed + 2)
    seeder = np.random.default_rng(np.random.SeedSequence([seed, 0xE]))
    value_norm = ValueNormalizer(enabled=cfg.normalize_targets)
    log = TrainingLog()

    n_envs, horizon, seq_len = cfg.num_executors, cfg.rollout_horizon, cfg.sequence_length

    obs = np.stack([env.reset(int(seeder.integers(2**63))) for env in envs])
    obs_dim_env = obs.shape[-1]
    if model is None:
        model = ActorCritic(obs_dim=obs_dim_env)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    h_size = model.gru_size
    hidden = model.initial_hidden(n_envs * num_agents)
    ep_rewards = [[] for _ in range(n_envs)]
    ep_val_accs = [[] for _ in range(n_envs)]
    episodes_done = 0
    last_losses = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "skipped": 0}

    rounds = math.ceil(cfg.total_timesteps / (horizon * n_envs))
    for _ in range(rounds):
        obs_buf = np.zeros((horizon, n_envs, num_agents, obs_dim_env), dtype=np.float32)
        act_buf = np.zeros((horizon, n_envs, num_agents), dtype=np.int64)
        logp_buf = np.zeros((horizon, n_envs, num_agents), dtype=np.float32)
        val_buf = np.zeros((horizon, n_envs, num_agents), dtype=np.float64)
        vnorm_buf = np.zeros((horizon, n_envs, num_agents), dtype=np.float32)
        rew_buf = np.zeros((horizon, n_envs), dtype=np.float64)
        done_buf = np.zeros((horizon, n_envs), dtype=np.float64)
        hinit_buf = np.zeros((horizon // seq_len, n_envs * num_agents, h_size), dtype=np.float32)

        for t in range(horizon):
            if t % seq_len == 0:
                hinit_buf[t // seq_len] = hidden.numpy()
            flat_obs = torch.as_tensor(obs.reshape(n_envs * num_agents, obs_dim_env))
            with torch.no_grad():
                logits, hidden = model.actor_step(flat_obs, hidden)
                actions_t, logps_t = sample_action(logits, sample_gen)
                values_norm = model.value(flat_obs)
            obs_buf[t] = obs
            act_buf[t] = actions_t.numpy().reshape(n_envs, num_agents)
            logp_buf[t] = logps_t.numpy().reshape(n_envs, num_agents)
            vnorm_buf[t] = values_norm.numpy().reshape(n_envs, num_agents)
            val_buf[t] = value_norm.denormalize(
                values_norm.numpy().astype(np.float64).reshape(n_envs, num_agents)
            )
            next_obs = np.empty_like(obs)
            for e, env in enumerate(envs):
                result = env.step(act_buf[t, e].tolist())
                rew_buf[t, e] = result.reward
                done_buf[t, e] = float(result.done)
                ep_rewards[e].append(result.reward)
                ep_val_accs[e].append(result.diagnostics.val_acc)
                if result.done:
                    episodes_done += 1
                    log.rows.append({
                        "timestep": log.total_env_steps + (t + 1) * n_envs,
                        "episode": episodes_done,
                        "mean_reward": float(np.mean(ep_rewards[e])),
                        "mean_val_acc": float(np.mean(ep_val_accs[e])),
                        "policy_loss": last_losses["policy_loss"],
                        "value_loss": last_losses["value_loss"],
                        "entropy": last_losses["entropy"],
                    })
                    ep_rewards[e], ep_val_accs[e] = [], []
                    next_obs[e] = env.reset(int(seeder.integers(2**63)))
                    rows = slice(e * num_agents, (e + 1) * num_agents)
                    hidden[rows] = 0.0
                else:
                    next_obs[e] = result.observations
            obs = next_obs
        log.total_env_steps += horizon * n_envs

        with torch.no_grad():
            boot_norm = model.value(torch.as_tensor(obs.reshape(-1, obs_dim_env)))
        boot_raw = value_norm.denormalize(
            boot_norm.numpy().astype(np.float64).reshape(n_envs, num_agents)
        )
        adv = np.zeros((horizon, n_envs, num_agents), dtype=np.float64)
        tgt = np.zeros_like(adv)
        for e in range(n_envs):
            for a in range(num_agents):
                traj = Trajectory(
                    rewards=rew_buf[:, e],
                    values=val_buf[:, e, a],
                    dones=done_buf[:, e],
                    bootstrap_value=0.0 if done_buf[-1, e] else boot_raw[e, a],
                )
                adv[:, e, a], tgt[:, e, a] = compute_gae(traj, cfg.gamma, cfg.gae_lambda)

        if cfg.normalize_targets:
            value_norm.update(tgt)
        batch = _to_sequences(
            obs_buf, act_buf, logp_buf, vnorm_buf, adv, tgt, done_buf, hinit_buf,
            seq_len, value_norm,
        )
        last_losses = ppo_update(model, optimizer, batch, cfg, update_gen)
        log.num_updates += 1
        log.skipped_minibatches += last_losses["skipped"]

    return PolicyBundle(model=model, normalizer=normalizer), log


def _to_sequences(obs_buf, act_buf, logp_buf, vnorm_buf, adv, tgt, done_buf, hinit_buf,
                  seq_len, value_norm) -> SequenceBatch:
    horizon, n_envs, num_agents = act_buf.shape
    chunks = horizon // seq_len

    def stream_first(x):
        # (H, E, N, ...) -> (E, N, H, ...) -> (E*N*chunks, seq_len, ...)
        x = np.moveaxis(x, 0, 2)
        return x.reshape((n_envs * num_agents * chunks, seq_len) + x.shape[3:])

    done_agents = np.repeat(done_buf[:, :, None], num_agents, axis=2)
    dones_seq = stream_first(done_agents)
    resets = np.zeros_like(dones_seq)
    resets[:, 1:] = dones_seq[:, :-1]

    # hinit_buf is (chunks, E*N, h); sequence order above is (E, N, chunks)
    h = np.moveaxis(hinit_buf.reshape(chunks, n_envs, num_agents, -1), 0, 2)
    init_hidden = h.reshape(n_envs * num_agents * chunks, -1)

    targets_norm = value_norm.normalize(stream_first(tgt))

    return SequenceBatch(
        obs=torch.as_tensor(stream_first(obs_buf)),
        actions=torch.as_tensor(stream_first(act_buf)),
        old_log_probs=torch.as_tensor(stream_first(logp_buf)),
        old_values_norm=torch.as_tensor(stream_first(vnorm_buf)),
        advantages=torch.as_tensor(stream_first(adv).astype(np.float32)),
        targets_norm=torch.as_tensor(targets_norm.astype(np.float32)),
        resets=torch.as_tensor(resets.astype(np.float32)),
        init_hidden=torch.as_tensor(init_hidden.astype(np.float32)),
    )


# -- evaluation ----------------------------------------------------------------


class TorchPolicy:
    """Greedy or sampled rollout interface over a trained ActorCritic."""

    def __init__(self, model: ActorCritic, greedy: bool = True, seed: int = 0):
        self.model = model
        self.greedy = greedy
        self.generator = torch.Generator().manual_seed(seed)

    def initial_hidden(self, n: int):
        return self.model.initial_hidden(n)

    def act(self, obs: np.ndarray, hidden):
        with torch.no_grad():
            logits, hidden = self.model.actor_step(torch.as_tensor(obs), hidden)
            if self.greedy:
                actions = greedy_action(logits)
            else:
                actions, _ = sample_action(logits, self.generator)
        return actions.tolist(), hidden


class NoopPolicy:
    """Always takes the no-op action; reproduces a constant-rate baseline."""

    def initial_hidden(self, n: int):
        return None

    def act(self, obs, hidden):
        return [0] * obs.shape[0], None


class RandomPolicy:
    """Uniform random layerwise actions."""

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def initial_hidden(self, n: int):
        return None

    def act(self, obs, hidden):
        return self.rng.integers(0, NUM_ACTIONS, size=obs.shape[0]).tolist(), None


@dataclass
class EpisodeTrace:
    seed: int
    lrs: np.ndarray        # (T, num_layers)
    rewards: np.ndarray    # (T,)
    val_accs: np.ndarray   # (T,)
    train_losses: np.ndarray
    final_val_acc: float
    final_test_acc: float


def run_episode(policy, env, seed: int) -> EpisodeTrace:
    """Roll one full episode with no parameter updates; returns its trace."""
    obs = env.reset(seed)
    hidden = policy.initial_hidden(obs.shape[0])
    lrs, rewards, val_accs, train_losses = [], [], [], []
    while not env.done:
        actions, hidden = policy.act(obs, hidden)
        result = env.step(actions)
        obs = result.observations
        lrs.append(result.diagnostics.lrs)
        rewards.append(result.reward)
        val_accs.append(result.diagnostics.val_acc)
        train_losses.append(result.diagnostics.train_loss)
    test = evaluate_network(env.cfg.network, env.net_state, env.dataset.test_x, env.dataset.test_y)
    return EpisodeTrace(
        seed=seed,
        lrs=np.asarray(lrs, dtype=np.float64),
        rewards=np.asarray(rewards, dtype=np.float64),
        val_accs=np.asarray(val_accs, dtype=np.float64),
        train_losses=np.asarray(train_losses, dtype=np.float64),
        final_val_acc=float(val_accs[-1]),
        final_test_acc=float(test.accuracy),
    )


def evaluate_policy(bundle_or_policy, env, seeds) -> list:
    """Roll the policy through full episodes for each seed (no learning)."""
    if isinstance(bundle_or_policy, PolicyBundle):
        policy = TorchPolicy(bundle_or_policy.model)
    else:
        policy = bundle_or_policy
    return [run_episode(policy, env, int(s)) for s in seeds]


# -- serialization --------------------------------------------------------------


def save_policy(bundle: PolicyBundle, path) -> None:
    """Versioned little-endian container: JSON manifest + float32 tensor blobs."""
    model = bundle.model
    manifest = {
        "arch": model.arch,
        "meta": bundle.meta,
        "normalizer": bundle.normalizer.to_dict() if bundle.normalizer else None,
        "tensors": [
            {"name": name, "shape": list(tensor.shape)}
            for name, tensor in model.state_dict().items()
        ],
    }
    header = json.dumps(manifest, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(POLICY_MAGIC)
        fh.write(struct.pack("<HI", POLICY_VERSION, len(header)))
        fh.write(header)
        for tensor in model.state_dict().values():
            fh.write(tensor.numpy().astype("<f4").tobytes())


def load_policy(path) -> PolicyBundle:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != POLICY_MAGIC:
        raise SnapshotError("bad policy magic")
    version, header_len = struct.unpack("<HI", data[4:10])
    if version != POLICY_VERSION:
        raise SnapshotError(f"unsupported policy version {version}")
    manifest = json.loads(data[10 : 10 + header_len].decode())
    model = ActorCritic(**manifest["arch"])
    offset = 10 + header_len
    state = {}
    for entry in manifest["tensors"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        blob = data[offset : offset + 4 * count]
        if len(blob) != 4 * count:
            raise SnapshotError("truncated policy tensor data")
        offset += 4 * count
        state[entry["name"]] = torch.as_tensor(
            np.frombuffer(blob, dtype="<f4").reshape(entry["shape"]).copy()
        )
    if offset != len(data):
        raise SnapshotError("trailing bytes after policy payload")
    model.load_state_dict(state)
    normalizer = None
    if manifest["normalizer"] is not None:
        normalizer = ObsNormalizer.from_dict(manifest["normalizer"])
        normalizer.frozen = True
    return PolicyBundle(model=model, normalizer=normalizer, meta=manifest.get("meta", {}))
