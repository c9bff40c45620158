import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from layerlr import presets
from layerlr.agent import (
    ActorCritic,
    NoopPolicy,
    PPOConfig,
    SequenceBatch,
    TorchPolicy,
    Trajectory,
    ValueNormalizer,
    clipped_surrogate,
    compute_gae,
    greedy_action,
    load_policy,
    policy_forward,
    ppo_losses,
    run_episode,
    sample_action,
    save_policy,
    train,
)
from layerlr.data import load_dataset
from layerlr.env import OBS_DIM, Env, StepDiagnostics, StepResult
from layerlr.errors import ConfigError


def tiny_model(obs_dim=6, seed=0):
    torch.manual_seed(seed)
    return ActorCritic(
        obs_dim=obs_dim, hidden_sizes=(8,), gru_size=4, post_size=4, critic_sizes=(6,)
    )


class TestPolicyForward:
    def test_weight_sharing_identical_inputs_identical_logits(self):
        model = tiny_model()
        obs = np.tile(np.random.default_rng(0).normal(size=6).astype(np.float32), (2, 1))
        hidden = model.initial_hidden(2)
        logits, _ = policy_forward(model, obs, hidden)
        assert torch.equal(logits[0], logits[1])

    def test_different_depth_embedding_changes_logits(self):
        model = tiny_model()
        obs = np.zeros((2, 6), dtype=np.float32)
        obs[1, -1] = 1.0  # stand-in depth feature differs
        logits, _ = policy_forward(model, obs, model.initial_hidden(2))
        assert not torch.equal(logits[0], logits[1])

    def test_zero_head_gives_uniform_distribution(self):
        model = tiny_model()
        with torch.no_grad():
            model.head.weight.zero_()
            model.head.bias.zero_()
        logits, _ = policy_forward(model, np.zeros((1, 6), np.float32), model.initial_hidden(1))
        probs = torch.softmax(logits, dim=-1)
        assert torch.allclose(probs, torch.full_like(probs, 1.0 / 9.0))

    def test_dimension_mismatch_rejected(self):
        model = tiny_model()
        with pytest.raises(ConfigError):
            policy_forward(model, np.zeros((1, 7), np.float32), model.initial_hidden(1))

    def test_hidden_advances(self):
        model = tiny_model()
        h0 = model.initial_hidden(1)
        _, h1 = policy_forward(model, np.ones((1, 6), np.float32), h0)
        assert not torch.equal(h0, h1)


class TestSampleAction:
    def test_concentrated_logits(self):
        logits = torch.full((1, 9), -1e9)
        logits[0, 3] = 10.0
        gen = torch.Generator().manual_seed(0)
        action, log_prob = sample_action(logits, gen)
        assert action.item() == 3
        assert log_prob.item() == pytest.approx(0.0, abs=1e-6)

    def test_uniform_frequencies(self):
        logits = torch.zeros((90_000, 9))
        gen = torch.Generator().manual_seed(1)
        actions, _ = sample_action(logits, gen)
        freqs = torch.bincount(actions, minlength=9).float() / actions.numel()
        assert (freqs - 1.0 / 9.0).abs().max() < 0.01

    def test_log_prob_matches_softmax(self):
        logits = torch.randn((5, 9), dtype=torch.float64, generator=torch.Generator().manual_seed(2))
        gen = torch.Generator().manual_seed(3)
        actions, log_probs = sample_action(logits, gen)
        expected = torch.log_softmax(logits, dim=-1).gather(-1, actions[:, None]).squeeze(-1)
        assert (log_probs - expected).abs().max() < 1e-12

    def test_nonfinite_logits_rejected(self):
        logits = torch.tensor([[float("nan")] + [0.0] * 8])
        with pytest.raises(ConfigError):
            sample_action(logits, torch.Generator())

    def test_entropy_bounded_by_ln9(self):
        for seed in range(5):
            logits = torch.randn((1, 9), generator=torch.Generator().manual_seed(seed))
            log_p = torch.log_softmax(logits, -1)
            entropy = -(log_p.exp() * log_p).sum()
            assert entropy <= math.log(9) + 1e-6
        uniform = torch.zeros((1, 9))
        log_p = torch.log_softmax(uniform, -1)
        assert -(log_p.exp() * log_p).sum().item() == pytest.approx(math.log(9), abs=1e-6)


def brute_force_gae(rewards, values, dones, bootstrap, gamma, lam):
    n = len(rewards)
    ext_values = list(values) + [bootstrap]
    deltas = [
        rewards[t] + gamma * ext_values[t + 1] * (1.0 - dones[t]) - values[t] for t in range(n)
    ]
    adv = np.zeros(n)
    for t in range(n):
        total, factor = 0.0, 1.0
        for k in range(t, n):
            total += factor * deltas[k]
            if dones[k]:
                break
            factor *= gamma * lam
        adv[t] = total
    return adv, adv + np.asarray(values)


class TestGae:
    def test_undiscounted_returns(self):
        traj = Trajectory(rewards=[1, 1, 1], values=[0, 0, 0], dones=[0, 0, 1])
        adv, targets = compute_gae(traj, gamma=1.0, gae_lambda=1.0)
        assert adv.tolist() == [3.0, 2.0, 1.0]
        assert targets.tolist() == [3.0, 2.0, 1.0]

    def test_hand_summed_discounting(self):
        traj = Trajectory(rewards=[1, 1], values=[0, 0], dones=[0, 1])
        adv, targets = compute_gae(traj, gamma=0.5, gae_lambda=1.0)
        assert targets.tolist() == [1.5, 1.0]

    def test_matches_brute_force_random(self):
        rng = np.random.default_rng(0)
        rewards = rng.normal(size=20)
        values = rng.normal(size=20)
        dones = np.zeros(20)
        dones[11] = 1.0
        traj = Trajectory(rewards=rewards, values=values, dones=dones, bootstrap_value=0.37)
        adv, _ = compute_gae(traj, gamma=0.97, gae_lambda=0.9)
        exp_adv, _ = brute_force_gae(rewards, values, dones, 0.37, 0.97, 0.9)
        np.testing.assert_allclose(adv, exp_adv, atol=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(ConfigError):
            compute_gae(Trajectory(rewards=[1.0], values=[0.0, 0.0], dones=[0.0]), 0.9, 0.9)

    @settings(max_examples=50, deadline=None)
    @given(
        n=st.integers(1, 64),
        gamma=st.floats(0.1, 1.0),
        lam=st.floats(0.0, 1.0),
        seed=st.integers(0, 10_000),
    )
    def test_oracle_equivalence_property(self, n, gamma, lam, seed):
        rng = np.random.default_rng(seed)
        rewards = rng.normal(size=n)
        values = rng.normal(size=n)
        dones = (rng.random(n) < 0.1).astype(float)
        boot = float(rng.normal())
        traj = Trajectory(rewards=rewards, values=values, dones=dones, bootstrap_value=boot)
        adv, _ = compute_gae(traj, gamma, lam)
        exp_adv, _ = brute_force_gae(rewards, values, dones, boot, gamma, lam)
        np.testing.assert_allclose(adv, exp_adv, atol=1e-10)


class TestPpoLosses:
    def test_clip_blocks_gradient_on_clipped_side(self):
        for ratio_value, adv in ((1.5, 1.0), (0.5, -1.0)):
            ratio = torch.tensor([ratio_value], requires_grad=True)
            loss = clipped_surrogate(ratio, torch.tensor([adv]), clip_eps=0.2)
            loss.backward()
            assert ratio.grad.abs().item() == 0.0

    def test_clip_passes_gradient_inside_region(self):
        ratio = torch.tensor([1.1], requires_grad=True)
        loss = clipped_surrogate(ratio, torch.tensor([1.0]), clip_eps=0.2)
        loss.backward()
        assert ratio.grad.item() == pytest.approx(-1.0)

    def test_clipped_ratio_used_for_positive_advantage(self):
        ratio = torch.tensor([1.5])
        loss = clipped_surrogate(ratio, torch.tensor([2.0]), clip_eps=0.2)
        assert loss.item() == pytest.approx(-1.2 * 2.0)

    def _batch(self, model, n_seq=4, seq_len=8, seed=0, dtype=torch.float64):
        gen = torch.Generator().manual_seed(seed)
        obs = torch.randn((n_seq, seq_len, model.obs_dim), generator=gen, dtype=dtype)
        actions = torch.randint(0, 9, (n_seq, seq_len), generator=gen)
        with torch.no_grad():
            logits = model.actor_sequence(
                obs, model.initial_hidden(n_seq).to(dtype), torch.zeros(n_seq, seq_len, dtype=dtype)
            )
            old_log_probs = torch.log_softmax(logits, -1).gather(-1, actions[..., None]).squeeze(-1)
        # perturb so ratios differ from 1
        old_log_probs = old_log_probs + 0.05 * torch.randn(old_log_probs.shape, generator=gen, dtype=dtype)
        return SequenceBatch(
            obs=obs,
            actions=actions,
            old_log_probs=old_log_probs,
            old_values_norm=torch.randn((n_seq, seq_len), generator=gen, dtype=dtype),
            advantages=torch.randn((n_seq, seq_len), generator=gen, dtype=dtype),
            targets_norm=torch.randn((n_seq, seq_len), generator=gen, dtype=dtype),
            resets=torch.zeros((n_seq, seq_len), dtype=dtype),
            init_hidden=torch.zeros((n_seq, model.gru_size), dtype=dtype),
        )

    def test_equal_advantages_zero_policy_gradient(self):
        model = tiny_model().double()
        batch = self._batch(model)
        batch = SequenceBatch(
            batch.obs, batch.actions, batch.old_log_probs, batch.old_values_norm,
            torch.full_like(batch.advantages, 0.7), batch.targets_norm, batch.resets,
            batch.init_hidden,
        )
        cfg = PPOConfig(num_executors=1, total_timesteps=1)
        policy_loss, _, _ = ppo_losses(model, batch, cfg)
        policy_loss.backward()
        actor_grads = [p.grad for name, p in model.named_parameters()
                       if not name.startswith("critic") and p.grad is not None]
        assert max(g.abs().max().item() for g in actor_grads) < 1e-9

    def test_tiny_policy_gradient_matches_finite_differences(self):
        model = tiny_model().double()
        total = sum(p.numel() for p in model.parameters())
        assert total <= 500
        batch = self._batch(model)
        cfg = PPOConfig(num_executors=1, total_timesteps=1)

        def total_loss():
            policy_loss, value_loss, entropy = ppo_losses(model, batch, cfg)
            return policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

        model.zero_grad()
        total_loss().backward()
        h = 1e-6
        for name, param in model.named_parameters():
            flat = param.data.view(-1)
            grad = param.grad.view(-1)
            idx = torch.arange(0, flat.numel(), max(1, flat.numel() // 5))
            for j in idx.tolist():
                orig = flat[j].item()
                flat[j] = orig + h
                lp = total_loss().item()
                flat[j] = orig - h
                lm = total_loss().item()
                flat[j] = orig
                numeric = (lp - lm) / (2 * h)
                denom = max(abs(numeric), abs(grad[j].item()), 1e-4)
                assert abs(numeric - grad[j].item()) / denom < 1e-3, name


class _BanditEnv:
    """Action 1 yields reward 1, everything else 0; fixed observation."""

    num_agents = 1
    episode_length = 16

    def __init__(self, obs_dim=6):
        self.obs = np.ones((1, obs_dim), dtype=np.float32)
        self._t = 0

    def reset(self, seed):
        self._t = 0
        return self.obs

    @property
    def done(self):
        return self._t >= self.episode_length

    def step(self, actions):
        self._t += 1
        reward = 1.0 if actions[0] == 1 else 0.0
        diag = StepDiagnostics(
            action_return=reward, noop_return=None, lrs=(0.0,),
            train_loss=0.0, train_acc=0.0, val_loss=0.0, val_acc=reward,
            batch_indices=np.zeros((1, 1), dtype=np.int64),
        )
        return StepResult(
            observations=self.obs, reward=reward, done=self.done, diagnostics=diag
        )


class TestTraining:
    def test_smoke_run_step_accounting(self):
        cfg = PPOConfig(
            num_executors=2, total_timesteps=200, rollout_horizon=16,
            update_epochs=2, num_minibatches=2,
        )
        bundle, log = train(lambda norm: _BanditEnv(), cfg, seed=0)
        rounds = math.ceil(200 / (16 * 2))
        assert log.total_env_steps == rounds * 16 * 2
        assert log.num_updates == rounds
        # 16-step episodes over 224 steps per env -> 14 episodes per env
        assert len(log.rows) == 2 * (log.total_env_steps // 2 // 16)

    def test_bandit_concentrates_on_rewarding_action(self):
        cfg = presets.desk_ppo(total_timesteps=5000)
        bundle, log = train(lambda norm: _BanditEnv(), cfg, seed=1)
        env = _BanditEnv()
        with torch.no_grad():
            logits, _ = bundle.model.actor_step(
                torch.as_tensor(env.obs), bundle.model.initial_hidden(1)
            )
            prob = torch.softmax(logits, dim=-1)[0, 1].item()
        assert prob >= 0.9

    def test_fixed_seed_reproduces_training_log(self):
        cfg = PPOConfig(num_executors=2, total_timesteps=128, rollout_horizon=16)
        _, log_a = train(lambda norm: _BanditEnv(), cfg, seed=5)
        _, log_b = train(lambda norm: _BanditEnv(), cfg, seed=5)
        assert log_a.rows == log_b.rows

    def test_csv_columns(self, tmp_path):
        cfg = PPOConfig(num_executors=1, total_timesteps=32, rollout_horizon=16)
        _, log = train(lambda norm: _BanditEnv(), cfg, seed=0)
        path = tmp_path / "log.csv"
        log.write_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "timestep,episode,mean_reward,mean_val_acc,policy_loss,value_loss,entropy"


class TestEvaluationPolicies:
    @pytest.fixture(scope="class")
    def small_env(self):
        cfg = presets.mlp2_env(tau=3, episode_epochs=0.03)
        ds = load_dataset(cfg.dataset)
        from layerlr.harness import eval_env_config

        return Env(eval_env_config(cfg, lr=0.001, wd=0.01), dataset=ds)

    def test_rollout_never_mutates_params(self, small_env):
        model = ActorCritic()
        before = {k: v.clone() for k, v in model.state_dict().items()}
        run_episode(TorchPolicy(model, greedy=True), small_env, seed=0)
        after = model.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)

    def test_greedy_is_argmax(self):
        logits = torch.tensor([[0.0, 3.0, -1.0, 0, 0, 0, 0, 0, 0]])
        assert greedy_action(logits).item() == 1

    def test_noop_policy_keeps_lrs(self, small_env):
        trace = run_episode(NoopPolicy(), small_env, seed=3)
        assert np.all(trace.lrs == trace.lrs[0, 0])

    def test_save_load_round_trip(self, tmp_path):
        model = tiny_model(obs_dim=OBS_DIM)
        from layerlr.env import ObsNormalizer

        norm = ObsNormalizer()
        norm.update(np.random.default_rng(0).normal(size=(10, OBS_DIM)))
        from layerlr.agent import PolicyBundle

        bundle = PolicyBundle(model=model, normalizer=norm, meta={"ablation": "full"})
        path = tmp_path / "p.bin"
        save_policy(bundle, path)
        loaded = load_policy(path)
        for k, v in model.state_dict().items():
            assert torch.equal(loaded.model.state_dict()[k], v)
        assert loaded.meta["ablation"] == "full"
        assert loaded.normalizer.frozen
        np.testing.assert_array_equal(loaded.normalizer.mean, norm.mean)


class TestValueNormalizer:
    def test_tracks_mean_std(self):
        vn = ValueNormalizer()
        data = np.random.default_rng(0).normal(size=500) * 4.0 + 2.0
        for chunk in np.array_split(data, 10):
            vn.update(chunk)
        assert vn.mean == pytest.approx(data.mean(), abs=0.05)
        assert vn.std == pytest.approx(data.std(), rel=0.05)

    def test_disabled_is_identity(self):
        vn = ValueNormalizer(enabled=False)
        vn.update(np.array([100.0, 200.0]))
        assert vn.normalize(5.0) == 5.0
        assert vn.denormalize(5.0) == 5.0
