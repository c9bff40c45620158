#!/usr/bin/env python3
"""Desk-scale learning-signal study: train layerwise agents for a small
timestep budget, then compare against the constant-rate and random-agent
baselines from a low initial learning rate (the warm-up regime, where
feedback control has the most to offer).

Usage: python scripts/run_learning_signal.py [--timesteps 2000] [--seeds 3]
"""

import argparse
import time

import numpy as np

from layerlr import presets
from layerlr.agent import NoopPolicy, RandomPolicy, TorchPolicy, run_episode, train
from layerlr.data import load_dataset
from layerlr.env import Env
from layerlr.harness import episode_seed, eval_env_config, format_mean_std


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--timesteps", type=int, default=2000)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--eval-lr", type=float, default=0.0001)
    parser.add_argument("--eval-wd", type=float, default=0.01)
    parser.add_argument("--master-seed", type=int, default=123)
    args = parser.parse_args()

    base = presets.mlp2_env(tau=20, episode_epochs=2.0, separation=2.4)
    ds = load_dataset(base.dataset)
    eval_cfg = eval_env_config(base, lr=args.eval_lr, wd=args.eval_wd)

    def evaluate(policy, idx, normalizer=None):
        seed = episode_seed(args.master_seed, idx)
        env = Env(eval_cfg, dataset=ds, normalizer=normalizer)
        trace = run_episode(policy, env, seed)
        return trace.final_val_acc * 100.0

    rows = {}
    rows["constant"] = [evaluate(NoopPolicy(), i) for i in range(args.seeds)]
    rows["random"] = [
        evaluate(RandomPolicy(seed=episode_seed(args.master_seed, i)), i)
        for i in range(args.seeds)
    ]

    trained = []
    for train_seed in range(args.seeds):
        t0 = time.time()
        ppo = presets.desk_ppo(total_timesteps=args.timesteps)

        def make_env(norm):
            return Env(base, dataset=ds, normalizer=norm)

        bundle, log = train(make_env, ppo, seed=train_seed)
        bundle.normalizer.frozen = True
        policy = TorchPolicy(
            bundle.model, greedy=True, seed=episode_seed(args.master_seed, train_seed)
        )
        acc = evaluate(policy, train_seed, normalizer=bundle.normalizer)
        trained.append(acc)
        print(
            f"seed {train_seed}: trained {log.total_env_steps} steps "
            f"({log.num_updates} updates) in {time.time() - t0:.0f}s -> "
            f"final val acc {acc:.2f}%"
        )
    rows["layerwise agents"] = trained

    print(f"\nfinal validation accuracy at init lr {args.eval_lr}, wd {args.eval_wd}:")
    for method, accs in rows.items():
        mean = float(np.mean(accs))
        std = float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0
        print(f"  {method:18s} {format_mean_std(mean, std)}   (seeds: {np.round(accs, 2)})")


if __name__ == "__main__":
    main()
