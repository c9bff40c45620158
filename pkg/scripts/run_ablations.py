#!/usr/bin/env python3
"""Observation-ablation study at desk scale: train the full agents plus the
three ablated variants under one timestep budget, then evaluate each across
the initial-learning-rate grid.

Usage: python scripts/run_ablations.py [--timesteps 2000] [--seeds 3]
"""

import argparse
import time
from dataclasses import replace

import numpy as np

from layerlr import presets
from layerlr.agent import TorchPolicy, run_episode, train
from layerlr.data import load_dataset
from layerlr.env import ABLATION_MODES, Env
from layerlr.harness import episode_seed, eval_env_config

GRID = (0.0001, 0.0003, 0.001, 0.003, 0.01)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--timesteps", type=int, default=2000)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--eval-wd", type=float, default=0.01)
    parser.add_argument("--master-seed", type=int, default=123)
    args = parser.parse_args()

    base = presets.mlp2_env(tau=20, episode_epochs=2.0, separation=2.4)
    ds = load_dataset(base.dataset)

    print(f"{'variant':22s} " + " ".join(f"{lr:>8g}" for lr in GRID) + "   average")
    for ablation in ABLATION_MODES:
        t0 = time.time()
        per_seed = []
        for train_seed in range(args.seeds):
            env_cfg = replace(base, ablation=ablation)
            ppo = presets.desk_ppo(total_timesteps=args.timesteps)

            def make_env(norm):
                return Env(env_cfg, dataset=ds, normalizer=norm)

            bundle, _ = train(make_env, ppo, seed=train_seed)
            bundle.normalizer.frozen = True
            seed = episode_seed(args.master_seed, train_seed)
            cells = []
            for lr in GRID:
                cfg = eval_env_config(base, lr=lr, wd=args.eval_wd, ablation=ablation)
                env = Env(cfg, dataset=ds, normalizer=bundle.normalizer)
                policy = TorchPolicy(bundle.model, greedy=True, seed=seed)
                cells.append(run_episode(policy, env, seed).final_test_acc * 100)
            per_seed.append(cells)
        mean_cells = np.mean(per_seed, axis=0)
        print(
            f"{ablation:22s} "
            + " ".join(f"{v:8.2f}" for v in mean_cells)
            + f"  {mean_cells.mean():8.2f}   ({time.time() - t0:.0f}s)"
        )


if __name__ == "__main__":
    main()
