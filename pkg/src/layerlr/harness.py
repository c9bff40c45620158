"""Experiment orchestration: training runs, evaluation grids, baselines,
ablations, aggregation into result tables, and curve emission.

Grid cells are independent jobs (any execution order produces identical
artifacts); they run sequentially here. Episode seeds depend only on
(master seed, seed index), so every method sees identical network
initializations and minibatch streams, and any single cell can be
reproduced in isolation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .agent import (
    EpisodeTrace,
    NoopPolicy,
    PolicyBundle,
    RandomPolicy,
    TorchPolicy,
    load_policy,
    run_episode,
    save_policy,
    train,
)
from .config import ExperimentConfig, save_experiment_config
from .data import load_dataset
from .env import Env, EnvConfig, ObsNormalizer
from .errors import AggregationError, ConfigError
from .nets import evaluate as evaluate_network
from .schedules import ScheduleSpec, lr_at, write_schedule_csv

TRACE_SUBDIR = "traces"
CURVE_SUBDIR = "curves"
RESULTS_FILE = "results.csv"


def episode_seed(master_seed: int, seed_index: int) -> int:
    """Cell-independent episode seed: same index => same init and batches."""
    return int(np.random.SeedSequence([master_seed, seed_index]).generate_state(1, np.uint64)[0] >> 1)


# -- result tables ---------------------------------------------------------------


@dataclass
class ResultRow:
    method: str
    lr: object          # float, or "average" for the per-method row average
    weight_decay: float
    mean_acc: float     # percent
    std_acc: float      # percent, one standard deviation over seeds
    n_seeds: int
    best: int = 0       # 1 when largest mean in its (lr, weight_decay) column


@dataclass
class ResultTable:
    rows: list

    COLUMNS = ("method", "lr", "weight_decay", "mean_acc", "std_acc", "n_seeds", "best")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.rows:
                writer.writerow([
                    row.method,
                    row.lr if isinstance(row.lr, str) else repr(row.lr),
                    repr(row.weight_decay),
                    repr(row.mean_acc),
                    repr(row.std_acc),
                    row.n_seeds,
                    row.best,
                ])

    def cell(self, method, lr, weight_decay) -> ResultRow:
        for row in self.rows:
            if row.method == method and row.lr == lr and row.weight_decay == weight_decay:
                return row
        raise KeyError((method, lr, weight_decay))


def format_mean_std(mean: float, std: float) -> str:
    return f"{mean:.2f} ± {std:.2f}"


def aggregate(cells: dict, expected_seeds: int) -> ResultTable:
    """cells maps (method, lr, weight_decay) -> list of accuracy percents."""
    for key, values in cells.items():
        if len(values) != expected_seeds:
            raise AggregationError(
                f"cell {key} has {len(values)} of {expected_seeds} seed results"
            )
    rows = []
    methods = sorted({m for m, _, _ in cells})
    wds = sorted({w for _, _, w in cells}, reverse=True)
    for method in methods:
        for wd in wds:
            lrs = sorted({lr for m, lr, w in cells if m == method and w == wd})
            means = []
            for lr in lrs:
                values = cells[(method, lr, wd)]
                mean = float(np.mean(values))
                std = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
                means.append(mean)
                rows.append(ResultRow(method, lr, wd, mean, std, len(values)))
            if means:
                rows.append(
                    ResultRow(method, "average", wd, float(np.mean(means)), 0.0, expected_seeds)
                )
    # mark the largest mean per (lr, weight_decay) column
    for wd in wds:
        for lr in {r.lr for r in rows if r.weight_decay == wd}:
            column = [r for r in rows if r.lr == lr and r.weight_decay == wd]
            best = max(column, key=lambda r: r.mean_acc)
            best.best = 1
    return ResultTable(rows=rows)


# -- traces ---------------------------------------------------------------------


def trace_filename(method: str, lr: float, wd: float, seed_index: int) -> str:
    return f"{method}_lr{lr:g}_wd{wd:g}_seed{seed_index}.csv"


def write_trace_csv(trace: EpisodeTrace, path) -> None:
    num_layers = trace.lrs.shape[1] if trace.lrs.size else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t"] + [f"lr_{i}" for i in range(num_layers)] + ["train_loss", "val_acc", "reward"]
        )
        for t in range(trace.lrs.shape[0]):
            writer.writerow(
                [t + 1]
                + [repr(float(v)) for v in trace.lrs[t]]
                + [repr(float(trace.train_losses[t])), repr(float(trace.val_accs[t])),
                   repr(float(trace.rewards[t]))]
            )


def read_trace_csv(path):
    with open(path) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, rows


def emit_plots(trace_paths, out_dir, svg: bool = False) -> list:
    """Split episode traces into two-column curve CSVs (per-layer lr, val acc)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for trace_path in trace_paths:
        trace_path = Path(trace_path)
        header, rows = read_trace_csv(trace_path)
        stem = trace_path.stem
        lr_cols = [i for i, name in enumerate(header) if name.startswith("lr_")]
        acc_col = header.index("val_acc")
        series = {}
        for i in lr_cols:
            series[f"{stem}_{header[i]}"] = [(row[0], row[i]) for row in rows]
        series[f"{stem}_val_acc"] = [(row[0], row[acc_col]) for row in rows]
        for name, points in series.items():
            path = out_dir / f"{name}.csv"
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["step", "value"])
                for step, value in points:
                    writer.writerow([int(step), repr(value)])
            written.append(path)
        if svg:
            _render_svg(out_dir / f"{stem}.svg", header, rows, lr_cols, acc_col)
            written.append(out_dir / f"{stem}.svg")
    return written


def _render_svg(path, header, rows, lr_cols, acc_col) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, (ax_lr, ax_acc) = plt.subplots(1, 2, figsize=(9, 3.2))
    steps = [row[0] for row in rows]
    for i in lr_cols:
        ax_lr.plot(steps, [row[i] for row in rows], label=header[i])
    ax_lr.set_xlabel("timestep")
    ax_lr.set_ylabel("learning rate")
    ax_lr.legend(fontsize=7)
    ax_acc.plot(steps, [row[acc_col] for row in rows])
    ax_acc.set_xlabel("timestep")
    ax_acc.set_ylabel("validation accuracy")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# -- episode runners --------------------------------------------------------------


def run_schedule_episode(env: Env, schedule: ScheduleSpec, seed: int) -> EpisodeTrace:
    """Drive one episode with a manual schedule applied at every gradient update."""
    env.reset(seed)
    lrs, rewards, val_accs, train_losses = [], [], [], []
    override = lambda step: lr_at(schedule, min(step, schedule.total_steps))
    while not env.done:
        result = env.step(None, lr_override=override)
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


def eval_env_config(base: EnvConfig, lr: float, wd: float, ablation: str = None) -> EnvConfig:
    """Fixed initial conditions, no counterfactual branch, frozen observations."""
    return replace(
        base,
        fixed_init_lr=lr,
        fixed_init_wd=wd,
        difference_rewards=False,
        ablation=ablation if ablation is not None else base.ablation,
    )


def make_schedule(schedule_cfg: dict, base_lr: float, total_steps: int) -> ScheduleSpec:
    cfg = dict(schedule_cfg)
    kind = cfg.pop("kind")
    cfg.pop("base_lr", None)
    cfg.pop("total_steps", None)
    if "breakpoints" in cfg:
        cfg["breakpoints"] = tuple(tuple(bp) for bp in cfg["breakpoints"])
    return ScheduleSpec(kind=kind, base_lr=base_lr, total_steps=total_steps, **cfg)


# -- experiment modes --------------------------------------------------------------


def _ensure_dirs(out_dir):
    out_dir = Path(out_dir)
    (out_dir / TRACE_SUBDIR).mkdir(parents=True, exist_ok=True)
    return out_dir


def train_policy(cfg: ExperimentConfig, seed: int, out_dir, data_dir=None,
                 env_cfg: EnvConfig = None):
    """Train agents on cfg.env and persist the policy + training log."""
    out_dir = _ensure_dirs(out_dir)
    env_cfg = env_cfg if env_cfg is not None else cfg.env
    dataset = load_dataset(env_cfg.dataset, data_dir)
    normalizer = ObsNormalizer()

    def make_env(norm):
        return Env(env_cfg, dataset=dataset, normalizer=norm)

    bundle, log = train(make_env, cfg.ppo, seed, normalizer=normalizer)
    bundle.meta = {
        "ablation": env_cfg.ablation,
        "normalize_observations": env_cfg.normalize_observations,
    }
    policy_path = out_dir / "policy.bin"
    save_policy(bundle, policy_path)
    log.write_csv(out_dir / "training_log.csv")
    return bundle, log, policy_path


def _resolve_policy(cfg: ExperimentConfig, seed: int):
    """Returns (label, bundle_or_None, policy_factory(cell_seed) -> policy)."""
    spec = cfg.policy or "noop"
    if spec == "noop":
        return "noop", None, lambda cell_seed: NoopPolicy()
    if spec == "random":
        return "random", None, lambda cell_seed: RandomPolicy(seed=cell_seed)
    bundle = load_policy(spec)
    greedy = not cfg.sample_actions

    def factory(cell_seed):
        return TorchPolicy(bundle.model, greedy=greedy, seed=cell_seed)

    return "policy", bundle, factory


def evaluate_grid(cfg: ExperimentConfig, seed: int, out_dir, data_dir=None,
                  bundle: PolicyBundle = None, method: str = None,
                  policy_factory=None) -> ResultTable:
    """Roll policies over the (lr, wd, seed) grid; write traces and results."""
    out_dir = _ensure_dirs(out_dir)
    if policy_factory is None:
        label, bundle, policy_factory = _resolve_policy(cfg, seed)
        method = method or cfg.method or label
    method = method or cfg.method or "policy"
    ablation = bundle.meta.get("ablation") if bundle else None
    if bundle is not None and bundle.normalizer is not None:
        bundle.normalizer.frozen = True
    dataset = load_dataset(cfg.eval_env.dataset, data_dir)

    cells = {}
    for wd in cfg.eval_wds:
        for lr in cfg.eval_lrs:
            env_cfg = eval_env_config(cfg.eval_env, lr, wd, ablation)
            for idx in range(cfg.seeds):
                cell_seed = episode_seed(seed, idx)
                normalizer = bundle.normalizer if bundle else None
                env = Env(env_cfg, dataset=dataset, normalizer=normalizer)
                trace = run_episode(policy_factory(cell_seed), env, cell_seed)
                write_trace_csv(
                    trace, out_dir / TRACE_SUBDIR / trace_filename(method, lr, wd, idx)
                )
                cells.setdefault((method, lr, wd), []).append(trace.final_test_acc * 100.0)
    table = aggregate(cells, cfg.seeds)
    table.write_csv(out_dir / RESULTS_FILE)
    return table


def baseline_grid(cfg: ExperimentConfig, seed: int, out_dir, data_dir=None) -> ResultTable:
    """Manual-schedule baselines over the same grid."""
    if not cfg.schedule:
        raise ConfigError("baseline mode needs a schedule config")
    out_dir = _ensure_dirs(out_dir)
    (out_dir / CURVE_SUBDIR).mkdir(parents=True, exist_ok=True)
    method = cfg.method or cfg.schedule["kind"]
    dataset = load_dataset(cfg.eval_env.dataset, data_dir)
    cells = {}
    for wd in cfg.eval_wds:
        for lr in cfg.eval_lrs:
            env_cfg = eval_env_config(cfg.eval_env, lr, wd)
            schedule = None
            for idx in range(cfg.seeds):
                cell_seed = episode_seed(seed, idx)
                env = Env(env_cfg, dataset=dataset)
                schedule = make_schedule(
                    cfg.schedule, lr, env.episode_length * env_cfg.tau
                )
                trace = run_schedule_episode(env, schedule, cell_seed)
                write_trace_csv(
                    trace, out_dir / TRACE_SUBDIR / trace_filename(method, lr, wd, idx)
                )
                cells.setdefault((method, lr, wd), []).append(trace.final_test_acc * 100.0)
            stride = max(1, schedule.total_steps // 2000)
            write_schedule_csv(
                schedule, stride, out_dir / CURVE_SUBDIR / f"schedule_{method}_lr{lr:g}.csv"
            )
    table = aggregate(cells, cfg.seeds)
    table.write_csv(out_dir / RESULTS_FILE)
    return table


def run_experiment(cfg: ExperimentConfig, seed: int, out_dir, data_dir=None) -> dict:
    """Execute one experiment mode; returns a dict of artifact paths/objects."""
    out_dir = _ensure_dirs(out_dir)
    save_experiment_config(cfg, out_dir / "config.json")
    if cfg.mode == "train":
        bundle, log, policy_path = train_policy(cfg, seed, out_dir, data_dir)
        return {"policy": policy_path, "training_log": out_dir / "training_log.csv",
                "episodes": len(log.rows)}
    if cfg.mode == "evaluate":
        table = evaluate_grid(cfg, seed, out_dir, data_dir)
        return {"results": out_dir / RESULTS_FILE, "table": table}
    if cfg.mode == "baseline":
        table = baseline_grid(cfg, seed, out_dir, data_dir)
        return {"results": out_dir / RESULTS_FILE, "table": table}
    if cfg.mode == "ablate":
        env_cfg = replace(cfg.env, ablation=cfg.ablation)
        bundle, log, policy_path = train_policy(cfg, seed, out_dir, data_dir, env_cfg=env_cfg)
        method = cfg.method or f"ablation_{cfg.ablation}"
        table = evaluate_grid(
            cfg, seed, out_dir, data_dir, bundle=bundle, method=method,
            policy_factory=lambda cell_seed: TorchPolicy(
                bundle.model, greedy=not cfg.sample_actions, seed=cell_seed
            ),
        )
        return {"policy": policy_path, "results": out_dir / RESULTS_FILE, "table": table}
    if cfg.mode == "plot":
        traces = sorted((out_dir / TRACE_SUBDIR).glob("*.csv"))
        written = emit_plots(traces, out_dir / CURVE_SUBDIR)
        return {"curves": written}
    raise ConfigError(f"unknown mode {cfg.mode!r}")
