"""JSON (de)serialization for every config object.

All CLI entry points read one experiment JSON document; absent keys fall
back to dataclass defaults. See README for the schema.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .agent import PPOConfig
from .env import ABLATION_MODES, EnvConfig
from .errors import ConfigError
from .nets import LayerSpec, NetworkSpec
from .optim import OptimConfig

DEFAULT_EVAL_LRS = (0.0001, 0.0003, 0.001, 0.003, 0.01)
DEFAULT_EVAL_WDS = (0.1, 0.01, 0.0001)

MODES = ("train", "evaluate", "baseline", "ablate", "plot")


@dataclass
class ExperimentConfig:
    mode: str
    env: EnvConfig
    eval_env: EnvConfig = None          # defaults to env
    ppo: PPOConfig = field(default_factory=PPOConfig)
    schedule: dict = None               # baseline mode: kind + shape params
    ablation: str = "full"              # ablate mode
    eval_lrs: tuple = DEFAULT_EVAL_LRS
    eval_wds: tuple = DEFAULT_EVAL_WDS
    seeds: int = 3
    method: str = None                  # row label override
    policy: str = None                  # evaluate mode: path | "noop" | "random"
    sample_actions: bool = False        # sampled instead of greedy rollouts

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.seeds < 1:
            raise ConfigError(f"seeds must be >= 1, got {self.seeds}")
        if not self.eval_lrs or not self.eval_wds:
            raise ConfigError("evaluation grid must be nonempty")
        if self.ablation not in ABLATION_MODES:
            raise ConfigError(f"unknown ablation {self.ablation!r}")
        if self.eval_env is None:
            self.eval_env = self.env


def _filter_kwargs(cls, d: dict, what: str) -> dict:
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {what} fields: {sorted(unknown)}")
    return d


def network_spec_from_dict(d: dict) -> NetworkSpec:
    d = dict(d)
    layers = tuple(
        LayerSpec(**_filter_kwargs(LayerSpec, dict(raw), "layer")) for raw in d.pop("layers")
    )
    return NetworkSpec(
        input_shape=tuple(d.pop("input_shape")),
        num_classes=int(d.pop("num_classes")),
        layers=layers,
        **_filter_kwargs(NetworkSpec, d, "network"),
    )


def env_config_from_dict(d: dict) -> EnvConfig:
    d = dict(d)
    network = network_spec_from_dict(d.pop("network"))
    dataset = dict(d.pop("dataset"))
    optim = OptimConfig(**_filter_kwargs(OptimConfig, dict(d.pop("optim", {})), "optim"))
    for key in ("lr_init_bounds", "wd_init_bounds"):
        if key in d:
            d[key] = tuple(d[key])
    return EnvConfig(
        network=network, dataset=dataset, optim=optim,
        **_filter_kwargs(EnvConfig, d, "env"),
    )


def env_config_to_dict(cfg: EnvConfig) -> dict:
    d = asdict(cfg)
    d["network"] = {
        "input_shape": list(cfg.network.input_shape),
        "num_classes": cfg.network.num_classes,
        "layers": [asdict(layer) for layer in cfg.network.layers],
    }
    return d


def experiment_config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    env = env_config_from_dict(d.pop("env"))
    eval_env = d.pop("eval_env", None)
    if eval_env is not None:
        eval_env = env_config_from_dict(eval_env)
    ppo = PPOConfig(**_filter_kwargs(PPOConfig, dict(d.pop("ppo", {})), "ppo"))
    for key in ("eval_lrs", "eval_wds"):
        if key in d:
            d[key] = tuple(d[key])
    return ExperimentConfig(
        mode=d.pop("mode"), env=env, eval_env=eval_env, ppo=ppo,
        **_filter_kwargs(ExperimentConfig, d, "experiment"),
    )


def experiment_config_to_dict(cfg: ExperimentConfig) -> dict:
    return {
        "mode": cfg.mode,
        "env": env_config_to_dict(cfg.env),
        "eval_env": env_config_to_dict(cfg.eval_env),
        "ppo": asdict(cfg.ppo),
        "schedule": cfg.schedule,
        "ablation": cfg.ablation,
        "eval_lrs": list(cfg.eval_lrs),
        "eval_wds": list(cfg.eval_wds),
        "seeds": cfg.seeds,
        "method": cfg.method,
        "policy": cfg.policy,
        "sample_actions": cfg.sample_actions,
    }


def load_experiment_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return experiment_config_from_dict(json.load(fh))


def save_experiment_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(experiment_config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")
