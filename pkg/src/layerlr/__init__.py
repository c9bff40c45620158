"""Layerwise learning-rate control for neural-network training via
cooperative multi-agent RL: one agent per trainable layer observes the
layer's training dynamics and nudges its learning rate as training runs.
"""

__version__ = "0.1.0"

from .env import Env, EnvConfig, NUM_ACTIONS, OBS_DIM  # noqa: F401
from .nets import LayerSpec, NetworkSpec  # noqa: F401
from .optim import OptimConfig  # noqa: F401
from .schedules import ScheduleSpec, lr_at  # noqa: F401
