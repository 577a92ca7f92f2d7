"""Deterministic 2D kinematic analogs of the pick-place and shelf tasks."""

from .base import TaskEnv, sample_noise
from .config import TaskConfig, load_config
from .pickplace import PickPlaceEnv
from .shelf import ClutteredShelfEnv, ShelfEnv
from .types import (ConfigError, ContractViolation, FailureKind, Gripper, Observation,
                    Primitive, Scene, StepOutcome, Task, Terminal, WorldState)


def make_env(config: TaskConfig | str | Task) -> TaskEnv:
    if not isinstance(config, TaskConfig):
        config = TaskConfig.default(config)
    if config.task is Task.PICK_PLACE:
        return PickPlaceEnv(config)
    if config.task is Task.SHELF:
        return ShelfEnv(config)
    return ClutteredShelfEnv(config)


__all__ = [
    "ClutteredShelfEnv", "ConfigError", "ContractViolation", "FailureKind", "Gripper",
    "Observation", "PickPlaceEnv", "Primitive", "Scene", "ShelfEnv", "StepOutcome", "Task",
    "TaskConfig", "TaskEnv", "Terminal", "WorldState", "load_config", "make_env", "sample_noise",
]
