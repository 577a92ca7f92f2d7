from __future__ import annotations

import dataclasses
from abc import ABC, abstractmethod

import numpy as np

from ..geometry import Vec2
from .config import TaskConfig
from .types import (ContractViolation, FailureKind, Gripper, Observation, Primitive,
                    StepOutcome, Terminal, WorldState)

NOISE_STREAM = 1
SCENE_STREAM = 0
SEED_MASK = (1 << 64) - 1


def scene_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & SEED_MASK, SCENE_STREAM])


def noise_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & SEED_MASK, NOISE_STREAM])


def sample_noise(config: TaskConfig, seed: int) -> Vec2:
    """Per-episode observation offset, frozen for the whole episode."""
    rng = noise_rng(seed)
    sa, sb = config.noise_sigma
    na = float(rng.normal(0.0, sa)) if sa > 0 else 0.0
    nb = float(rng.normal(0.0, sb)) if sb > 0 else 0.0
    return Vec2(na, nb)


class TaskEnv(ABC):
    """Deterministic kinematic task.

    ``step`` is a pure function of (state, action); the environment object only
    carries the configuration.
    """

    primitives: tuple[Primitive, ...] = tuple(Primitive)

    def __init__(self, config: TaskConfig):
        config.validate()
        self.config = config

    @property
    def task(self):
        return self.config.task

    @abstractmethod
    def initial_state(self, seed: int) -> WorldState:
        ...

    @abstractmethod
    def observe(self, state: WorldState) -> Observation:
        ...

    @abstractmethod
    def f_goal(self, state: WorldState) -> int:
        ...

    @abstractmethod
    def _transition(self, state: WorldState, action) -> tuple[WorldState, FailureKind | None]:
        ...

    @abstractmethod
    def is_valid(self, state: WorldState) -> bool:
        """True when nothing interpenetrates; used to reject perturbed states."""
        ...

    def reset(self, seed: int) -> tuple[WorldState, Observation]:
        state = self.initial_state(seed)
        return state, self.observe(state)

    def step(self, state: WorldState, action) -> StepOutcome:
        if isinstance(action, Primitive):
            if action not in self.primitives:
                raise ContractViolation(f"{action.name} is not available in {self.task.value}")
        elif not isinstance(action, Gripper):
            raise ContractViolation(f"unknown action {action!r}")
        # A detected failure leaves the world in its last valid pose, which is
        # where recovery starts, so only goal states and spent horizons absorb.
        if state.step_count >= self.config.horizon:
            raise ContractViolation("horizon exhausted")
        if self.f_goal(state):
            raise ContractViolation("goal already reached")
        nxt, failure = self._transition(state, action)
        nxt = dataclasses.replace(nxt, step_count=state.step_count + 1)
        obs = self.observe(nxt)
        if failure is not None:
            return StepOutcome(nxt, obs, Terminal.FAILURE, failure)
        if self.f_goal(nxt):
            return StepOutcome(nxt, obs, Terminal.GOAL)
        return StepOutcome(nxt, obs)

    def in_workspace(self, p) -> bool:
        a0, a1, b0, b1 = self.config.workspace
        return a0 <= p[0] <= a1 and b0 <= p[1] <= b1
