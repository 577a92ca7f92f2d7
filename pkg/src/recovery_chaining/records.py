from __future__ import annotations

from dataclasses import dataclass

from .sim.types import FailureKind, Observation, WorldState


@dataclass(frozen=True)
class FailureRecord:
    """A detected nominal failure: the true state plus what the robot saw."""

    world_state: WorldState
    observation: Observation
    failure_kind: FailureKind
    plan_skill_index: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "failure_kind": self.failure_kind.value,
            "plan_skill_index": self.plan_skill_index,
            "observation": self.observation.to_dict(),
            "world_state": self.world_state.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "FailureRecord":
        return FailureRecord(
            world_state=WorldState.from_dict(d["world_state"]),
            observation=Observation.from_dict(d["observation"]),
            failure_kind=FailureKind(d["failure_kind"]),
            plan_skill_index=int(d["plan_skill_index"]),
            seed=int(d["seed"]),
        )
