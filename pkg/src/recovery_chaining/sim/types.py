"""State, observation and action types shared by the 2D task simulators."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..geometry import Rect, Vec2


class Task(str, enum.Enum):
    PICK_PLACE = "PickPlace2D"
    SHELF = "Shelf2D"
    CLUTTERED_SHELF = "ClutteredShelf2D"

    @property
    def is_shelf(self) -> bool:
        return self is not Task.PICK_PLACE


class Primitive(enum.IntEnum):
    """Motion primitives available to learned policies."""

    TRANSLATE_PLUS_A = 0
    TRANSLATE_MINUS_A = 1
    TRANSLATE_PLUS_B = 2
    TRANSLATE_MINUS_B = 3
    ROTATE_PLUS = 4
    ROTATE_MINUS = 5

    @property
    def is_rotation(self) -> bool:
        return self >= Primitive.ROTATE_PLUS

    def direction(self) -> tuple[float, float]:
        return _DIRECTIONS[self]


_DIRECTIONS = {
    Primitive.TRANSLATE_PLUS_A: (1.0, 0.0),
    Primitive.TRANSLATE_MINUS_A: (-1.0, 0.0),
    Primitive.TRANSLATE_PLUS_B: (0.0, 1.0),
    Primitive.TRANSLATE_MINUS_B: (0.0, -1.0),
    Primitive.ROTATE_PLUS: (0.0, 0.0),
    Primitive.ROTATE_MINUS: (0.0, 0.0),
}


class Gripper(enum.IntEnum):
    """Skill-internal pseudo-actions; never exposed to the recovery agent."""

    CLOSE = 10
    OPEN = 11


class Terminal(str, enum.Enum):
    NONE = "None"
    GOAL = "Goal"
    FAILURE = "Failure"


class FailureKind(str, enum.Enum):
    COLLISION = "Collision"
    SLIP = "Slip"
    OBSTACLE_DISTURBED = "ObstacleDisturbed"


class ConfigError(ValueError):
    """Raised for task configurations that cannot produce a valid scene."""


class ContractViolation(RuntimeError):
    """Raised when an operation is called outside its precondition."""


@dataclass(frozen=True)
class Scene:
    """Static geometry sampled once per episode.

    ``fixed`` holds every immovable rectangle (bin walls, table, shelf boards).
    Shelf-only scalars are left at 0 for PickPlace2D.
    """

    task: Task
    fixed: tuple[Rect, ...]
    target: Vec2
    target_region: Optional[Rect] = None
    source_region: Optional[Rect] = None
    box_size: Vec2 = Vec2(0.0, 0.0)
    shelf_front: float = 0.0
    shelf_back: float = 0.0
    floor_top: float = 0.0
    ceiling_bottom: float = 0.0
    table_top: float = 0.0

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "fixed": [r.to_dict() for r in self.fixed],
            "target": list(self.target),
            "target_region": None if self.target_region is None else self.target_region.to_dict(),
            "source_region": None if self.source_region is None else self.source_region.to_dict(),
            "box_size": list(self.box_size),
            "shelf_front": self.shelf_front,
            "shelf_back": self.shelf_back,
            "floor_top": self.floor_top,
            "ceiling_bottom": self.ceiling_bottom,
            "table_top": self.table_top,
        }

    @staticmethod
    def from_dict(d: dict) -> "Scene":
        return Scene(
            task=Task(d["task"]),
            fixed=tuple(Rect.from_dict(r) for r in d["fixed"]),
            target=Vec2(*d["target"]),
            target_region=None if d["target_region"] is None else Rect.from_dict(d["target_region"]),
            source_region=None if d["source_region"] is None else Rect.from_dict(d["source_region"]),
            box_size=Vec2(*d["box_size"]),
            shelf_front=d["shelf_front"],
            shelf_back=d["shelf_back"],
            floor_top=d["floor_top"],
            ceiling_bottom=d["ceiling_bottom"],
            table_top=d["table_top"],
        )


@dataclass(frozen=True)
class WorldState:
    """Full simulator state s = (x, y).

    The latent part is ``grasp_offset``, ``object_angle_in_hand``, the true
    object pose (Shelf tasks) and ``obs_noise``; policies only ever see an
    :class:`Observation`.
    """

    ee_pose: Rect
    object_pose: Rect
    grasped: bool
    grasp_offset: Vec2
    object_angle_in_hand: float
    obstacles: tuple[Rect, ...]
    obstacles_initial: tuple[Rect, ...]
    step_count: int
    episode_seed: int
    obs_noise: Vec2
    scene: Scene

    @property
    def ee_position(self) -> Vec2:
        return self.ee_pose.center

    def to_dict(self) -> dict:
        return {
            "ee_pose": self.ee_pose.to_dict(),
            "object_pose": self.object_pose.to_dict(),
            "grasped": self.grasped,
            "grasp_offset": list(self.grasp_offset),
            "object_angle_in_hand": self.object_angle_in_hand,
            "obstacles": [r.to_dict() for r in self.obstacles],
            "obstacles_initial": [r.to_dict() for r in self.obstacles_initial],
            "step_count": self.step_count,
            "episode_seed": self.episode_seed,
            "obs_noise": list(self.obs_noise),
            "scene": self.scene.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "WorldState":
        return WorldState(
            ee_pose=Rect.from_dict(d["ee_pose"]),
            object_pose=Rect.from_dict(d["object_pose"]),
            grasped=bool(d["grasped"]),
            grasp_offset=Vec2(*d["grasp_offset"]),
            object_angle_in_hand=d["object_angle_in_hand"],
            obstacles=tuple(Rect.from_dict(r) for r in d["obstacles"]),
            obstacles_initial=tuple(Rect.from_dict(r) for r in d["obstacles_initial"]),
            step_count=int(d["step_count"]),
            episode_seed=int(d["episode_seed"]),
            obs_noise=Vec2(*d["obs_noise"]),
            scene=Scene.from_dict(d["scene"]),
        )


POS_SCALE = 10.0  # policy features are expressed in decimeters


@dataclass(frozen=True)
class Observation:
    """What the robot (and any learned policy) sees: s_hat = (x, y_hat)."""

    task: Task
    ee_position: Vec2
    ee_yaw_index: int
    observed_object_position: Vec2
    grasped: bool
    step_count: int
    horizon: int
    obstacle_positions: tuple[float, ...] = ()
    obstacle_sizes: tuple[float, ...] = ()
    scene_features: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        return {
            "task": self.task.value,
            "ee_position": list(self.ee_position),
            "ee_yaw_index": self.ee_yaw_index,
            "observed_object_position": list(self.observed_object_position),
            "grasped": self.grasped,
            "step_count": self.step_count,
            "horizon": self.horizon,
            "obstacle_positions": list(self.obstacle_positions),
            "obstacle_sizes": list(self.obstacle_sizes),
            "scene_features": list(self.scene_features),
        }

    @staticmethod
    def from_dict(d: dict) -> "Observation":
        return Observation(
            task=Task(d["task"]),
            ee_position=Vec2(*d["ee_position"]),
            ee_yaw_index=int(d["ee_yaw_index"]),
            observed_object_position=Vec2(*d["observed_object_position"]),
            grasped=bool(d["grasped"]),
            step_count=int(d["step_count"]),
            horizon=int(d["horizon"]),
            obstacle_positions=tuple(d["obstacle_positions"]),
            obstacle_sizes=tuple(d["obstacle_sizes"]),
            scene_features=tuple(d["scene_features"]),
        )

    def to_vector(self) -> np.ndarray:
        """Fixed-length float feature vector for policies and classifiers.

        Positions are scaled to decimeters and most are expressed relative
        to the end-effector so that small corrective motions are visible.
        """
        ea, eb = self.ee_position
        oa, ob = self.observed_object_position
        k = POS_SCALE
        feats = [ea * k, eb * k]
        yaw = [0.0, 0.0, 0.0, 0.0]
        yaw[self.ee_yaw_index % 4] = 1.0
        feats += yaw
        feats += [oa * k, ob * k, (oa - ea) * k, (ob - eb) * k]
        feats += [1.0 if self.grasped else 0.0, self.step_count / self.horizon]
        if self.task.is_shelf:
            ta, tb, bw, bh, front, floor, ceiling = self.scene_features
            feats += [(ta - ea) * k, (tb - eb) * k, (ta - oa) * k, (tb - ob) * k,
                      bw * k, bh * k, (front - ea) * k, (floor - eb) * k, (ceiling - eb) * k]
            for i in range(0, len(self.obstacle_positions), 2):
                pa, pb = self.obstacle_positions[i], self.obstacle_positions[i + 1]
                sa, sb = self.obstacle_sizes[i], self.obstacle_sizes[i + 1]
                feats += [(pa - ea) * k, (pb + sb - eb) * k, sa * k, sb * k]
        return np.asarray(feats, dtype=np.float64)


@dataclass(frozen=True)
class StepOutcome:
    next: WorldState
    observation: Observation
    terminal: Terminal = Terminal.NONE
    failure_kind: Optional[FailureKind] = None
    info: dict = field(default_factory=dict, compare=False)
