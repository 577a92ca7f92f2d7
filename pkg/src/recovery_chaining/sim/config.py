"""Task configuration: geometry, sampling ranges, thresholds.

Configurations are plain dataclasses; :func:`load_config` reads a JSON object
whose keys are field names (``task`` is required, everything else overrides the
per-task default).  ``TaskConfig.hash()`` is written into failure datasets so
that records are never replayed against different geometry.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .types import ConfigError, Task


@dataclass(frozen=True)
class TaskConfig:
    task: Task
    horizon: int = 1000
    delta: float = 0.02
    skill_max_steps: int = 60
    noise_sigma: tuple[float, float] = (0.0, 0.0)

    # PickPlace2D (top view, a = x, b = y)
    bin_interior: tuple[float, float] = (0.38, 0.20)
    wall_thickness: float = 0.01
    source_bin_center: tuple[float, float] = (0.25, 0.25)
    target_bin_center: tuple[float, float] = (0.75, 0.25)
    object_side: float = 0.04
    finger_span: float = 0.10
    finger_width: float = 0.02
    finger_thickness: float = 0.01
    home_offset: float = 0.06
    object_clearance_from_home: float = 0.09
    wall_margin: float = 0.0075

    # Shelf2D / ClutteredShelf2D (side view, a = y, b = z)
    hand_size: tuple[float, float] = (0.02, 0.02)
    hand_start: tuple[float, float] = (0.15, 0.35)
    table_extent: tuple[float, float] = (0.0, 0.40)
    box_width_range: tuple[float, float] = (0.06, 0.08)
    box_height_range: tuple[float, float] = (0.08, 0.10)
    box_position_range: tuple[float, float] = (0.10, 0.20)
    shelf_front_range: tuple[float, float] = (0.45, 0.55)
    shelf_depth: float = 0.20
    board_thickness: float = 0.02
    floor_top_range: tuple[float, float] = (0.20, 0.26)
    opening_clearance_range: tuple[float, float] = (0.07, 0.09)
    preplace_gap: float = 0.03
    place_clearance: float = 0.005
    lift_clearance: float = 0.04
    slip_offset_threshold: float = 0.015
    slip_angle: float = 0.5
    goal_tolerance: float = 0.02
    goal_angle_tolerance: float = 0.26
    num_obstacles: int = 0
    obstacle_width_range: tuple[float, float] = (0.03, 0.05)
    obstacle_height_range: tuple[float, float] = (0.04, 0.07)
    obstacle_displacement_threshold: float = 0.01
    obstacle_rotation_threshold: float = 0.2

    workspace: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 0.5)

    @staticmethod
    def default(task: Task | str) -> "TaskConfig":
        task = Task(task)
        if task is Task.PICK_PLACE:
            return TaskConfig(task=task)
        if task is Task.SHELF:
            return TaskConfig(task=task, noise_sigma=(0.01, 0.02), workspace=(0.0, 1.0, -0.05, 0.8))
        return TaskConfig(
            task=task,
            noise_sigma=(0.01, 0.02),
            workspace=(0.0, 1.0, -0.05, 0.8),
            shelf_depth=0.30,
            num_obstacles=2,
            opening_clearance_range=(0.10, 0.12),
        )

    def replace(self, **changes: Any) -> "TaskConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        if self.horizon <= 0 or self.delta <= 0 or self.skill_max_steps <= 0:
            raise ConfigError("horizon, delta and skill_max_steps must be positive")
        if self.task is Task.PICK_PLACE:
            half_b = 0.5 * self.bin_interior[1]
            reach_b = half_b - 0.5 * self.object_side - self.wall_margin
            if reach_b <= 0:
                raise ConfigError("object cannot fit in the source bin with this wall margin")
            a_lo = self.home_offset + self.object_clearance_from_home
            a_hi = self.bin_interior[0] - 0.5 * self.object_side - self.wall_margin
            if a_hi <= a_lo:
                raise ConfigError("object sampling range along a is empty")
            if self.finger_span / 2 - self.finger_thickness <= self.object_side / 2:
                raise ConfigError("finger opening narrower than the object")
        else:
            if self.box_width_range[0] <= 0 or self.box_height_range[0] <= 0:
                raise ConfigError("box dimensions must be positive")
            free = self.shelf_depth - self.num_obstacles * self.obstacle_width_range[1]
            if free < self.box_width_range[1] + 0.02:
                raise ConfigError("shelf too shallow for the box and obstacles")
            if self.box_position_range[1] + self.box_width_range[1] / 2 > self.table_extent[1]:
                raise ConfigError("box sampling range leaves the table")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["task"] = self.task.value
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def from_dict(d: dict) -> "TaskConfig":
        if "task" not in d:
            raise ConfigError("configuration needs a 'task' key")
        base = TaskConfig.default(d["task"])
        names = {f.name for f in dataclasses.fields(TaskConfig)}
        changes = {}
        for k, v in d.items():
            if k == "task":
                continue
            if k not in names:
                raise ConfigError(f"unknown configuration key {k!r}")
            changes[k] = tuple(v) if isinstance(v, list) else v
        cfg = base.replace(**changes)
        cfg.validate()
        return cfg


def load_config(path: str | Path) -> TaskConfig:
    with open(path) as fh:
        return TaskConfig.from_dict(json.load(fh))

