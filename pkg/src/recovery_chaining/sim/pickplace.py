"""Top-view pick-and-place between two bins.

The open gripper is two finger pads at the ends of a ``finger_span`` long
footprint.  With yaw index 0 the span lies along ``b``, so an object close to
the top or bottom wall of the source bin cannot be reached without the pads
hitting the wall; turning the hand a quarter turn is one way around that.
Once grasped the object is carried above the bins, so bin walls only
constrain an empty hand.
"""

from __future__ import annotations

import dataclasses
import math

from ..geometry import Rect, Vec2, any_overlap, overlaps, quarter_turns, rotate, separation_along
from .base import TaskEnv, sample_noise, scene_rng
from .config import TaskConfig
from .types import (FailureKind, Gripper, Observation, Primitive, Scene, Task, WorldState)

EPS = 1e-9


def bin_walls(center, interior, t) -> list[Rect]:
    ca, cb = center
    ha, hb = 0.5 * interior[0], 0.5 * interior[1]
    return [
        Rect.from_bounds(ca - ha - t, ca + ha + t, cb + hb, cb + hb + t),  # top
        Rect.from_bounds(ca - ha - t, ca + ha + t, cb - hb - t, cb - hb),  # bottom
        Rect.from_bounds(ca - ha - t, ca - ha, cb - hb, cb + hb),  # left
        Rect.from_bounds(ca + ha, ca + ha + t, cb - hb, cb + hb),  # right
    ]


class PickPlaceEnv(TaskEnv):
    def __init__(self, config: TaskConfig | None = None):
        super().__init__(config or TaskConfig.default(Task.PICK_PLACE))
        c = self.config
        self._ee_half = Vec2(0.5 * c.finger_width, 0.5 * c.finger_span)
        self._pad_half = Vec2(0.5 * c.finger_width, 0.5 * c.finger_thickness)
        self._pad_offset = 0.5 * c.finger_span - 0.5 * c.finger_thickness
        self._opening = 0.5 * c.finger_span - c.finger_thickness
        self._fixed = tuple(bin_walls(c.source_bin_center, c.bin_interior, c.wall_thickness)
                            + bin_walls(c.target_bin_center, c.bin_interior, c.wall_thickness))
        half = Vec2(0.5 * c.bin_interior[0], 0.5 * c.bin_interior[1])
        self._source = Rect(Vec2(*c.source_bin_center), half)
        self._target = Rect(Vec2(*c.target_bin_center), half)

    # -- geometry helpers -------------------------------------------------
    def home_position(self) -> Vec2:
        c = self.config
        return Vec2(c.source_bin_center[0] - 0.5 * c.bin_interior[0] + c.home_offset, c.source_bin_center[1])

    def object_range(self) -> tuple[tuple[float, float], tuple[float, float]]:
        """Sampling box for the object center: ((a_lo, a_hi), (b_lo, b_hi))."""
        c = self.config
        left = c.source_bin_center[0] - 0.5 * c.bin_interior[0]
        right = c.source_bin_center[0] + 0.5 * c.bin_interior[0]
        a_lo = left + c.home_offset + c.object_clearance_from_home
        a_hi = right - 0.5 * c.object_side - c.wall_margin
        reach = 0.5 * c.bin_interior[1] - 0.5 * c.object_side - c.wall_margin
        cb = c.source_bin_center[1]
        return (a_lo, a_hi), (cb - reach, cb + reach)

    def ee_rect(self, center, yaw_index: int = 0) -> Rect:
        return Rect(Vec2(*center), self._ee_half, _yaw_angle(yaw_index))

    def fingers(self, ee: Rect) -> tuple[Rect, Rect]:
        k = quarter_turns(ee.angle)
        # span axis is b for even yaw, a for odd yaw
        if k % 2 == 0:
            off = (0.0, self._pad_offset)
            half = self._pad_half
        else:
            off = (self._pad_offset, 0.0)
            half = Vec2(self._pad_half[1], self._pad_half[0])
        c = ee.center
        return (Rect(Vec2(c[0] + off[0], c[1] + off[1]), half),
                Rect(Vec2(c[0] - off[0], c[1] - off[1]), half))

    def object_rect(self, center) -> Rect:
        h = 0.5 * self.config.object_side
        return Rect(Vec2(*center), Vec2(h, h))

    def make_state(self, ee_center, object_center, yaw_index: int = 0, grasped: bool = False,
                   seed: int = 0, step_count: int = 0) -> WorldState:
        """Build a state directly (tests, grid sweeps)."""
        ee = self.ee_rect(ee_center, yaw_index)
        obj = self.object_rect(object_center)
        offset = Vec2(obj.center[0] - ee.center[0], obj.center[1] - ee.center[1]) if grasped else Vec2(0.0, 0.0)
        return WorldState(ee, obj, grasped, offset, 0.0, (), (), step_count, seed,
                          sample_noise(self.config, seed), self.scene())

    def scene(self) -> Scene:
        return Scene(Task.PICK_PLACE, self._fixed, self._target.center, self._target, self._source)

    # -- TaskEnv ----------------------------------------------------------
    def initial_state(self, seed: int) -> WorldState:
        rng = scene_rng(seed)
        (a_lo, a_hi), (b_lo, b_hi) = self.object_range()
        oa = float(rng.uniform(a_lo, a_hi))
        ob = float(rng.uniform(b_lo, b_hi))
        return self.make_state(self.home_position(), (oa, ob), 0, False, seed)

    def observe(self, state: WorldState) -> Observation:
        oc = state.object_pose.center
        n = state.obs_noise
        return Observation(
            task=Task.PICK_PLACE,
            ee_position=state.ee_pose.center,
            ee_yaw_index=quarter_turns(state.ee_pose.angle),
            observed_object_position=Vec2(oc[0] + n[0], oc[1] + n[1]),
            grasped=state.grasped,
            step_count=state.step_count,
            horizon=self.config.horizon,
        )

    def f_goal(self, state: WorldState) -> int:
        if state.grasped:
            return 0
        return int(self._target.contains_point(state.object_pose.center, tol=1e-12))

    def _transition(self, s: WorldState, action):
        if isinstance(action, Gripper):
            return self._gripper(s, action)
        if action.is_rotation:
            return self._rotate(s, 1 if action is Primitive.ROTATE_PLUS else -1)
        da, db = action.direction()
        d = self.config.delta
        new_ee = s.ee_pose.moved(da * d, db * d)
        if not self.in_workspace(new_ee.center):
            return s, None
        if s.grasped:
            c, off = new_ee.center, s.grasp_offset
            return dataclasses.replace(s, ee_pose=new_ee, object_pose=s.object_pose.at((c[0] + off[0], c[1] + off[1]))), None
        pads = self.fingers(new_ee)
        if any(any_overlap(p, self._fixed) for p in pads):
            return s, FailureKind.COLLISION
        obj = s.object_pose
        push = max(separation_along(p, obj, (da, db)) for p in pads)
        if push > 0.0:
            obj = obj.moved(da * push, db * push)
            if any_overlap(obj, self._fixed):
                return s, FailureKind.COLLISION
        return dataclasses.replace(s, ee_pose=new_ee, object_pose=obj), None

    def _rotate(self, s: WorldState, sign: int):
        k = quarter_turns(s.ee_pose.angle)
        new_ee = self.ee_rect(s.ee_pose.center, (k + sign) % 4)
        if s.grasped:
            off = rotate(s.grasp_offset, sign * 0.5 * math.pi)
            c = new_ee.center
            obj = s.object_pose.at((c[0] + off[0], c[1] + off[1]), s.object_pose.angle + sign * 0.5 * math.pi)
            obj = Rect(obj.center, obj.half_extents, _yaw_angle(quarter_turns(obj.angle) or 0))
            return dataclasses.replace(s, ee_pose=new_ee, object_pose=obj, grasp_offset=off), None
        for p in self.fingers(new_ee):
            if any_overlap(p, self._fixed) or overlaps(p, s.object_pose):
                return s, FailureKind.COLLISION
        return dataclasses.replace(s, ee_pose=new_ee), None

    def _gripper(self, s: WorldState, action: Gripper):
        if action is Gripper.OPEN:
            if s.grasped:
                return dataclasses.replace(s, grasped=False, grasp_offset=Vec2(0.0, 0.0)), None
            return s, None
        if s.grasped:
            return s, None
        ee = s.ee_pose
        oc = s.object_pose.center
        rel = (oc[0] - ee.center[0], oc[1] - ee.center[1])
        if quarter_turns(ee.angle) % 2 == 0:
            across, along = rel
        else:
            along, across = rel
        half_obj = 0.5 * self.config.object_side
        if abs(across) <= 0.5 * self.config.finger_width + EPS and abs(along) + half_obj <= self._opening + EPS:
            return dataclasses.replace(s, grasped=True, grasp_offset=Vec2(*rel)), None
        return s, FailureKind.COLLISION

    def is_valid(self, s: WorldState) -> bool:
        """No pad inside a wall or the object (a carried object is above the bins)."""
        if not self.in_workspace(s.ee_pose.center):
            return False
        if s.grasped:
            return True
        return not any(any_overlap(p, self._fixed) or overlaps(p, s.object_pose)
                       for p in self.fingers(s.ee_pose))

    # used by the initiation-set sweep and Appendix-style plots
    def wall_faces_b(self) -> tuple[float, float]:
        """(bottom, top) interior faces of the source bin along b."""
        r = self._source
        return r.center[1] - r.half_extents[1], r.center[1] + r.half_extents[1]


def _yaw_angle(k: int) -> float:
    k %= 4
    return (0.0, 0.5 * math.pi, math.pi, -0.5 * math.pi)[k]

