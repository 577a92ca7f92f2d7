"""Side-view shelf placement, optionally with clutter on the shelf.

Coordinates are (a, b) = (y, z).  The box starts on the table; the robot sees
its position through a noise offset that is drawn once per episode, so the
grasp ends up offset from where the nominal skills believe it is.  A box that
hangs too low catches the shelf lip on the way in; with a large vertical grasp
offset the contact also makes it rotate in the hand (slip).
"""

from __future__ import annotations

import dataclasses
import math

from ..geometry import (Rect, Vec2, any_overlap, normalize_angle, overlaps, rotate,
                        separation_along)
from .base import TaskEnv, sample_noise, scene_rng
from .config import TaskConfig
from .types import (ConfigError, FailureKind, Gripper, Observation, Primitive, Scene, Task,
                    WorldState)

TRANSLATIONS = (Primitive.TRANSLATE_PLUS_A, Primitive.TRANSLATE_MINUS_A,
                Primitive.TRANSLATE_PLUS_B, Primitive.TRANSLATE_MINUS_B)
GOAL_EPS = 1e-12


class ShelfEnv(TaskEnv):
    primitives = TRANSLATIONS

    def __init__(self, config: TaskConfig | None = None):
        super().__init__(config or TaskConfig.default(Task.SHELF))
        self._hand_half = Vec2(0.5 * self.config.hand_size[0], 0.5 * self.config.hand_size[1])

    # -- scene ------------------------------------------------------------
    def build_scene(self, box_size, front: float, floor_top: float, clearance: float,
                    target_a: float) -> Scene:
        c = self.config
        t = c.board_thickness
        w, h = box_size
        back = front + c.shelf_depth
        ceiling = floor_top + h + clearance
        fixed = (
            Rect.from_bounds(c.table_extent[0], c.table_extent[1], -0.05, 0.0),  # table
            Rect.from_bounds(front, back, floor_top - t, floor_top),  # shelf floor
            Rect.from_bounds(front, back, ceiling, ceiling + t),  # shelf ceiling
            Rect.from_bounds(back, back + t, floor_top - t, ceiling + t),  # back wall
        )
        return Scene(
            task=c.task,
            fixed=fixed,
            target=Vec2(target_a, floor_top + 0.5 * h),
            box_size=Vec2(w, h),
            shelf_front=front,
            shelf_back=back,
            floor_top=floor_top,
            ceiling_bottom=ceiling,
            table_top=0.0,
        )

    def hand_rect(self, center) -> Rect:
        return Rect(Vec2(*center), self._hand_half)

    def initial_state(self, seed: int) -> WorldState:
        c = self.config
        rng = scene_rng(seed)
        w = float(rng.uniform(*c.box_width_range))
        h = float(rng.uniform(*c.box_height_range))
        box_a = float(rng.uniform(*c.box_position_range))
        front = float(rng.uniform(*c.shelf_front_range))
        floor_top = float(rng.uniform(*c.floor_top_range))
        clearance = float(rng.uniform(*c.opening_clearance_range))
        if c.num_obstacles == 0:
            target_a = front + 0.5 * c.shelf_depth
        else:
            # leave a short stretch in front of the target for clutter
            target_a = front + 0.27 * (c.shelf_depth - w) + 0.5 * w
        scene = self.build_scene((w, h), front, floor_top, clearance, target_a)
        obstacles = self._sample_obstacles(rng, scene)
        box = Rect(Vec2(box_a, 0.5 * h), Vec2(0.5 * w, 0.5 * h))
        return WorldState(
            ee_pose=self.hand_rect(c.hand_start),
            object_pose=box,
            grasped=False,
            grasp_offset=Vec2(0.0, 0.0),
            object_angle_in_hand=0.0,
            obstacles=obstacles,
            obstacles_initial=obstacles,
            step_count=0,
            episode_seed=seed,
            obs_noise=sample_noise(c, seed),
            scene=scene,
        )

    def _sample_obstacles(self, rng, scene: Scene) -> tuple[Rect, ...]:
        c = self.config
        if c.num_obstacles == 0:
            return ()
        w = scene.box_size[0]
        keep_lo = scene.target[0] - 0.5 * w - 0.01
        keep_hi = scene.target[0] + 0.5 * w + 0.01
        gap = 0.005
        placed: list[Rect] = []
        for _ in range(c.num_obstacles):
            ow = float(rng.uniform(*c.obstacle_width_range))
            oh = float(rng.uniform(*c.obstacle_height_range))
            # free intervals for the obstacle centre, minus what is already placed
            free = [(scene.shelf_front + 0.5 * ow, keep_lo - 0.5 * ow),
                    (keep_hi + 0.5 * ow, scene.shelf_back - 0.5 * ow)]
            for r in placed:
                lo = r.center[0] - r.half_extents[0] - gap - 0.5 * ow
                hi = r.center[0] + r.half_extents[0] + gap + 0.5 * ow
                free = [seg for a, b in free for seg in ((a, min(b, lo)), (max(a, hi), b))]
            free = [(a, b) for a, b in free if b > a]
            if not free:
                raise ConfigError("no room on the shelf for the obstacles")
            lengths = [b - a for a, b in free]
            u = float(rng.uniform(0.0, sum(lengths)))
            ca = free[-1][1]
            for (a, b), ln in zip(free, lengths):
                if u <= ln:
                    ca = a + u
                    break
                u -= ln
            placed.append(Rect(Vec2(ca, scene.floor_top + 0.5 * oh), Vec2(0.5 * ow, 0.5 * oh)))
        return tuple(placed)

    # -- observation / goal ----------------------------------------------
    def observe(self, state: WorldState) -> Observation:
        sc = state.scene
        bc = state.object_pose.center
        n = state.obs_noise
        pos: list[float] = []
        size: list[float] = []
        for r in state.obstacles:
            pos += [r.center[0], r.center[1]]
            size += [r.half_extents[0], r.half_extents[1]]
        return Observation(
            task=self.config.task,
            ee_position=state.ee_pose.center,
            ee_yaw_index=0,
            observed_object_position=Vec2(bc[0] + n[0], bc[1] + n[1]),
            grasped=state.grasped,
            step_count=state.step_count,
            horizon=self.config.horizon,
            obstacle_positions=tuple(pos),
            obstacle_sizes=tuple(size),
            scene_features=(sc.target[0], sc.target[1], sc.box_size[0], sc.box_size[1],
                            sc.shelf_front, sc.floor_top, sc.ceiling_bottom),
        )

    def obstacles_undisturbed(self, state: WorldState) -> bool:
        c = self.config
        for r, r0 in zip(state.obstacles, state.obstacles_initial):
            moved = math.hypot(r.center[0] - r0.center[0], r.center[1] - r0.center[1])
            if moved > c.obstacle_displacement_threshold + GOAL_EPS:
                return False
            if abs(normalize_angle(r.angle - r0.angle)) > c.obstacle_rotation_threshold:
                return False
        return True

    def f_goal(self, state: WorldState) -> int:
        if state.grasped:
            return 0
        bc, t = state.object_pose.center, state.scene.target
        if math.hypot(bc[0] - t[0], bc[1] - t[1]) > self.config.goal_tolerance + GOAL_EPS:
            return 0
        if abs(normalize_angle(state.object_pose.angle)) > self.config.goal_angle_tolerance:
            return 0
        return int(self.obstacles_undisturbed(state))

    # -- dynamics ---------------------------------------------------------
    def carried_box(self, hand_center, state: WorldState, angle: float | None = None) -> Rect:
        theta = state.object_angle_in_hand if angle is None else angle
        off = rotate(state.grasp_offset, theta)
        return state.object_pose.at((hand_center[0] + off[0], hand_center[1] + off[1]), theta)

    def is_valid(self, s: WorldState) -> bool:
        """Hand and carried box clear of the shelf, the table and the clutter."""
        if not self.in_workspace(s.ee_pose.center):
            return False
        solid = s.scene.fixed + s.obstacles
        if any_overlap(s.ee_pose, solid):
            return False
        return not (s.grasped and any_overlap(s.object_pose, solid))

    def _blocked(self, hand: Rect, box: Rect | None, fixed) -> bool:
        if any_overlap(hand, fixed):
            return True
        return box is not None and any_overlap(box, fixed)

    def _transition(self, s: WorldState, action):
        if isinstance(action, Gripper):
            return self._gripper(s, action)
        da, db = action.direction()
        d = self.config.delta
        new_hand = s.ee_pose.moved(da * d, db * d)
        if not self.in_workspace(new_hand.center):
            return s, None
        fixed = s.scene.fixed
        new_box = self.carried_box(new_hand.center, s) if s.grasped else None
        if self._blocked(new_hand, new_box, fixed):
            if (s.grasped and s.object_angle_in_hand == 0.0
                    and abs(s.grasp_offset[1]) > self.config.slip_offset_threshold):
                return self._slip(s, (da, db)), FailureKind.SLIP
            return s, FailureKind.COLLISION
        obstacles = list(s.obstacles)
        if obstacles:
            movers = [new_hand] + ([new_box] if new_box is not None else [])
            for i, ob in enumerate(obstacles):
                push = max(separation_along(m, ob, (da, db)) for m in movers)
                if push <= 0.0:
                    continue
                moved = ob.moved(da * push, db * push)
                others = obstacles[:i] + obstacles[i + 1:]
                if any_overlap(moved, fixed) or any_overlap(moved, others):
                    return s, FailureKind.COLLISION
                obstacles[i] = moved
            cand = dataclasses.replace(s, obstacles=tuple(obstacles))
            if not self.obstacles_undisturbed(cand):
                return s, FailureKind.OBSTACLE_DISTURBED
        nxt = dataclasses.replace(s, ee_pose=new_hand, obstacles=tuple(obstacles))
        if new_box is not None:
            nxt = dataclasses.replace(nxt, object_pose=new_box)
        return nxt, None

    def _slip(self, s: WorldState, direction) -> WorldState:
        """Rotate the box in the hand; back off until it is clear of the shelf."""
        theta = math.copysign(self.config.slip_angle, s.grasp_offset[1])
        hand = s.ee_pose
        fixed = s.scene.fixed + s.obstacles
        for dirn in ((-direction[0], -direction[1]), (0.0, 1.0)):
            for i in range(51):
                shift = 0.002 * i
                h = hand.moved(dirn[0] * shift, dirn[1] * shift)
                box = self.carried_box(h.center, s, theta)
                if not self._blocked(h, box, fixed):
                    return dataclasses.replace(s, ee_pose=h, object_pose=box, object_angle_in_hand=theta)
        # give up rotating if no clear pose nearby
        return s

    def _gripper(self, s: WorldState, action: Gripper):
        if action is Gripper.CLOSE:
            if s.grasped:
                return s, None
            w, h = s.scene.box_size
            bc, hc = s.object_pose.center, s.ee_pose.center
            off = Vec2(bc[0] - hc[0], bc[1] - hc[1])
            if abs(off[0]) <= 0.5 * w + 1e-9 and abs(off[1]) <= 0.5 * h + 1e-9:
                return dataclasses.replace(s, grasped=True, grasp_offset=off,
                                           object_angle_in_hand=s.object_pose.angle), None
            return s, FailureKind.COLLISION
        if not s.grasped:
            return s, None
        return dataclasses.replace(s, grasped=False, object_pose=self.settle(s),
                                   grasp_offset=Vec2(0.0, 0.0), object_angle_in_hand=0.0), None

    def settle(self, s: WorldState) -> Rect:
        """Pose of a released box once it has dropped onto the highest support below it."""
        box = s.object_pose
        w, h = s.scene.box_size
        a0, a1, b0, _ = box.bounds()
        sc = s.scene
        supports = [sc.table_top - 1.0]
        c = self.config
        if a1 > c.table_extent[0] and a0 < c.table_extent[1]:
            supports.append(sc.table_top)
        if a1 > sc.shelf_front and a0 < sc.shelf_back:
            supports.append(sc.floor_top)
        for r in s.obstacles:
            ra0, ra1, _, rb1 = r.bounds()
            if a1 > ra0 and a0 < ra1:
                supports.append(rb1)
        below = [z for z in supports if z <= b0 + 1e-9]
        base = max(below) if below else max(supports)
        angle = normalize_angle(box.angle)
        if abs(angle) <= math.atan2(w, h):
            angle = 0.0
        rest = box.at((box.center[0], 0.0), angle)
        _, _, rb0, _ = rest.bounds()
        return rest.at((box.center[0], base - rb0), angle)


class ClutteredShelfEnv(ShelfEnv):
    def __init__(self, config: TaskConfig | None = None):
        super().__init__(config or TaskConfig.default(Task.CLUTTERED_SHELF))
