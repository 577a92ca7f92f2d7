"""Scripted nominal controllers and the plan executor.

Every skill is a small state machine over the current :class:`Observation`:
it picks a target for the end-effector and moves greedily, one axis at a
time, by single primitives.  Skills never see the true object pose, which is
where the Shelf failures come from.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .records import FailureRecord
from .sim import (Gripper, Observation, PickPlaceEnv, Primitive, Task, TaskEnv, Terminal,
                  WorldState)
from .sim.types import StepOutcome


class SkillId(str, enum.Enum):
    GO_TO_GRASP = "GoToGrasp"
    PICK = "Pick"
    GO_TO_GOAL = "GoToGoal"
    PLACE = "Place"
    PICK_S = "PickS"
    MOVE = "Move"
    PLACE_S = "PlaceS"


class _Done:
    def __repr__(self):
        return "DONE"


DONE = _Done()
SkillAction = Union[Primitive, Gripper, _Done]


class Outcome(str, enum.Enum):
    GOAL = "Goal"
    FAILURE = "Failure"
    TIMEOUT = "Timeout"


@dataclass(frozen=True)
class NominalSkill:
    id: SkillId
    max_steps: int
    policy: Callable[[Observation], SkillAction] = field(compare=False, repr=False)

    def __call__(self, obs: Observation) -> SkillAction:
        return self.policy(obs)


@dataclass(frozen=True)
class NominalPlan:
    skills: tuple[NominalSkill, ...]

    def __post_init__(self):
        if not self.skills:
            raise ValueError("a nominal plan needs at least one skill")

    def __len__(self) -> int:
        return len(self.skills)

    def index_of(self, skill: SkillId) -> int:
        """1-based index of a skill in the plan."""
        for i, s in enumerate(self.skills, start=1):
            if s.id is skill:
                return i
        raise KeyError(skill)


@dataclass
class ExecutionTrace:
    transitions: list[tuple[WorldState, SkillAction, StepOutcome]]
    segments: list[tuple[int, int, int]]  # (skill index, first transition, end transition)
    outcome: Outcome
    final_state: WorldState
    steps: int
    failure_record: Optional[FailureRecord] = None
    failed_skill_index: Optional[int] = None


def toward(pos, target, axes: str, delta: float) -> Optional[Primitive]:
    """Greedy single-axis move: first axis in ``axes`` that is off by more than delta/2."""
    tol = 0.5 * delta
    for ax in axes:
        i = 0 if ax == "a" else 1
        diff = target[i] - pos[i]
        if abs(diff) > tol:
            if i == 0:
                return Primitive.TRANSLATE_PLUS_A if diff > 0 else Primitive.TRANSLATE_MINUS_A
            return Primitive.TRANSLATE_PLUS_B if diff > 0 else Primitive.TRANSLATE_MINUS_B
    return None


def _either(move: Optional[Primitive], fallback: SkillAction) -> SkillAction:
    # Primitive.TRANSLATE_PLUS_A == 0, so "or" would drop it
    return fallback if move is None else move


# -- PickPlace2D -------------------------------------------------------------

def pickplace_plan(env: PickPlaceEnv) -> NominalPlan:
    c = env.config
    delta = c.delta
    standoff = 0.5 * c.object_side + 0.5 * c.finger_width + 0.02
    target = c.target_bin_center
    n = c.skill_max_steps

    def go_to_grasp(obs: Observation) -> SkillAction:
        if obs.grasped:
            return DONE
        ee, obj = obs.ee_position, obs.observed_object_position
        # approach along the axis across the fingers, align along the span axis
        app, span = (0, 1) if obs.ee_yaw_index % 2 == 0 else (1, 0)
        axis = "ab"
        gap_app = ee[app] - obj[app]
        if abs(ee[span] - obj[span]) > 0.5 * delta:
            if abs(gap_app) < standoff - 0.5 * delta:
                side = 1.0 if gap_app > 0 else -1.0
                goal = list(ee)
                goal[app] = obj[app] + side * standoff
                return _either(toward(ee, goal, axis[app], delta), DONE)
            goal = list(ee)
            goal[span] = obj[span]
            return _either(toward(ee, goal, axis[span], delta), DONE)
        return _either(toward(ee, obj, axis[app], delta), DONE)

    def pick(obs: Observation) -> SkillAction:
        return DONE if obs.grasped else Gripper.CLOSE

    def go_to_goal(obs: Observation) -> SkillAction:
        ee, obj = obs.ee_position, obs.observed_object_position
        goal = (target[0] + ee[0] - obj[0], target[1] + ee[1] - obj[1])
        return _either(toward(ee, goal, "ab", delta), DONE)

    def place(obs: Observation) -> SkillAction:
        return Gripper.OPEN if obs.grasped else DONE

    return NominalPlan((
        NominalSkill(SkillId.GO_TO_GRASP, n, go_to_grasp),
        NominalSkill(SkillId.PICK, n, pick),
        NominalSkill(SkillId.GO_TO_GOAL, n, go_to_goal),
        NominalSkill(SkillId.PLACE, n, place),
    ))


# -- Shelf2D / ClutteredShelf2D ---------------------------------------------

def shelf_plan(env: TaskEnv) -> NominalPlan:
    c = env.config
    delta = c.delta
    n = c.skill_max_steps

    def pick(obs: Observation) -> SkillAction:
        ee, box = obs.ee_position, obs.observed_object_position
        h = obs.scene_features[3]
        if not obs.grasped:
            return _either(toward(ee, box, "ab", delta), Gripper.CLOSE)
        if box[1] - 0.5 * h < c.lift_clearance:
            return Primitive.TRANSLATE_PLUS_B
        return DONE

    def move(obs: Observation) -> SkillAction:
        ee, box = obs.ee_position, obs.observed_object_position
        _, _, w, h, front, floor, _ = obs.scene_features
        pre = (front - c.preplace_gap - 0.5 * w, floor + 0.5 * h + c.place_clearance)
        goal = (ee[0] + pre[0] - box[0], ee[1] + pre[1] - box[1])
        return _either(toward(ee, goal, "ba", delta), DONE)

    def place(obs: Observation) -> SkillAction:
        if not obs.grasped:
            return DONE
        ee, box = obs.ee_position, obs.observed_object_position
        ta = obs.scene_features[0]
        goal = (ee[0] + ta - box[0], ee[1])
        return _either(toward(ee, goal, "a", delta), Gripper.OPEN)

    return NominalPlan((
        NominalSkill(SkillId.PICK_S, n, pick),
        NominalSkill(SkillId.MOVE, n, move),
        NominalSkill(SkillId.PLACE_S, n, place),
    ))


def nominal_plan(env: TaskEnv) -> NominalPlan:
    if env.task is Task.PICK_PLACE:
        return pickplace_plan(env)  # type: ignore[arg-type]
    return shelf_plan(env)


def skill_policy(skill: NominalSkill, obs: Observation) -> SkillAction:
    return skill.policy(obs)


def execute_suffix(env: TaskEnv, state: WorldState, plan: NominalPlan, start_index: int,
                   record: bool = True, seed: Optional[int] = None,
                   end_index: Optional[int] = None) -> ExecutionTrace:
    """Run skills ``start_index..k`` (1-based) from ``state`` until goal, failure or the end.

    With ``record=False`` the transition list stays empty, which keeps
    monte-carlo rollouts cheap; segments, outcome and step counts are kept.
    ``end_index`` stops after that skill instead of the last one (outcome
    Timeout unless the goal or a failure came first).
    """
    k = len(plan) if end_index is None else end_index
    if not 1 <= start_index <= k <= len(plan):
        raise ValueError(f"skill range {start_index}..{k} outside 1..{len(plan)}")
    transitions: list = []
    segments: list[tuple[int, int, int]] = []
    if env.f_goal(state):
        return ExecutionTrace(transitions, segments, Outcome.GOAL, state, 0)
    obs = env.observe(state)
    steps = 0
    horizon = env.config.horizon
    for idx in range(start_index, k + 1):
        skill = plan.skills[idx - 1]
        first = steps
        for _ in range(skill.max_steps):
            if state.step_count >= horizon:
                segments.append((idx, first, steps))
                return ExecutionTrace(transitions, segments, Outcome.TIMEOUT, state, steps)
            action = skill.policy(obs)
            if action is DONE:
                break
            out = env.step(state, action)
            steps += 1
            if record:
                transitions.append((state, action, out))
            if out.terminal is Terminal.GOAL:
                segments.append((idx, first, steps))
                return ExecutionTrace(transitions, segments, Outcome.GOAL, out.next, steps)
            if out.terminal is Terminal.FAILURE:
                segments.append((idx, first, steps))
                rec = FailureRecord(out.next, out.observation, out.failure_kind, idx,
                                    state.episode_seed if seed is None else seed)
                return ExecutionTrace(transitions, segments, Outcome.FAILURE, out.next, steps, rec, idx)
            state, obs = out.next, out.observation
        segments.append((idx, first, steps))
    return ExecutionTrace(transitions, segments, Outcome.TIMEOUT, state, steps)


def run_nominal(env: TaskEnv, seed: int, plan: NominalPlan | None = None, record: bool = False) -> ExecutionTrace:
    plan = plan or nominal_plan(env)
    state, _ = env.reset(seed)
    return execute_suffix(env, state, plan, 1, record=record, seed=seed)
