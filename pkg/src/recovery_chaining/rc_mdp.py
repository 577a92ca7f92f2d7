"""The recovery MDP built on top of a task simulator and a nominal plan.

Actions are the task's motion primitives followed by one terminal option per
nominal skill; option ``i`` hands control to the plan suffix starting at skill
``i`` and the episode ends with reward ``f_goal`` of wherever that leaves the
world.  Episodes start from recorded nominal failures.

The same wrapper serves the baselines: with ``use_options=False`` it is the
flat primitives-only MDP (RLR); with a ``reward_model`` the learned
precondition estimate replaces the options (PP).  A ``lazy`` gate lets the
option reward come from a classifier instead of a rollout.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from .discovery import reset_to_failure
from .records import FailureRecord
from .sim import ContractViolation, Observation, Primitive, TaskEnv, Terminal, WorldState
from .skills import NominalPlan, Outcome, execute_suffix, nominal_plan

DEFAULT_RC_HORIZON = 120
MEMO_LIMIT = 200_000


class RcTerminal(str, enum.Enum):
    NONE = "None"
    GOAL = "Goal"  # s_g
    FAIL = "Fail"  # s_f
    DEAD = "Dead"  # s_d


@dataclass(frozen=True)
class RcAction:
    """Either a motion primitive or a nominal option index (1-based)."""

    primitive: Optional[Primitive] = None
    option: Optional[int] = None

    def __post_init__(self):
        if (self.primitive is None) == (self.option is None):
            raise ContractViolation("RcAction needs exactly one of primitive / option")

    @staticmethod
    def prim(p: Primitive) -> "RcAction":
        return RcAction(primitive=p)

    @staticmethod
    def nominal(i: int) -> "RcAction":
        return RcAction(option=i)

    @property
    def is_option(self) -> bool:
        return self.option is not None

    def __str__(self):
        return self.primitive.name if self.option is None else f"Option{self.option}"


@dataclass
class RcStepResult:
    observation: Optional[Observation]  # None marks an absorbing state
    reward: float
    done: bool
    terminal_kind: RcTerminal
    info: dict = field(default_factory=dict)


class GateLike(Protocol):
    def decide(self, i: int, obs: Observation, rng: np.random.Generator) -> tuple[bool, bool]:
        ...

    def record_outcome(self, i: int, obs: Observation, success: int, audited: bool = False) -> None:
        ...


class RewardModel(Protocol):
    def predict(self, obs: Observation) -> tuple[int, int]:
        """(reward bit, index of the most confident skill)."""
        ...


class RecoveryEnv:
    """Stateful wrapper: one active recovery episode at a time."""

    def __init__(self, env: TaskEnv, dataset: Sequence[FailureRecord], plan: Optional[NominalPlan] = None,
                 horizon: int = DEFAULT_RC_HORIZON, seed: int = 0, use_options: bool = True,
                 lazy: Optional[GateLike] = None, reward_model: Optional[RewardModel] = None):
        if reward_model is not None and use_options:
            raise ContractViolation("a learned reward model replaces the nominal options")
        if lazy is not None and not use_options:
            raise ContractViolation("the lazy gate needs nominal options")
        self.env = env
        self.plan = plan or nominal_plan(env)
        self.dataset = list(dataset)
        self.horizon = horizon
        self.use_options = use_options
        self.lazy = lazy
        self.reward_model = reward_model
        self.actions: list[RcAction] = [RcAction.prim(p) for p in env.primitives]
        if use_options:
            self.actions += [RcAction.nominal(i) for i in range(1, len(self.plan) + 1)]
        reset_ss, gate_ss = np.random.SeedSequence(seed).spawn(2)
        self._reset_rng = np.random.default_rng(reset_ss)
        self._gate_rng = np.random.default_rng(gate_ss)
        self._state: Optional[WorldState] = None
        self._obs: Optional[Observation] = None
        self._t = 0
        self._memo: dict = {}
        # compute accounting
        self.rollout_sim_steps = 0
        self.rollouts = 0
        self.lazy_hits = 0
        self.option_calls = 0

    # -- spaces -------------------------------------------------------------
    @property
    def num_actions(self) -> int:
        return len(self.actions)

    @property
    def num_primitives(self) -> int:
        return len(self.env.primitives)

    @property
    def obs_dim(self) -> int:
        rec = self.dataset[0] if self.dataset else None
        if rec is None:
            raise ContractViolation("empty failure dataset")
        return len(rec.observation.to_vector())

    def to_action(self, a: Union[int, RcAction]) -> RcAction:
        if isinstance(a, RcAction):
            if a.is_option and not (self.use_options and 1 <= a.option <= len(self.plan)):
                raise ContractViolation(f"option {a.option} not available")
            if a.primitive is not None and a.primitive not in self.env.primitives:
                raise ContractViolation(f"{a.primitive.name} not available in {self.env.task.value}")
            return a
        a = int(a)
        if not 0 <= a < len(self.actions):
            raise ContractViolation(f"action index {a} outside 0..{len(self.actions) - 1}")
        return self.actions[a]

    def option_action_index(self, i: int) -> int:
        return self.num_primitives + i - 1

    # -- episode control -----------------------------------------------------
    @property
    def state(self) -> Optional[WorldState]:
        return self._state

    def rc_reset(self, rng_seed: Optional[int] = None) -> Observation:
        if not self.dataset:
            raise ContractViolation("cannot reset: failure dataset is empty")
        if rng_seed is not None:
            self._reset_rng = np.random.default_rng(rng_seed)
        idx = int(self._reset_rng.integers(len(self.dataset)))
        return self.reset_to(self.dataset[idx])

    def reset_to(self, record: FailureRecord) -> Observation:
        self._state, self._obs = reset_to_failure(self.env, record)
        self._t = 0
        return self._obs

    def start_from(self, state: WorldState) -> Observation:
        """Begin an episode from an arbitrary valid state (analysis and tests)."""
        if not self.env.is_valid(state):
            raise ContractViolation("start state interpenetrates")
        self._state, self._obs = state, self.env.observe(state)
        self._t = 0
        return self._obs

    def _rollout(self, state: WorldState, i: int) -> tuple[int, int]:
        # Rollouts are deterministic, so repeated queries are answered from a
        # memo.  Callers still charge the full step count of the rollout.
        key = (state, i)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        trace = execute_suffix(self.env, state, self.plan, i, record=False)
        res = (int(trace.outcome is Outcome.GOAL), trace.steps)
        if len(self._memo) >= MEMO_LIMIT:
            self._memo.clear()
        self._memo[key] = res
        return res

    def mc_precondition(self, state: WorldState, i: int) -> int:
        """Success bit of a single plan-suffix rollout from ``state`` (no accounting)."""
        if not 1 <= i <= len(self.plan):
            raise ContractViolation(f"option {i} outside 1..{len(self.plan)}")
        return self._rollout(state, i)[0]

    def _end(self, kind: RcTerminal, info: dict) -> RcStepResult:
        self._state = None
        self._obs = None
        return RcStepResult(None, 1.0 if kind is RcTerminal.GOAL else 0.0, True, kind, info)

    def rc_step(self, action: Union[int, RcAction]) -> RcStepResult:
        if self._state is None:
            raise ContractViolation("rc_step called without an active episode")
        act = self.to_action(action)
        info = {"mc_rollout_performed": False, "rollout_steps_used": 0, "lazy": False}
        if act.is_option:
            return self._option(act.option, info)
        out = self.env.step(self._state, act.primitive)
        self._t += 1
        if out.terminal is Terminal.GOAL:
            info["actual_success"] = 1
            return self._end(RcTerminal.GOAL, info)
        if out.terminal is Terminal.FAILURE:
            info["failure_kind"] = out.failure_kind
            return self._end(RcTerminal.FAIL, info)
        self._state, self._obs = out.next, out.observation
        if self.reward_model is not None:
            reward, skill = self.reward_model.predict(out.observation)
            if reward:
                info["handoff_skill"] = skill
                info["handoff_state"] = out.next
                return self._end(RcTerminal.GOAL, info)
        if self._t >= self.horizon:
            return self._end(RcTerminal.DEAD, info)
        return RcStepResult(out.observation, 0.0, False, RcTerminal.NONE, info)

    def _option(self, i: int, info: dict) -> RcStepResult:
        self.option_calls += 1
        info["option"] = i
        audited = False
        if self.lazy is not None:
            lazy_positive, audited = self.lazy.decide(i, self._obs, self._gate_rng)
            if lazy_positive:
                self.lazy_hits += 1
                info["lazy"] = True
                return self._end(RcTerminal.GOAL, info)
        success, steps = self._rollout(self._state, i)
        self.rollouts += 1
        self.rollout_sim_steps += steps
        info["mc_rollout_performed"] = True
        info["rollout_steps_used"] = steps
        info["actual_success"] = success
        if self.lazy is not None:
            self.lazy.record_outcome(i, self._obs, success, audited=audited)
        return self._end(RcTerminal.GOAL if success else RcTerminal.DEAD, info)

    def handoff_success(self, info: dict) -> int:
        """Actual task success after a learned-precondition handoff (evaluation only)."""
        if "handoff_state" not in info:
            return int(info.get("actual_success", 0))
        return self._rollout(info["handoff_state"], info["handoff_skill"])[0]

    # -- gym-style view used by the PPO trainer --------------------------------
    def reset(self) -> np.ndarray:
        return self.rc_reset().to_vector()

    def step(self, action: int) -> tuple[Optional[np.ndarray], float, bool, dict]:
        res = self.rc_step(action)
        res.info["terminal_kind"] = res.terminal_kind
        vec = None if res.observation is None else res.observation.to_vector()
        return vec, res.reward, res.done, res.info

    def option_of(self, action: int) -> Optional[int]:
        a = int(action)
        return a - self.num_primitives + 1 if a >= self.num_primitives else None
