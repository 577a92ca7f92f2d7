"""Comparison methods: pretrained preconditions (PP) and flat RL for recovery (RLR).

PP learns one precondition classifier per nominal skill from perturbed
nominal executions, freezes them, and rewards the recovery policy for
reaching any state a classifier accepts.  Whether that state really leads to
the goal is only checked at evaluation time by running the plan suffix of the
most confident skill.
"""

from __future__ import annotations

import dataclasses
import hashlib
import pickle
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from .records import FailureRecord
from .fastgbt import CompiledGBT, make_classifier
from .rc_mdp import RecoveryEnv
from .sim import ContractViolation, Observation, TaskConfig, TaskEnv, WorldState, make_env
from .skills import NominalPlan, Outcome, execute_suffix, nominal_plan

PP_DATASET_SIZES = (250, 400, 600)
PP_SEED_OFFSET = 200_000  # nominal trajectories for PP come from their own seed range
JITTER = 0.04
THRESHOLD = 0.5


@dataclass(frozen=True)
class PreconditionSample:
    skill_index: int
    observation: Observation
    label: int
    seed: int


def jitter_state(env: TaskEnv, state: WorldState, rng: np.random.Generator, magnitude: float = JITTER,
                 attempts: int = 20) -> WorldState:
    """Shift the end-effector (and anything it holds) by up to ``magnitude`` per axis.

    Perturbations that would put something inside something else are
    redrawn; after ``attempts`` misses the state is returned unchanged.
    """
    for _ in range(attempts):
        da, db = rng.uniform(-magnitude, magnitude, size=2)
        cand = dataclasses.replace(state, ee_pose=state.ee_pose.moved(da, db))
        if state.grasped:
            cand = dataclasses.replace(cand, object_pose=state.object_pose.moved(da, db))
        if env.is_valid(cand):
            return cand
    return state


def collect_nominal_dataset(config: TaskConfig, plan: Optional[NominalPlan] = None, n: int = 400,
                            seed: int = 0, magnitude: float = JITTER) -> list[PreconditionSample]:
    """Label perturbed skill-switch states of ``n`` nominal episodes.

    At every skill switch the state is jittered and, for each skill ``j``,
    labelled with the success bit of the plan suffix starting at ``j``, so
    every classifier also sees states where its skill does not apply.  The
    episode then continues from the jittered state and stops at the first
    failure.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    env = make_env(config)
    plan = plan or nominal_plan(env)
    rng = np.random.default_rng([seed, n])
    samples: list[PreconditionSample] = []
    for ep in range(n):
        ep_seed = PP_SEED_OFFSET + ep
        state, _ = env.reset(ep_seed)
        for i in range(1, len(plan) + 1):
            state = jitter_state(env, state, rng, magnitude)
            obs = env.observe(state)
            for j in range(1, len(plan) + 1):
                suffix = execute_suffix(env, state, plan, j, record=False)
                samples.append(PreconditionSample(j, obs, int(suffix.outcome is Outcome.GOAL), ep_seed))
            step = execute_suffix(env, state, plan, i, record=False, end_index=i)
            if step.outcome is not Outcome.TIMEOUT:
                break
            state = step.final_state
    return samples


class _Constant:
    """Stand-in for a skill whose training labels are all one class."""

    def __init__(self, p: float):
        self.p = p

    def predict_proba(self, X):
        X = np.atleast_2d(X)
        return np.column_stack([np.full(len(X), 1.0 - self.p), np.full(len(X), self.p)])

    def prob(self, x) -> float:
        return self.p


class OfflinePreconditionModel:
    """Frozen per-skill classifiers; reward 1 once any of them says "inside"."""

    def __init__(self, num_skills: int, dataset_size: int, threshold: float = THRESHOLD):
        self.num_skills = num_skills
        self.dataset_size = dataset_size
        self.threshold = threshold
        self.models: dict[int, object] = {}
        self._fast: dict[int, object] = {}
        self._frozen_hash: Optional[str] = None

    @staticmethod
    def fit(samples: Sequence[PreconditionSample], num_skills: int, dataset_size: int,
            seed: int = 0, n_estimators: int = 100, max_depth: int = 3) -> "OfflinePreconditionModel":
        model = OfflinePreconditionModel(num_skills, dataset_size)
        for i in range(1, num_skills + 1):
            rows = [s for s in samples if s.skill_index == i]
            if not rows:
                model.models[i] = _Constant(0.0)
                continue
            X = np.stack([s.observation.to_vector() for s in rows])
            y = np.array([s.label for s in rows])
            if y.min() == y.max():
                model.models[i] = _Constant(float(y[0]))
                continue
            model.models[i] = make_classifier(n_estimators, max_depth, seed).fit(X, y)
        for i, m in model.models.items():
            model._fast[i] = m if isinstance(m, _Constant) else CompiledGBT(m, len(samples[0].observation.to_vector()))
        model._frozen_hash = model.param_hash()
        return model

    def param_hash(self) -> str:
        return hashlib.sha256(pickle.dumps([self.models[i] for i in sorted(self.models)])).hexdigest()[:16]

    @property
    def fitted(self) -> bool:
        return self._frozen_hash is not None

    def probs(self, obs: Observation) -> np.ndarray:
        if not self.fitted:
            raise ContractViolation("precondition model used before fitting")
        x = obs.to_vector()
        return np.array([self._fast[i].prob(x) for i in range(1, self.num_skills + 1)])

    def predict(self, obs: Observation) -> tuple[int, int]:
        """(reward bit, 1-based index of the most confident skill)."""
        p = self.probs(obs)
        best = int(np.argmax(p))
        return int(p[best] >= self.threshold), best + 1

    def pp_reward(self, obs: Observation) -> tuple[int, bool]:
        """(reward, terminal): reaching an estimated precondition ends the episode."""
        r, _ = self.predict(obs)
        return r, bool(r)

    def check_frozen(self) -> None:
        if self.param_hash() != self._frozen_hash:
            raise ContractViolation("pretrained precondition model changed after fitting")


def fit_pp_model(config: TaskConfig, dataset_size: int = 400, seed: int = 0,
                 plan: Optional[NominalPlan] = None) -> OfflinePreconditionModel:
    env = make_env(config)
    plan = plan or nominal_plan(env)
    samples = collect_nominal_dataset(config, plan, dataset_size, seed)
    return OfflinePreconditionModel.fit(samples, len(plan), dataset_size, seed)


def pp_env(env: TaskEnv, dataset: Sequence[FailureRecord], model: OfflinePreconditionModel,
           seed: int = 0, **kw) -> RecoveryEnv:
    return RecoveryEnv(env, dataset, seed=seed, use_options=False, reward_model=model, **kw)


def rlr_env(env: TaskEnv, dataset: Sequence[FailureRecord], seed: int = 0, **kw) -> RecoveryEnv:
    """Flat RL: primitives only, reward straight from the goal test."""
    return RecoveryEnv(env, dataset, seed=seed, use_options=False, **kw)


def rlr_config() -> dict:
    """Keyword arguments that turn the recovery MDP into the flat baseline."""
    return {"use_options": False, "lazy": None, "reward_model": None}
