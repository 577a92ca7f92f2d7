"""Experiment orchestration: nominal baselines, training runs, evaluation, exports.

Success is reported the way a deployed system would see it: the nominal
plan runs, and when it raises a failure the recovery policy takes over, so

    overall = P(nominal success) + P(detected failure) * P(recovery | failure)

with the recovery rate measured on held-out failures from seeds the policy
never trained on.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .baselines import OfflinePreconditionModel, fit_pp_model
from .discovery import DEFAULT_NUM_FAILURES, discover_failures, eval_failures
from .lazy import LazyConfig, LazyGate
from .ppo import (CURVE_FIELDS, PolicyNetwork, PPOConfig, TrainResult, log_softmax, sample_action,
                  save_checkpoint, train)
from .rc_mdp import RecoveryEnv
from .records import FailureRecord
from .sim import ConfigError, Task, TaskConfig, make_env
from .skills import Outcome, execute_suffix, nominal_plan, run_nominal

log = logging.getLogger(__name__)

METHODS = ("Nominal", "RC", "LazyRC", "PP", "RLR")
NOMINAL_EPISODES = 1000
EVAL_EPISODES = 200
CURVE_POINTS = 10  # evaluations per training run


# -- nominal statistics and calibration ----------------------------------------

@dataclass(frozen=True)
class NominalStats:
    episodes: int
    success: float
    failure: float
    timeout: float


def nominal_stats(config: TaskConfig, episodes: int = NOMINAL_EPISODES, start_seed: int = 0) -> NominalStats:
    env = make_env(config)
    plan = nominal_plan(env)
    counts = {o: 0 for o in Outcome}
    for seed in range(start_seed, start_seed + episodes):
        counts[run_nominal(env, seed, plan).outcome] += 1
    return NominalStats(episodes, counts[Outcome.GOAL] / episodes, counts[Outcome.FAILURE] / episodes,
                        counts[Outcome.TIMEOUT] / episodes)


@dataclass
class CalibrationReport:
    target: float
    tolerance: float
    rows: list[tuple[float, float]]  # (wall margin, nominal success rate)
    selected_margin: Optional[float]
    selected_rate: Optional[float]

    def to_csv(self) -> str:
        return _csv(["wall_margin", "nominal_success"], self.rows)


DEFAULT_MARGINS = (0.0, 0.0025, 0.005, 0.0075, 0.01, 0.0125, 0.015, 0.02, 0.03)


def calibrate_nominal(target: float = 0.70, tolerance: float = 0.05, margins: Sequence[float] = DEFAULT_MARGINS,
                      episodes: int = NOMINAL_EPISODES, base: Optional[TaskConfig] = None) -> CalibrationReport:
    """Sweep the PickPlace2D wall margin; pick the in-tolerance margin closest to ``target``."""
    base = base or TaskConfig.default(Task.PICK_PLACE)
    if base.task is not Task.PICK_PLACE:
        raise ConfigError("calibration sweeps the pick-place wall margin")
    rows = []
    for m in margins:
        rows.append((float(m), nominal_stats(base.replace(wall_margin=float(m)), episodes).success))
    ok = [(abs(r - target), m, r) for m, r in rows if abs(r - target) <= tolerance]
    if not ok:
        return CalibrationReport(target, tolerance, rows, None, None)
    _, m, r = min(ok)
    return CalibrationReport(target, tolerance, rows, m, r)


# -- per-task data ---------------------------------------------------------------

class TaskData:
    """Failure datasets, nominal statistics and PP models for one task config (built lazily)."""

    def __init__(self, config: TaskConfig, num_failures: int = DEFAULT_NUM_FAILURES,
                 eval_episodes: int = EVAL_EPISODES, train_failures: Optional[list[FailureRecord]] = None):
        self.config = config
        self.env = make_env(config)
        self.plan = nominal_plan(self.env)
        self.num_failures = num_failures
        self.eval_episodes = eval_episodes
        self._train = train_failures
        self._eval: Optional[list[FailureRecord]] = None
        self._nominal: Optional[NominalStats] = None
        self._pp: dict[int, OfflinePreconditionModel] = {}

    @property
    def train_failures(self) -> list[FailureRecord]:
        if self._train is None:
            self._train = discover_failures(self.config, self.plan, NOMINAL_EPISODES, self.num_failures)
        if not self._train:
            raise ConfigError(f"no failures for {self.config.task.value}; run discovery with more episodes")
        return self._train

    @property
    def eval_failures(self) -> list[FailureRecord]:
        if self._eval is None:
            self._eval = eval_failures(self.config, self.eval_episodes, self.plan)
        return self._eval

    @property
    def nominal(self) -> NominalStats:
        if self._nominal is None:
            self._nominal = nominal_stats(self.config)
        return self._nominal

    def pp_model(self, size: int) -> OfflinePreconditionModel:
        if size not in self._pp:
            self._pp[size] = fit_pp_model(self.config, size, plan=self.plan)
        return self._pp[size]


# -- experiments -----------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentSpec:
    method: str
    task: Task
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    ppo: PPOConfig = PPOConfig()
    pp_dataset_size: int = 400
    lazy: LazyConfig = LazyConfig()
    out_dir: Optional[Path] = None
    greedy_eval: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if not self.seeds:
            raise ConfigError("need at least one seed")


@dataclass
class SeedResult:
    seed: int
    recovery_rate: float
    success: float  # overall, percent
    sim_steps: int
    wall_time: float
    curve: list[dict] = field(default_factory=list)
    option_rounds: list[dict[int, int]] = field(default_factory=list)
    audits: tuple[int, int] = (0, 0)
    lazy_stats: dict = field(default_factory=dict)
    policy: Optional[PolicyNetwork] = field(default=None, repr=False, compare=False)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    nominal: NominalStats
    seeds: list[SeedResult]
    eval_episodes: int = 0  # held-out failures per seed

    @property
    def mean_success(self) -> float:
        return float(np.mean([s.success for s in self.seeds]))

    @property
    def mean_recovery(self) -> float:
        return float(np.mean([s.recovery_rate for s in self.seeds]))

    @property
    def recovery_ci95(self) -> float:
        """Normal-approximation 95% half-width of the pooled recovery rate."""
        n = self.eval_episodes * len(self.seeds)
        if n == 0:
            return 0.0
        p = self.mean_recovery
        return float(1.96 * np.sqrt(p * (1.0 - p) / n))

    @property
    def sim_steps(self) -> int:
        return int(sum(s.sim_steps for s in self.seeds))

    def row(self) -> dict:
        d = {"method": self.spec.method, "task": self.spec.task.value,
             "success_mean": round(self.mean_success, 6),
             "recovery_mean": round(self.mean_recovery, 6),
             "recovery_ci95": round(self.recovery_ci95, 6),
             "rollout_sim_steps": self.sim_steps,
             "seeds": " ".join(str(s.seed) for s in self.seeds),
             "success_per_seed": " ".join(f"{s.success:.4f}" for s in self.seeds)}
        return d


def overall_success(nominal: NominalStats, recovery_rate: float) -> float:
    return 100.0 * (nominal.success + nominal.failure * recovery_rate)


def build_env(method: str, data: TaskData, seed: int, spec: ExperimentSpec,
              records: Optional[list[FailureRecord]] = None) -> RecoveryEnv:
    records = data.train_failures if records is None else records
    if method in ("RC", "LazyRC"):
        lazy = LazyGate(len(data.plan), LazyConfig(**{**spec.lazy.__dict__, "seed": seed})) \
            if method == "LazyRC" else None
        return RecoveryEnv(data.env, records, data.plan, seed=seed, lazy=lazy)
    if method == "PP":
        return RecoveryEnv(data.env, records, data.plan, seed=seed, use_options=False,
                           reward_model=data.pp_model(spec.pp_dataset_size))
    if method == "RLR":
        return RecoveryEnv(data.env, records, data.plan, seed=seed, use_options=False)
    raise ConfigError(f"{method} has no recovery MDP")


def evaluate_policy(net: PolicyNetwork, env: RecoveryEnv, records: Sequence[FailureRecord],
                    seed: int = 0, greedy: bool = False) -> float:
    """Fraction of ``records`` from which the policy reaches the task goal.

    Options are always rolled out for real and learned-precondition handoffs
    are followed by the plan suffix, so only genuine task success counts.
    """
    rng = np.random.default_rng([seed, 7])
    wins = 0
    for rec in records:
        obs = env.reset_to(rec).to_vector()
        while True:
            if greedy:
                a = net.act_greedy(obs)
            else:
                logits, _ = net.pi.forward(obs)
                a = sample_action(np.exp(log_softmax(logits)), rng.random())
            nxt, _, done, info = env.step(a)
            if done:
                wins += env.handoff_success(info)
                break
            obs = nxt
    return wins / len(records)


def eval_env_for(method: str, data: TaskData, spec: ExperimentSpec) -> RecoveryEnv:
    # same action space as training; options always simulate during evaluation
    if method in ("RC", "LazyRC"):
        return RecoveryEnv(data.env, data.eval_failures, data.plan)
    if method == "PP":
        return RecoveryEnv(data.env, data.eval_failures, data.plan, use_options=False,
                           reward_model=data.pp_model(spec.pp_dataset_size))
    return RecoveryEnv(data.env, data.eval_failures, data.plan, use_options=False)


def run_seed(spec: ExperimentSpec, seed: int, data: TaskData) -> SeedResult:
    t0 = time.perf_counter()
    if spec.method == "Nominal":
        return SeedResult(seed, 0.0, overall_success(data.nominal, 0.0), 0, time.perf_counter() - t0)
    env = build_env(spec.method, data, seed, spec)
    ev_env = eval_env_for(spec.method, data, spec)
    cfg = spec.ppo.replace(seed=seed)
    n_rounds = max(1, cfg.total_timesteps // cfg.rollout_steps)

    def evaluator(net: PolicyNetwork) -> float:
        return evaluate_policy(net, ev_env, data.eval_failures, seed, spec.greedy_eval)

    on_update = env.lazy.on_policy_update if env.lazy is not None else None
    res: TrainResult = train(env, cfg, evaluator, max(1, n_rounds // CURVE_POINTS), on_update)
    rec = float(res.curve[-1]["recovery_rate"])
    audits = env.lazy.audit_counts() if env.lazy is not None else (0, 0)
    lazy_stats = env.lazy.stats() if env.lazy is not None else {}
    return SeedResult(seed, rec, overall_success(data.nominal, rec), env.rollout_sim_steps,
                      time.perf_counter() - t0, res.curve, res.option_rounds, audits, lazy_stats, res.net)


def run_experiment(spec: ExperimentSpec, data: Optional[TaskData] = None) -> ExperimentResult:
    data = data or TaskData(TaskConfig.default(spec.task))
    if data.config.task is not spec.task:
        raise ConfigError("task data does not match the experiment task")
    seeds = []
    for seed in spec.seeds:
        r = run_seed(spec, seed, data)
        log.info("%s %s seed %d: recovery %.3f overall %.1f%% (%.1fs)", spec.method, spec.task.value,
                 seed, r.recovery_rate, r.success, r.wall_time)
        seeds.append(r)
    n_eval = 0 if spec.method == "Nominal" else len(data.eval_failures)
    result = ExperimentResult(spec, data.nominal, seeds, n_eval)
    if spec.out_dir is not None:
        write_experiment(result, Path(spec.out_dir))
    return result


# -- analyses --------------------------------------------------------------------

def option_usage_histogram(option_rounds: Sequence[dict[int, int]], num_options: int) -> list[list[int]]:
    """Per exploration round, how often each nominal option was chosen."""
    return [[rnd.get(i, 0) for i in range(1, num_options + 1)] for rnd in option_rounds]


def option_commitment(hist: Sequence[Sequence[int]], final_fraction: float = 0.1) -> float:
    """Share of the most-used option among all option calls in the final rounds."""
    n = max(1, int(round(len(hist) * final_fraction)))
    tail = np.asarray(hist[-n:]).sum(axis=0)
    total = tail.sum()
    return float(tail.max() / total) if total else float("nan")


@dataclass
class InitiationPoint:
    coord_a: float
    coord_b: float
    in_precondition: int
    failed: int
    timeout: int


def initiation_set_export(task: Task | str = Task.PICK_PLACE, resolution: int = 25,
                          config: Optional[TaskConfig] = None) -> list[InitiationPoint]:
    """Sweep object placements and classify where the chosen skill can start.

    PickPlace2D: objects on a grid over the source-bin interior; the point is
    the end-effector position where GoToGrasp ends (Pick initiation) or where
    a failure stopped it.  Shelf tasks: box positions around the pre-place
    pose relative to the target; points are box-centre offsets from the
    target for Place initiation.
    """
    config = config or TaskConfig.default(task)
    env = make_env(config)
    plan = nominal_plan(env)
    pts: list[InitiationPoint] = []
    if config.task is Task.PICK_PLACE:
        lo_b, hi_b = env.wall_faces_b()
        half = 0.5 * config.object_side
        (a_lo, a_hi), _ = env.object_range()
        for a in np.linspace(a_lo, a_hi, resolution):
            for b in np.linspace(lo_b + half, hi_b - half, resolution):
                s0 = env.make_state(env.home_position(), (float(a), float(b)), seed=0)
                approach = execute_suffix(env, s0, plan, 1, record=False, end_index=1)
                ee = approach.final_state.ee_pose.center
                if approach.outcome is Outcome.FAILURE:
                    pts.append(InitiationPoint(ee[0], ee[1], 0, 1, 0))
                    continue
                tail = execute_suffix(env, approach.final_state, plan, 2, record=False)
                pts.append(InitiationPoint(ee[0], ee[1], int(tail.outcome is Outcome.GOAL),
                                           int(tail.outcome is Outcome.FAILURE),
                                           int(tail.outcome is Outcome.TIMEOUT)))
        return pts
    # shelf: grasp the box, then hold it at offsets from the target in front of the shelf
    place = len(plan)
    s0, _ = env.reset(0)
    grab = execute_suffix(env, s0, plan, 1, record=False, end_index=1)
    s1 = grab.final_state
    t = s1.scene.target
    box = s1.object_pose
    for da in np.linspace(-0.25, -0.15, resolution):
        for db in np.linspace(-0.04, 0.04, resolution):
            shift = (t[0] + da - box.center[0], t[1] + db - box.center[1])
            cand = dataclasses.replace(s1, ee_pose=s1.ee_pose.moved(*shift), object_pose=box.moved(*shift))
            if not env.is_valid(cand):
                continue
            tail = execute_suffix(env, cand, plan, place, record=False)
            pts.append(InitiationPoint(float(da), float(db), int(tail.outcome is Outcome.GOAL),
                                       int(tail.outcome is Outcome.FAILURE),
                                       int(tail.outcome is Outcome.TIMEOUT)))
    return pts


def failures_near_walls(points: Sequence[InitiationPoint], config: Optional[TaskConfig] = None) -> float:
    """Fraction of PickPlace2D failure points whose fingers are within one finger width of the top/bottom wall."""
    config = config or TaskConfig.default(Task.PICK_PLACE)
    env = make_env(config)
    lo_b, hi_b = env.wall_faces_b()
    reach = 0.5 * config.finger_span
    fails = [p for p in points if p.failed]
    if not fails:
        return float("nan")
    near = [p for p in fails
            if min(p.coord_b - reach - lo_b, hi_b - (p.coord_b + reach)) <= config.finger_width + 1e-9]
    return len(near) / len(fails)


# -- output ------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(round(v, 10))
    return str(v)


def _csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def curve_csv(curve: Sequence[dict]) -> str:
    return _csv(CURVE_FIELDS, ([row[k] for k in CURVE_FIELDS] for row in curve))


def option_usage_csv(entries: Sequence[tuple[str, str, int, list[list[int]]]]) -> str:
    k = max((len(h[0]) for *_, h in entries if h), default=0)
    header = ["method", "task", "seed", "round"] + [f"option_{i}" for i in range(1, k + 1)]
    rows = []
    for method, task, seed, hist in entries:
        for r, counts in enumerate(hist, start=1):
            rows.append([method, task, seed, r] + list(counts))
    return _csv(header, rows)


def results_csv(results: Sequence[ExperimentResult]) -> str:
    header = ["method", "task", "success_mean", "recovery_mean", "recovery_ci95", "rollout_sim_steps", "seeds",
              "success_per_seed"]
    return _csv(header, ([r.row()[h] for h in header] for r in results))


def initiation_csv(points: Sequence[InitiationPoint]) -> str:
    return _csv(["coord_a", "coord_b", "in_precondition", "failed", "timeout"],
                ([p.coord_a, p.coord_b, p.in_precondition, p.failed, p.timeout] for p in points))


def write_experiment(result: ExperimentResult, out: Path) -> None:
    curves = out / "curves"
    curves.mkdir(parents=True, exist_ok=True)
    spec = result.spec
    for s in result.seeds:
        if s.curve:
            (curves / f"{spec.method}_{spec.task.value}_{s.seed}.csv").write_text(curve_csv(s.curve))
        if s.policy is not None:
            ckpt = out / "checkpoints"
            ckpt.mkdir(exist_ok=True)
            save_checkpoint(ckpt / f"{spec.method}_{spec.task.value}_{s.seed}.npz", s.policy,
                            spec.ppo.replace(seed=s.seed))
    # wall time is not deterministic, so it lives outside the CSV artifacts
    timing = {f"{spec.method}_{spec.task.value}_{s.seed}": round(s.wall_time, 3) for s in result.seeds}
    tpath = out / "timings.json"
    old = json.loads(tpath.read_text()) if tpath.exists() else {}
    old.update(timing)
    tpath.write_text(json.dumps(old, indent=1, sort_keys=True))
