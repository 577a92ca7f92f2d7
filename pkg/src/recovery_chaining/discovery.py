"""Failure discovery: run the nominal plan over seeds and keep what breaks.

The dataset file is JSON lines.  Line 1 is a header::

    {"kind": "failure-dataset", "version": 1, "task": ..., "config_hash": ...,
     "config": {...}, "num_records": N, "seeds_run": M}

and each following line is one :class:`FailureRecord` (``FailureRecord.to_dict``):
``seed``, ``failure_kind``, ``plan_skill_index`` (1-based), ``observation`` and
the full true ``world_state``, including the per-episode noise offset.
"""

from __future__ import annotations

import json
import logging
import warnings
from pathlib import Path
from typing import Iterable, Optional

from .records import FailureRecord
from .sim import ContractViolation, TaskConfig, TaskEnv, WorldState, make_env
from .sim.types import ConfigError, Observation
from .skills import NominalPlan, Outcome, nominal_plan, run_nominal

log = logging.getLogger(__name__)

DATASET_KIND = "failure-dataset"
DATASET_VERSION = 1
DEFAULT_NUM_FAILURES = 100
# held-out evaluation failures are drawn from a disjoint seed range
EVAL_SEED_OFFSET = 100_000


class DatasetError(ConfigError):
    """Dataset file unreadable or built from a different configuration."""


def discover_failures(config: TaskConfig, plan: Optional[NominalPlan] = None,
                      num_episodes: int = 1000, max_failures: Optional[int] = DEFAULT_NUM_FAILURES,
                      start_seed: int = 0, out: str | Path | None = None) -> list[FailureRecord]:
    """Run the plan on seeds ``start_seed .. start_seed+num_episodes-1``.

    Stops early once ``max_failures`` records exist (``None`` keeps going).
    Writes the dataset to ``out`` when given.
    """
    if num_episodes <= 0:
        raise ValueError("num_episodes must be positive")
    env = make_env(config)
    plan = plan or nominal_plan(env)
    records: list[FailureRecord] = []
    seeds_run = 0
    for seed in range(start_seed, start_seed + num_episodes):
        trace = run_nominal(env, seed, plan)
        seeds_run += 1
        if trace.outcome is Outcome.FAILURE:
            records.append(trace.failure_record)
            if max_failures is not None and len(records) >= max_failures:
                break
    if not records:
        warnings.warn(f"no failures found in {seeds_run} {config.task.value} episodes; "
                      "recovery training cannot start", RuntimeWarning, stacklevel=2)
    log.info("%s: %d failures in %d episodes", config.task.value, len(records), seeds_run)
    if out is not None:
        save_dataset(out, config, records, seeds_run=seeds_run)
    return records


def eval_failures(config: TaskConfig, count: int = 200, plan: Optional[NominalPlan] = None) -> list[FailureRecord]:
    """Held-out failures for evaluation, disjoint from the training seeds."""
    return discover_failures(config, plan, num_episodes=50 * count, max_failures=count,
                             start_seed=EVAL_SEED_OFFSET)


def save_dataset(path: str | Path, config: TaskConfig, records: Iterable[FailureRecord],
                 seeds_run: Optional[int] = None) -> None:
    records = list(records)
    header = {
        "kind": DATASET_KIND,
        "version": DATASET_VERSION,
        "task": config.task.value,
        "config_hash": config.hash(),
        "config": config.to_dict(),
        "num_records": len(records),
        "seeds_run": seeds_run,
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(r.to_dict(), sort_keys=True) for r in records]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path, config: Optional[TaskConfig] = None) -> tuple[TaskConfig, list[FailureRecord]]:
    """Read a dataset; with ``config`` given, refuse files built from other geometry."""
    text = Path(path).read_text().splitlines()
    if not text:
        raise DatasetError(f"{path}: empty dataset file")
    header = json.loads(text[0])
    if header.get("kind") != DATASET_KIND:
        raise DatasetError(f"{path}: not a failure dataset")
    stored = TaskConfig.from_dict(header["config"])
    if stored.hash() != header["config_hash"]:
        raise DatasetError(f"{path}: header hash does not match its own config")
    if config is not None and config.hash() != header["config_hash"]:
        raise DatasetError(f"{path}: built with config {header['config_hash']}, "
                           f"current config is {config.hash()}; rerun discovery")
    records = [FailureRecord.from_dict(json.loads(line)) for line in text[1:] if line.strip()]
    return stored, records


def reset_to_failure(env: TaskEnv, record: FailureRecord) -> tuple[WorldState, Observation]:
    """Put the simulator back into the recorded failure state."""
    if record.world_state.scene.task is not env.task:
        raise DatasetError(f"record is for {record.world_state.scene.task.value}, env is {env.task.value}")
    state = record.world_state
    obs = env.observe(state)
    if obs != record.observation:
        raise ContractViolation(f"replayed observation differs from the stored one (seed {record.seed})")
    return state, obs
