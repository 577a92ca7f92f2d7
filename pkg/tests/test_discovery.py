import dataclasses
import json
import warnings

import pytest

from recovery_chaining.discovery import (DatasetError, discover_failures, eval_failures, load_dataset,
                                         reset_to_failure, save_dataset)
from recovery_chaining.sim import ContractViolation, FailureKind, Task, TaskConfig, make_env
from recovery_chaining.skills import Outcome, execute_suffix, nominal_plan, run_nominal


@pytest.fixture(scope="module", params=list(Task), ids=lambda t: t.value)
def dataset(request):
    cfg = TaskConfig.default(request.param)
    return cfg, discover_failures(cfg)


def test_pickplace_failure_count_over_1000_episodes():
    recs = discover_failures(TaskConfig.default(Task.PICK_PLACE), max_failures=None)
    assert 250 <= len(recs) <= 350


def test_stops_at_100_failures(dataset):
    cfg, recs = dataset
    assert len(recs) == 100
    seeds = [r.seed for r in recs]
    assert seeds == sorted(seeds) and len(set(seeds)) == 100


def test_round_trip_and_bytes_reproducible(dataset, tmp_path):
    cfg, recs = dataset
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    discover_failures(cfg, out=a)
    discover_failures(cfg, out=b)
    assert a.read_bytes() == b.read_bytes()
    header = json.loads(a.read_text().splitlines()[0])
    assert header["config_hash"] == cfg.hash() and header["num_records"] == 100
    loaded_cfg, loaded = load_dataset(a, cfg)
    assert loaded_cfg == cfg
    assert loaded == recs


def test_replay_reproduces_observation(dataset):
    cfg, recs = dataset
    env = make_env(cfg)
    for r in recs:
        _, obs = reset_to_failure(env, r)
        assert obs == r.observation


def test_failures_are_real(dataset):
    cfg, recs = dataset
    env = make_env(cfg)
    plan = nominal_plan(env)
    again = 0
    for r in recs:
        state, _ = reset_to_failure(env, r)
        tr = execute_suffix(env, state, plan, r.plan_skill_index, record=False)
        again += tr.outcome is Outcome.FAILURE
    assert again >= 90


def test_rerunning_the_episode_reports_the_same_failure(dataset):
    cfg, recs = dataset
    env = make_env(cfg)
    plan = nominal_plan(env)
    for r in recs[:30]:
        assert run_nominal(env, r.seed, plan).failure_record == r


def test_failure_kinds(dataset):
    cfg, recs = dataset
    kinds = {r.failure_kind for r in recs}
    if cfg.task is Task.PICK_PLACE:
        assert kinds == {FailureKind.COLLISION}
    else:
        assert FailureKind.SLIP in kinds
    for r in recs:
        if r.failure_kind is FailureKind.SLIP:
            assert r.world_state.object_angle_in_hand != 0.0
    if cfg.task is Task.CLUTTERED_SHELF:
        assert FailureKind.OBSTACLE_DISTURBED in kinds


def test_config_mismatch_is_refused(tmp_path):
    cfg = TaskConfig.default(Task.PICK_PLACE)
    path = tmp_path / "d.jsonl"
    discover_failures(cfg, num_episodes=30, out=path)
    with pytest.raises(DatasetError):
        load_dataset(path, cfg.replace(wall_margin=0.01))
    lines = path.read_text().splitlines()
    hdr = json.loads(lines[0])
    hdr["config"]["wall_margin"] = 0.01
    path.write_text("\n".join([json.dumps(hdr)] + lines[1:]) + "\n")
    with pytest.raises(DatasetError):
        load_dataset(path)


def test_tampered_record_fails_replay():
    cfg = TaskConfig.default(Task.SHELF)
    rec = discover_failures(cfg, num_episodes=40, max_failures=1)[0]
    env = make_env(cfg)
    ws = dataclasses.replace(rec.world_state, obs_noise=(0.0, 0.0))
    with pytest.raises(ContractViolation):
        reset_to_failure(env, dataclasses.replace(rec, world_state=ws))
    with pytest.raises(DatasetError):
        reset_to_failure(make_env(Task.PICK_PLACE), rec)


def test_zero_failures_warns(tmp_path):
    cfg = TaskConfig.default(Task.PICK_PLACE).replace(wall_margin=0.03)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        recs = discover_failures(cfg, num_episodes=20, out=tmp_path / "empty.jsonl")
    assert recs == [] and any(issubclass(x.category, RuntimeWarning) for x in w)
    _, loaded = load_dataset(tmp_path / "empty.jsonl")
    assert loaded == []


def test_eval_failures_are_disjoint_from_training():
    cfg = TaskConfig.default(Task.PICK_PLACE)
    train = {r.seed for r in discover_failures(cfg)}
    held = {r.seed for r in eval_failures(cfg, 50)}
    assert len(held) == 50 and not train & held
