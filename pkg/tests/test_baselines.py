import numpy as np
import pytest

from recovery_chaining.baselines import (PP_DATASET_SIZES, OfflinePreconditionModel, collect_nominal_dataset,
                                         fit_pp_model, jitter_state, pp_env, rlr_config, rlr_env)
from recovery_chaining.discovery import discover_failures
from recovery_chaining.rc_mdp import RcTerminal, RecoveryEnv
from recovery_chaining.sim import ContractViolation, PickPlaceEnv, Task, TaskConfig, make_env
from recovery_chaining.skills import Outcome, execute_suffix, nominal_plan

PICK = TaskConfig.default(Task.PICK_PLACE)


@pytest.fixture(scope="module")
def samples():
    return collect_nominal_dataset(PICK, n=40)


@pytest.fixture(scope="module")
def model():
    return fit_pp_model(PICK, 400)


def test_dataset_size_presets():
    assert PP_DATASET_SIZES == (250, 400, 600)
    with pytest.raises(ValueError):
        collect_nominal_dataset(PICK, n=0)


def test_every_skill_labelled_at_each_switch(samples):
    assert len({s.seed for s in samples}) == 40
    assert len(samples) % 4 == 0
    assert {s.skill_index for s in samples} == {1, 2, 3, 4}
    assert {s.label for s in samples} == {0, 1}


def test_labels_match_rollout_oracle(samples):
    env = PickPlaceEnv()
    oracle = RecoveryEnv(env, [])
    rng = np.random.default_rng([0, 40])
    plan = nominal_plan(env)
    # regenerate the states with the same jitter stream and compare labels
    k = 0
    for ep in range(40):
        state, _ = env.reset(200_000 + ep)
        for i in range(1, 5):
            state = jitter_state(env, state, rng)
            for j in range(1, 5):
                assert samples[k].label == oracle.mc_precondition(state, j)
                assert samples[k].observation == env.observe(state)
                k += 1
            step = execute_suffix(env, state, plan, i, record=False, end_index=i)
            if step.outcome is not Outcome.TIMEOUT:
                break
            state = step.final_state
    assert k == len(samples)


def test_successful_episode_labels_positive(samples):
    by_seed = {}
    for s in samples:
        by_seed.setdefault(s.seed, []).append(s)
    wins = 0
    for rows in by_seed.values():
        switches = [rows[k:k + 4] for k in range(0, len(rows), 4)]
        # the episode ran to its last switch and the final skill finished it
        if len(switches) == 4 and switches[-1][3].label == 1:
            wins += 1
            assert all(sw[i].label == 1 for i, sw in enumerate(switches))
    assert wins > 0


def test_jitter_keeps_states_valid():
    env = PickPlaceEnv()
    rng = np.random.default_rng(0)
    s, _ = env.reset(0)
    for _ in range(200):
        j = jitter_state(env, s, rng)
        assert env.is_valid(j)
        assert abs(j.ee_position[0] - s.ee_position[0]) <= 0.04 + 1e-12


def test_unfitted_model_raises():
    m = OfflinePreconditionModel(4, 250)
    with pytest.raises(ContractViolation):
        m.predict(PickPlaceEnv().reset(0)[1])


def test_model_frozen_and_rewards_terminal(model):
    h = model.param_hash()
    env = PickPlaceEnv()
    recs = discover_failures(PICK)
    r = pp_env(env, recs, model)
    assert r.num_actions == 6
    rng = np.random.default_rng(0)
    ends = set()
    for ep in range(50):
        r.rc_reset(rng_seed=ep)
        while True:
            res = r.rc_step(int(rng.integers(6)))
            if res.done:
                ends.add(res.terminal_kind)
                if "handoff_state" in res.info:
                    assert res.reward == 1.0 and res.terminal_kind is RcTerminal.GOAL
                    assert r.handoff_success(res.info) in (0, 1)
                break
    model.check_frozen()
    assert model.param_hash() == h
    assert r.rollouts == 0 and r.rollout_sim_steps == 0


def test_pp_reward_rule(model):
    env = PickPlaceEnv()
    c = env.config.target_bin_center
    held = env.observe(env.make_state(c, c, grasped=True))
    r, term = model.pp_reward(held)
    assert (r, term) == (1, True)


def test_pp_scores_pickplace_failures_outside(model):
    recs = discover_failures(PICK)
    assert sum(model.predict(r.observation)[0] == 0 for r in recs) >= 90


@pytest.mark.xfail(strict=True, reason="the in-hand angle and the true box offset are latent, so most shelf "
                                       "failure observations match successful pre-place observations")
@pytest.mark.parametrize("task", [Task.SHELF, Task.CLUTTERED_SHELF], ids=lambda t: t.value)
def test_pp_scores_shelf_failures_outside(task):
    cfg = TaskConfig.default(task)
    m = fit_pp_model(cfg, 400)
    recs = discover_failures(cfg)
    assert sum(m.predict(r.observation)[0] == 0 for r in recs) >= 90


@pytest.mark.parametrize("task,n", [(Task.PICK_PLACE, 6), (Task.SHELF, 4)], ids=["PickPlace2D", "Shelf2D"])
def test_rlr_is_primitives_only(task, n):
    cfg = TaskConfig.default(task)
    env = make_env(cfg)
    r = rlr_env(env, discover_failures(cfg))
    assert r.num_actions == n and rlr_config()["use_options"] is False
    rng = np.random.default_rng(0)
    for ep in range(30):
        r.rc_reset(rng_seed=ep)
        while not r.rc_step(int(rng.integers(n))).done:
            pass
    assert r.rollouts == 0 and r.rollout_sim_steps == 0 and r.option_calls == 0
