from collections import Counter

import numpy as np
import pytest

from recovery_chaining.discovery import discover_failures
from recovery_chaining.rc_mdp import DEFAULT_RC_HORIZON, RcAction, RcTerminal, RecoveryEnv
from recovery_chaining.sim import ContractViolation, PickPlaceEnv, Primitive, Task, TaskConfig, make_env


@pytest.fixture(scope="module")
def pick():
    env = PickPlaceEnv()
    return env, discover_failures(env.config)


@pytest.fixture
def renv(pick):
    env, recs = pick
    return RecoveryEnv(env, recs)


def test_action_space(renv):
    assert renv.num_actions == 6 + 4
    assert [str(a) for a in renv.actions[-4:]] == ["Option1", "Option2", "Option3", "Option4"]
    assert renv.option_of(renv.option_action_index(3)) == 3
    assert renv.option_of(0) is None
    with pytest.raises(ContractViolation):
        RcAction(primitive=Primitive.TRANSLATE_PLUS_A, option=1)


def test_singleton_dataset(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs[:1])
    for s in range(20):
        assert r.rc_reset(rng_seed=s) == recs[0].observation


def test_uniform_reset_frequencies(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs, seed=3)
    index = {rec.world_state: k for k, rec in enumerate(recs)}
    counts = Counter()
    for _ in range(10_000):
        r.rc_reset()
        counts[index[r.state]] += 1
    assert len(counts) == 100
    assert all(60 <= c <= 140 for c in counts.values())


def test_reset_returns_recorded_observation(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs)
    for rec in recs:
        assert r.reset_to(rec).to_vector().tobytes() == rec.observation.to_vector().tobytes()


def test_empty_dataset_refused(pick):
    env, _ = pick
    with pytest.raises(ContractViolation):
        RecoveryEnv(env, []).rc_reset()


def test_option_from_pre_place_state_succeeds(renv):
    env = renv.env
    c = env.config.target_bin_center
    # box held right over the target bin: only the release is left
    renv.start_from(env.make_state(c, c, grasped=True))
    res = renv.rc_step(renv.option_action_index(4))
    assert (res.reward, res.terminal_kind, res.done) == (1.0, RcTerminal.GOAL, True)
    assert res.info["mc_rollout_performed"] and res.info["rollout_steps_used"] >= 1
    assert res.observation is None


def test_option_from_raw_failure_is_dead(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs)
    dead = 0
    for rec in recs:
        r.reset_to(rec)
        res = r.rc_step(r.option_action_index(rec.plan_skill_index))
        assert res.done
        dead += res.terminal_kind is RcTerminal.DEAD and res.reward == 0.0
    assert dead >= 90


def test_primitive_into_wall_fails(renv):
    env = renv.env
    renv.start_from(env.make_state((0.30, 0.25), (0.45, 0.25)))
    for _ in range(60):
        res = renv.rc_step(RcAction.prim(Primitive.TRANSLATE_MINUS_A))
        if res.done:
            break
    assert (res.reward, res.terminal_kind, res.done) == (0.0, RcTerminal.FAIL, True)


def test_free_primitive_is_silent(renv):
    env = renv.env
    renv.start_from(env.make_state((0.30, 0.25), (0.45, 0.25)))
    res = renv.rc_step(RcAction.prim(Primitive.TRANSLATE_PLUS_B))
    assert (res.reward, res.terminal_kind, res.done) == (0.0, RcTerminal.NONE, False)
    assert res.observation is not None and not res.info["mc_rollout_performed"]


def test_mc_precondition_oracle_cases(renv):
    env = renv.env
    c = env.config.target_bin_center
    goal = env.make_state((c[0], c[1] + 0.15), c)
    assert env.f_goal(goal) == 1
    assert renv.mc_precondition(goal, 4) == 1
    far = env.make_state((0.30, 0.25), (0.50, 0.25))  # box well outside the finger span
    assert renv.mc_precondition(far, 2) == 0
    s = env.make_state((0.30, 0.25), (0.45, 0.25))
    assert renv.mc_precondition(s, 1) == renv.mc_precondition(s, 1)
    with pytest.raises(ContractViolation):
        renv.mc_precondition(s, 5)


def test_straw_man_first_option_return(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs)
    oracle = RecoveryEnv(env, recs)
    for rec in recs[:40]:
        for i in range(1, 5):
            r.reset_to(rec)
            res = r.rc_step(r.option_action_index(i))
            assert res.reward == oracle.mc_precondition(rec.world_state, i)


def test_primitive_only_horizon(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs)
    assert r.horizon == DEFAULT_RC_HORIZON == 120
    # rotate back and forth in place: never a wall, never a goal
    r.reset_to(recs[0])
    n = 0
    while True:
        res = r.rc_step(RcAction.prim(Primitive.ROTATE_PLUS if n % 2 == 0 else Primitive.ROTATE_MINUS))
        n += 1
        if res.done:
            break
    if res.terminal_kind is RcTerminal.DEAD:
        assert n == 120
    assert n <= 120


def test_step_after_done_and_bad_index(renv, pick):
    renv.reset_to(pick[1][0])
    with pytest.raises(ContractViolation):
        renv.rc_step(renv.num_actions)
    with pytest.raises(ContractViolation):
        renv.rc_step(-1)
    renv.rc_step(renv.option_action_index(1))
    with pytest.raises(ContractViolation):
        renv.rc_step(0)


def test_option_unavailable_without_options(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs, use_options=False)
    assert r.num_actions == 6
    r.rc_reset(0)
    with pytest.raises(ContractViolation):
        r.rc_step(RcAction.nominal(1))


def test_rollout_accounting_charges_memo_hits(pick):
    env, recs = pick
    r = RecoveryEnv(env, recs)
    steps = []
    for _ in range(2):
        r.reset_to(recs[0])
        steps.append(r.rc_step(r.option_action_index(1)).info["rollout_steps_used"])
    assert steps[0] == steps[1] > 0
    assert r.rollouts == 2 and r.rollout_sim_steps == 2 * steps[0]


@pytest.mark.parametrize("task", [Task.SHELF, Task.CLUTTERED_SHELF], ids=lambda t: t.value)
def test_shelf_tasks_wrap(task):
    cfg = TaskConfig.default(task)
    env = make_env(cfg)
    recs = discover_failures(cfg)
    r = RecoveryEnv(env, recs)
    assert r.num_actions == 4 + 3
    obs = r.reset()
    assert obs.shape == (r.obs_dim,)
    rng = np.random.default_rng(0)
    total = 0.0
    for _ in range(200):
        _, rew, done, info = r.step(int(rng.integers(r.num_actions)))
        total += rew
        if done:
            assert info["terminal_kind"] is not RcTerminal.NONE
            r.reset()
    assert total >= 0
