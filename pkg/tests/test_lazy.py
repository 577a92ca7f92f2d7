from dataclasses import dataclass

import numpy as np
import pytest

from recovery_chaining.lazy import GateDecision, LazyConfig, LazyGate, select_threshold
from recovery_chaining.sim import ContractViolation


@dataclass(frozen=True)
class Obs:
    x: tuple

    def to_vector(self):
        return np.asarray(self.x, dtype=float)


def separable(gate: LazyGate, n: int = 300, seed: int = 0, option: int = 1):
    rng = np.random.default_rng(seed)
    for _ in range(n):
        x = rng.normal(size=3)
        gate.record_outcome(option, Obs(tuple(x)), int(x[0] > 0))


@pytest.fixture
def trained():
    gate = LazyGate(2)
    separable(gate)
    snap = gate.retrain(1)
    assert snap.enabled
    return gate


def test_threshold_boundary_inclusive():
    probs = np.r_[np.full(20, 0.9), np.full(30, 0.3)]
    labels = np.r_[np.ones(19), 0, np.zeros(25), np.ones(5)]
    tau, prec = select_threshold(probs, labels, 0.95)
    assert tau == 0.9 and prec == pytest.approx(0.95)


def test_threshold_smallest_passing():
    probs = np.array([0.1, 0.2, 0.6, 0.7, 0.8])
    labels = np.array([0, 0, 1, 1, 1])
    assert select_threshold(probs, labels, 0.95) == (0.6, 1.0)
    # one false positive among the top four is too many
    tau, _ = select_threshold(probs, np.array([0, 1, 0, 1, 1]), 0.95)
    assert tau == 0.7


def test_threshold_none_when_unreachable():
    assert select_threshold(np.array([0.5, 0.9]), np.array([1, 0]), 0.95) == (None, 0.0)


def test_separable_enables_with_full_precision(trained):
    clf = trained.classifiers[1]
    assert clf.enabled and clf.holdout_precision == 1.0
    assert 0.0 <= clf.threshold <= 1.0


def test_all_negative_stays_disabled():
    gate = LazyGate(1)
    for k in range(200):
        gate.record_outcome(1, Obs((float(k), 0.0)), 0)
    assert not gate.retrain(1).enabled


def test_too_few_samples_disabled():
    gate = LazyGate(1)
    separable(gate, n=49)
    assert not gate.retrain(1).enabled


def test_record_outcome_grows_and_checks_provenance():
    gate = LazyGate(1)
    gate.record_outcome(1, Obs((0.0,)), 1)
    assert len(gate.classifiers[1]) == 1
    with pytest.raises(ContractViolation):
        gate.record_outcome(1, Obs((0.0,)), 1, provenance="lazy")
    with pytest.raises(ContractViolation):
        gate.record_outcome(1, Obs((0.0,)), 2)
    with pytest.raises(ContractViolation):
        gate.record_outcome(3, Obs((0.0,)), 1)
    assert len(gate.classifiers[1]) == 1


def test_retrain_cadence():
    gate = LazyGate(2, LazyConfig(retrain_every=10))
    separable(gate, n=500)
    fired = [gate.on_policy_update(r) for r in range(1, 31)]
    assert [k + 1 for k, f in enumerate(fired) if f] == [10, 20, 30]
    # only the option with new data is refit
    assert gate.retrain_count == 1
    separable(gate, n=10, seed=1)
    for r in range(10):
        gate.on_policy_update(r)
    assert gate.retrain_count == 2


def test_disabled_gate_always_rolls_out():
    gate = LazyGate(1)
    rng = np.random.default_rng(0)
    assert all(gate.gate(1, Obs((1.0, 0.0, 0.0)), rng) is GateDecision.DO_ROLLOUT for _ in range(200))


def test_confident_lazy_fraction(trained):
    rng = np.random.default_rng(7)
    obs = Obs((3.0, 0.0, 0.0))
    snap = trained.classifiers[1].snapshot
    assert snap.prob(obs.to_vector()) >= snap.threshold
    hits = sum(trained.gate(1, obs, rng) is GateDecision.LAZY_POSITIVE for _ in range(10_000))
    assert 0.77 <= hits / 10_000 <= 0.83


def test_below_threshold_rolls_out(trained):
    rng = np.random.default_rng(0)
    obs = Obs((-3.0, 0.0, 0.0))
    snap = trained.classifiers[1].snapshot
    assert snap.prob(obs.to_vector()) < snap.threshold
    assert all(trained.decide(1, obs, rng) == (False, False) for _ in range(500))


def test_audit_counts(trained):
    trained.record_outcome(1, Obs((3.0, 0.0, 0.0)), 1, audited=True)
    trained.record_outcome(1, Obs((3.0, 0.0, 0.0)), 0, audited=True)
    assert trained.audit_counts() == (2, 1) and trained.audit_precision() == 0.5


def test_retrain_deterministic():
    snaps = []
    for _ in range(2):
        gate = LazyGate(1)
        separable(gate, seed=4)
        snaps.append(gate.retrain(1))
    a, b = snaps
    assert (a.threshold, a.holdout_precision, a.enabled) == (b.threshold, b.holdout_precision, b.enabled)
    xs = np.random.default_rng(9).normal(size=(50, 3))
    assert all(a.prob(x) == b.prob(x) for x in xs)


def test_compiled_matches_sklearn(trained):
    snap = trained.classifiers[1].snapshot
    xs = np.random.default_rng(2).normal(size=(100, 3))
    ref = snap.model.predict_proba(xs)[:, 1]
    assert np.max(np.abs(ref - np.array([snap.prob(x) for x in xs]))) < 1e-12


def test_save_load(trained, tmp_path):
    trained.save(tmp_path / "gate.pkl")
    back = LazyGate.load(tmp_path / "gate.pkl")
    x = np.array([0.5, 0.1, -0.2])
    assert back.classifiers[1].snapshot.prob(x) == trained.classifiers[1].snapshot.prob(x)
    assert back.stats() == trained.stats()
    (tmp_path / "bad.pkl").write_bytes(__import__("pickle").dumps([1]))
    with pytest.raises(ContractViolation):
        LazyGate.load(tmp_path / "bad.pkl")


def test_lazy_env_saves_compute_and_never_caches_negatives():
    from recovery_chaining.discovery import discover_failures
    from recovery_chaining.rc_mdp import RcTerminal, RecoveryEnv
    from recovery_chaining.sim import PickPlaceEnv

    env = PickPlaceEnv()
    recs = discover_failures(env.config)
    gate = LazyGate(4)
    plain = RecoveryEnv(env, recs, seed=1)
    lazy = RecoveryEnv(env, recs, seed=1, lazy=gate)
    rng = np.random.default_rng(0)
    for episode in range(600):
        acts = list(rng.integers(6, size=int(rng.integers(0, 6)))) + [6 + int(rng.integers(4))]
        for r in (plain, lazy):
            r.rc_reset(rng_seed=episode)
            for a in acts:
                res = r.rc_step(int(a))
                if res.done:
                    break
            if r is lazy and res.info["lazy"]:
                assert res.reward == 1.0 and res.terminal_kind is RcTerminal.GOAL
            if r is lazy and res.terminal_kind is RcTerminal.DEAD:
                assert res.info["mc_rollout_performed"]
        if episode % 50 == 49:
            for i in gate.classifiers:
                gate.retrain(i)
    assert lazy.rollout_sim_steps <= plain.rollout_sim_steps
    assert lazy.lazy_hits > 0 and lazy.lazy_hits + lazy.rollouts == lazy.option_calls
