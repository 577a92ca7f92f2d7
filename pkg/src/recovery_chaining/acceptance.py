"""Pass/fail checks over experiment results, shared by ``evaluate --assert`` and the test suite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .discovery import discover_failures
from .harness import ExperimentResult, option_commitment, option_usage_histogram
from .ppo import Batch, PolicyNetwork, PPOConfig, gae, log_softmax, ppo_loss_and_grads
from .rc_mdp import RcTerminal, RecoveryEnv
from .sim import ContractViolation, Task, TaskConfig, make_env
from .skills import nominal_plan


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _find(results: Sequence[ExperimentResult], method: str, task: Task) -> Optional[ExperimentResult]:
    for r in results:
        if r.spec.method == method and r.spec.task is task:
            return r
    return None


def nominal_check(rate: float) -> Check:
    return Check("nominal calibration", 0.65 <= rate <= 0.75, f"PickPlace2D nominal success {100 * rate:.1f}%")


def rc_improvement_check(rc: ExperimentResult) -> Check:
    nom = 100.0 * rc.nominal.success
    return Check("RC improvement", rc.mean_success >= nom + 10.0,
                 f"RC {rc.mean_success:.1f}% vs nominal {nom:.1f}% (need +10)")


def ordering_check(task: Task, rc: ExperimentResult, pp: ExperimentResult, rlr: ExperimentResult) -> Check:
    ok = rc.mean_success >= pp.mean_success and rc.mean_success >= rlr.mean_success \
        and rc.mean_success - rlr.mean_success >= 15.0
    return Check(f"method ordering {task.value}", ok,
                 f"RC {rc.mean_success:.1f} PP {pp.mean_success:.1f} RLR {rlr.mean_success:.1f}")


def lazy_efficiency_check(task: Task, rc: ExperimentResult, lazy: ExperimentResult) -> Check:
    saving = 1.0 - lazy.sim_steps / rc.sim_steps if rc.sim_steps else 0.0
    gap = rc.mean_success - lazy.mean_success
    return Check(f"lazy efficiency {task.value}", saving >= 0.30 and gap <= 5.0,
                 f"rollout sim steps {lazy.sim_steps} vs {rc.sim_steps} ({100 * saving:.0f}% fewer), "
                 f"success gap {gap:.1f} points")


def lazy_soundness_check(results: Sequence[ExperimentResult]) -> Check:
    n = sum(s.audits[0] for r in results for s in r.seeds)
    k = sum(s.audits[1] for r in results for s in r.seeds)
    prec = k / n if n else float("nan")
    return Check("lazy soundness", n > 0 and prec >= 0.90, f"{k}/{n} audited lazy-positive rollouts succeeded")


def pp_ablation_check(pp_runs: Sequence[ExperimentResult], rc: ExperimentResult) -> Check:
    best = max(r.mean_recovery for r in pp_runs)
    return Check("PP ablation", best <= rc.mean_recovery - 0.10,
                 f"best PP actual recovery {100 * best:.1f}% vs RC {100 * rc.mean_recovery:.1f}% "
                 f"(sizes {', '.join(str(r.spec.pp_dataset_size) for r in pp_runs)})")


def table_checks(results: Sequence[ExperimentResult]) -> list[Check]:
    checks = []
    nom = _find(results, "Nominal", Task.PICK_PLACE)
    if nom is not None:
        checks.append(nominal_check(nom.nominal.success))
    rc = _find(results, "RC", Task.PICK_PLACE)
    if rc is not None:
        checks.append(rc_improvement_check(rc))
    for task in Task:
        rc, pp, rlr, lazy = (_find(results, m, task) for m in ("RC", "PP", "RLR", "LazyRC"))
        if rc and pp and rlr:
            checks.append(ordering_check(task, rc, pp, rlr))
        if rc and lazy:
            checks.append(lazy_efficiency_check(task, rc, lazy))
    lazies = [r for r in results if r.spec.method == "LazyRC"]
    if lazies:
        checks.append(lazy_soundness_check(lazies))
    return checks


def commitment_check(rc: ExperimentResult, final_fraction: float = 0.1) -> Check:
    k = len(nominal_plan(make_env(rc.spec.task)))
    hist = [row for s in rc.seeds for row in option_usage_histogram(s.option_rounds[-max(
        1, int(round(len(s.option_rounds) * final_fraction))):], k)]
    share = option_commitment(hist, 1.0)
    return Check("option commitment", share >= 0.80,
                 f"most-used option takes {100 * share:.1f}% of option calls in the final "
                 f"{100 * final_fraction:.0f}% of rounds ({rc.spec.task.value})")


def initiation_check(fraction_near_walls: float, n_failures: int) -> Check:
    return Check("initiation-set export", n_failures > 0 and fraction_near_walls >= 0.90,
                 f"{100 * fraction_near_walls:.1f}% of {n_failures} Pick failure points within one finger "
                 "width of the top/bottom walls")


def determinism_check(first: dict[str, bytes], second: dict[str, bytes]) -> Check:
    same = first.keys() == second.keys() and all(first[k] == second[k] for k in first)
    diff = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    return Check("determinism", same and bool(first),
                 f"{len(first)} CSV files compared" + (f", differing: {', '.join(diff)}" if diff else ", all identical"))


# -- PPO numerics --------------------------------------------------------------

def _brute_gae(rewards, values, dones, last_value, gamma, lam) -> np.ndarray:
    n = len(rewards)
    delta = np.empty(n)
    for t in range(n):
        nv = 0.0 if dones[t] else (last_value if t == n - 1 else values[t + 1])
        delta[t] = rewards[t] + gamma * nv - values[t]
    adv = np.zeros(n)
    for t in range(n):
        coef = 1.0
        for u in range(t, n):
            adv[t] += coef * delta[u]
            if dones[u]:
                break
            coef *= gamma * lam
    return adv


def ppo_numerics_check(seed: int = 0, h: float = 1e-5) -> Check:
    """Finite-difference gradient check, brute-force GAE, and the lambda = 0 / 1 identities."""
    rng = np.random.default_rng(seed)
    net = PolicyNetwork(5, 4, (7, 6), rng)
    cfg = PPOConfig()
    n = 8
    obs = rng.normal(size=(n, 5))
    acts = rng.integers(4, size=n)
    logp = log_softmax(net.forward(obs)[0])[np.arange(n), acts]
    # ratios near 1, all inside the clip range
    batch = Batch(obs, acts, logp + rng.uniform(-0.05, 0.05, n), rng.normal(size=n), rng.normal(size=n))
    _, _, grads = ppo_loss_and_grads(net, batch, cfg)
    worst = 0.0
    for p, g in zip(net.params(), grads):
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            lp = ppo_loss_and_grads(net, batch, cfg)[0]
            p[i] = old - h
            lm = ppo_loss_and_grads(net, batch, cfg)[0]
            p[i] = old
            num = (lp - lm) / (2 * h)
            worst = max(worst, abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-6))

    gae_err = 0.0
    identities = True
    for _ in range(20):
        m = 40
        r, v = rng.normal(size=m), rng.normal(size=m)
        d = np.zeros(m, dtype=bool)
        d[rng.choice(np.arange(3, m - 3), size=2, replace=False)] = True
        last = float(rng.normal())
        gamma, lam = float(rng.uniform(0.9, 1.0)), float(rng.uniform(0.0, 1.0))
        adv, _ = gae(r, v, d, last, gamma, lam)
        gae_err = max(gae_err, float(np.max(np.abs(adv - _brute_gae(r, v, d, last, gamma, lam)))))
        a0, _ = gae(r, v, d, last, gamma, 0.0)
        nxt = np.append(v[1:], last)
        nxt[d] = 0.0
        identities &= bool(np.array_equal(a0, r + gamma * nxt - v))
        a1, _ = gae(r, v, d, last, gamma, 1.0)
        ret = np.empty(m)
        run = last
        for t in range(m - 1, -1, -1):
            run = r[t] + gamma * (0.0 if d[t] else run)
            ret[t] = run
        identities &= bool(np.max(np.abs(a1 - (ret - v))) <= 1e-12)
    ok = worst < 1e-4 and gae_err <= 1e-10 and identities
    return Check("PPO numerics", ok, f"max FD relative error {worst:.2e}, GAE max error {gae_err:.1e}, "
                                     f"lambda identities {'hold' if identities else 'violated'}")


# -- recovery MDP property fuzz ---------------------------------------------------

def mdp_property_fuzz(cases: int = 10_000, seed: int = 0, tasks: Sequence[Task] = tuple(Task),
                      option_prob: float = 0.15) -> Check:
    """Random episodes on every task; counts violations of the wrapper's invariants.

    Checked per case: rewards are 0/1 and match the terminal kind, the episode
    return is 0/1, options always end the episode, a finished episode refuses
    further steps, primitive-only episodes end by the horizon, replayed resets
    are bit-exact, and every option reward equals a fresh single rollout
    (twice, so the estimate is idempotent and independent of the policy).
    """
    rng = np.random.default_rng(seed)
    worlds = []
    for task in tasks:
        cfg = TaskConfig.default(task)
        env = make_env(cfg)
        recs = discover_failures(cfg, nominal_plan(env))
        worlds.append((RecoveryEnv(env, recs, seed=seed), RecoveryEnv(env, recs, seed=seed + 1), recs))
    bad: dict[str, int] = {}

    def fail(name: str) -> None:
        bad[name] = bad.get(name, 0) + 1

    for c in range(cases):
        renv, oracle, recs = worlds[c % len(worlds)]
        reset_seed = int(rng.integers(2 ** 31))
        obs = renv.rc_reset(rng_seed=reset_seed)
        rec = recs[int(np.random.default_rng(reset_seed).integers(len(recs)))]
        if obs.to_vector().tobytes() != rec.observation.to_vector().tobytes() or renv.state != rec.world_state:
            fail("reset replay")
        prims_only = c % 20 == 0
        total, steps, first = 0.0, 0, True
        while True:
            state = renv.state
            if not prims_only and rng.random() < option_prob:
                i = int(rng.integers(1, len(renv.plan) + 1))
                a = renv.option_action_index(i)
            else:
                i, a = None, int(rng.integers(renv.num_primitives))
            res = renv.rc_step(a)
            steps += 1
            total += res.reward
            if res.reward not in (0.0, 1.0):
                fail("reward range")
            if (res.reward == 1.0) != (res.terminal_kind is RcTerminal.GOAL):
                fail("reward iff goal")
            if res.done != (res.terminal_kind is not RcTerminal.NONE):
                fail("done iff terminal")
            if i is not None:
                if not res.done:
                    fail("option not terminal")
                ref = oracle.mc_precondition(state, i)
                if ref != oracle.mc_precondition(state, i):
                    fail("mc idempotent")
                if res.reward != ref:
                    fail("option reward = rollout")
                if first and total != ref:
                    fail("straw-man equivalence")
                if len(oracle._memo) > 50_000:
                    oracle._memo.clear()  # keep the oracle honest and small
            first = False
            if res.done:
                break
        if total not in (0.0, 1.0):
            fail("episode return")
        if steps > renv.horizon:
            fail("horizon")
        try:
            renv.rc_step(0)
            fail("absorption")
        except ContractViolation:
            pass
    detail = f"{cases} cases over {', '.join(t.value for t in tasks)}: "
    detail += "no violations" if not bad else ", ".join(f"{k} x{v}" for k, v in sorted(bad.items()))
    return Check("MDP property suite", not bad, detail)
