import numpy as np
import pytest

from recovery_chaining.ppo import (Adam, Batch, MLP, PolicyNetwork, PPOConfig, RolloutBuffer, forward, gae,
                                   load_checkpoint, log_softmax, ppo_loss_and_grads, save_checkpoint,
                                   softmax, train, update)


def _brute_gae(rewards, values, dones, last_value, gamma, lam):
    """Per-step enumeration of sum_l (gamma*lam)^l delta_{t+l} inside each episode."""
    n = len(rewards)
    deltas = []
    for t in range(n):
        if dones[t]:
            nv = 0.0
        else:
            nv = last_value if t == n - 1 else values[t + 1]
        deltas.append(rewards[t] + gamma * nv - values[t])
    adv = np.zeros(n)
    for t in range(n):
        total, coef = 0.0, 1.0
        for u in range(t, n):
            total += coef * deltas[u]
            if dones[u]:
                break
            coef *= gamma * lam
        adv[t] = total
    return adv


def _random_buffer(rng, n=30, episodes=3):
    rewards = rng.normal(size=n)
    values = rng.normal(size=n)
    dones = np.zeros(n, dtype=bool)
    cuts = rng.choice(np.arange(2, n - 2), size=episodes - 1, replace=False)
    dones[cuts] = True
    return rewards, values, dones, float(rng.normal())


def test_gae_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r, v, d, last = _random_buffer(rng)
        gamma, lam = rng.uniform(0.8, 1.0), rng.uniform(0.0, 1.0)
        adv, ret = gae(r, v, d, last, gamma, lam)
        np.testing.assert_allclose(adv, _brute_gae(r, v, d, last, gamma, lam), atol=1e-10, rtol=0)
        np.testing.assert_allclose(ret, adv + v, atol=1e-12)


def test_gae_lambda_zero_is_td_error():
    rng = np.random.default_rng(1)
    r, v, d, last = _random_buffer(rng)
    adv, _ = gae(r, v, d, last, 0.99, 0.0)
    nxt = np.append(v[1:], last)
    nxt[d] = 0.0
    assert np.array_equal(adv, r + 0.99 * nxt - v)


def test_gae_lambda_one_is_mc_return_minus_value():
    rng = np.random.default_rng(2)
    r, v, d, last = _random_buffer(rng)
    gamma = 0.97
    adv, _ = gae(r, v, d, last, gamma, 1.0)
    n = len(r)
    ret = np.zeros(n)
    running = last
    for t in range(n - 1, -1, -1):
        running = r[t] + gamma * (0.0 if d[t] else running)
        ret[t] = running
    np.testing.assert_allclose(adv, ret - v, atol=1e-12, rtol=0)


def test_terminal_steps_do_not_bootstrap():
    adv, _ = gae([0.0, 1.0], [0.5, 0.5], [False, True], last_value=100.0, gamma=0.99, lam=0.95)
    assert adv[1] == pytest.approx(0.5)


def test_zero_network_is_uniform():
    net = PolicyNetwork(5, 4, (8, 8), zero=True)
    logits, value = forward(net, np.ones((3, 5)))
    np.testing.assert_allclose(softmax(logits), 0.25)
    assert np.all(value == 0.0)


def test_hand_computed_tiny_network():
    net = PolicyNetwork(2, 2, (2,), zero=True)
    net.pi.W[0][...] = [[1.0, 0.0], [0.0, -1.0]]
    net.pi.b[0][...] = [0.0, 0.5]
    net.pi.W[1][...] = [[2.0, 0.0], [0.0, 3.0]]
    net.pi.b[1][...] = [0.1, -0.1]
    x = np.array([0.3, 0.2])
    h = np.tanh([0.3, -0.2 + 0.5])
    expected = [2.0 * h[0] + 0.1, 3.0 * h[1] - 0.1]
    logits, _ = net.forward(x)
    np.testing.assert_allclose(logits, expected, atol=1e-15)


def test_softmax_normalised_and_dimension_checked():
    net = PolicyNetwork(6, 5, (16,), np.random.default_rng(0))
    p = net.probs(np.random.default_rng(1).normal(size=(10, 6)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        net.forward(np.zeros(7))


def _batch(rng, net, n=8, jitter=0.05):
    obs = rng.normal(size=(n, net.obs_dim))
    acts = rng.integers(net.num_actions, size=n)
    logp = log_softmax(net.forward(obs)[0])[np.arange(n), acts]
    return Batch(obs, acts, logp + rng.uniform(-jitter, jitter, size=n), rng.normal(size=n), rng.normal(size=n))


@pytest.mark.parametrize("entropy_coef", [0.0, 0.05])
def test_backprop_matches_finite_differences(entropy_coef):
    rng = np.random.default_rng(3)
    net = PolicyNetwork(4, 3, (6, 5), rng)
    cfg = PPOConfig(entropy_coef=entropy_coef)
    batch = _batch(rng, net)
    _, _, grads = ppo_loss_and_grads(net, batch, cfg)
    h = 1e-5
    worst = 0.0
    for p, g in zip(net.params(), grads):
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            lp, _, _ = ppo_loss_and_grads(net, batch, cfg)
            p[i] = old - h
            lm, _, _ = ppo_loss_and_grads(net, batch, cfg)
            p[i] = old
            num = (lp - lm) / (2 * h)
            denom = max(abs(num), abs(g[i]), 1e-6)
            worst = max(worst, abs(num - g[i]) / denom)
    assert worst < 1e-4


def test_entropy_term_is_exactly_zero_with_zero_coefficient():
    rng = np.random.default_rng(4)
    net = PolicyNetwork(4, 3, (6,), rng)
    batch = _batch(rng, net)
    loss, stats, _ = ppo_loss_and_grads(net, batch, PPOConfig(entropy_coef=0.0))
    assert stats["entropy"] > 0
    assert loss == stats["policy_loss"] + 0.5 * stats["value_loss"]


def test_unclipped_ratio_one_gives_policy_gradient():
    rng = np.random.default_rng(5)
    net = PolicyNetwork(4, 3, (6,), rng)
    batch = _batch(rng, net, jitter=0.0)
    cfg = PPOConfig(clip_epsilon=1e12, value_coef=0.0, normalize_advantages=False)
    _, stats, grads = ppo_loss_and_grads(net, batch, cfg)
    # vanilla policy gradient of -mean(A * log pi(a|s))
    n = len(batch.actions)
    logits, acts = net.pi.forward(batch.obs)
    p = softmax(logits)
    dlogits = p * (batch.advantages / n)[:, None]
    dlogits[np.arange(n), batch.actions] -= batch.advantages / n
    ref = net.pi.backward(acts, dlogits)
    for g, r in zip(grads, ref):
        np.testing.assert_allclose(g, r, atol=1e-14)
    assert stats["policy_loss"] == pytest.approx(-np.mean(batch.advantages))


def test_clipping_zeroes_gradient_outside_trust_region():
    rng = np.random.default_rng(6)
    net = PolicyNetwork(3, 2, (4,), rng)
    b = _batch(rng, net, n=4, jitter=0.0)
    b.advantages[:] = 1.0
    b.old_logp[:] -= 1.0  # ratio = e > 1 + eps with positive advantage: clipped
    cfg = PPOConfig(value_coef=0.0, normalize_advantages=False)
    _, stats, grads = ppo_loss_and_grads(net, b, cfg)
    assert stats["clip_fraction"] == 1.0
    assert all(np.all(g == 0) for g in grads[:len(net.pi.params())])


def test_adam_minimises_quadratic():
    x = np.array([3.0, -2.0])
    opt = Adam([x], lr=0.1)
    for _ in range(500):
        opt.step([2 * x])
    assert np.abs(x).max() < 1e-2


class Bandit:
    """One state, three arms paying 0, 0, 1; every episode lasts one step."""

    num_actions = 3
    obs_dim = 2

    def reset(self):
        return np.array([1.0, 0.0])

    def step(self, a):
        return None, float(a == 2), True, {}


def test_bandit_learns_best_arm():
    res = train(Bandit(), PPOConfig(total_timesteps=5000, seed=0))
    p = res.net.probs(np.array([1.0, 0.0]))
    assert p[2] > 0.99


def test_training_is_reproducible():
    a = train(Bandit(), PPOConfig(total_timesteps=600, seed=3))
    b = train(Bandit(), PPOConfig(total_timesteps=600, seed=3))
    assert a.curve == b.curve
    assert a.net.param_hash() == b.net.param_hash()
    c = train(Bandit(), PPOConfig(total_timesteps=600, seed=4))
    assert c.net.param_hash() != a.net.param_hash()


def test_probabilities_stay_normalised_after_updates():
    rng = np.random.default_rng(7)
    net = PolicyNetwork(3, 4, (8,), rng)
    opt = Adam(net.params(), 3e-4)
    buf = RolloutBuffer.empty(120, 3)
    buf.obs[:] = rng.normal(size=(120, 3))
    buf.actions[:] = rng.integers(4, size=120)
    buf.logp[:] = log_softmax(net.forward(buf.obs)[0])[np.arange(120), buf.actions]
    buf.rewards[:] = rng.integers(2, size=120)
    buf.dones[::7] = True
    buf.compute_advantages(0.99, 0.95)
    stats = update(net, opt, buf, PPOConfig(), np.random.default_rng(0))
    assert np.isfinite(stats["loss"])
    np.testing.assert_allclose(net.probs(buf.obs).sum(axis=1), 1.0, atol=1e-9)


def test_config_validation():
    with pytest.raises(ValueError):
        PPOConfig(gamma=0.0)
    with pytest.raises(ValueError):
        PPOConfig(gae_lambda=1.5)
    cfg = PPOConfig.paper_scale()
    assert cfg.hidden == (256, 256) and cfg.total_timesteps == 500_000
    assert cfg.rollout_steps == 120 and cfg.minibatch_size == 60 and cfg.learning_rate == 3e-4


def test_checkpoint_round_trip(tmp_path):
    net = PolicyNetwork(5, 3, (7, 4), np.random.default_rng(0))
    save_checkpoint(tmp_path / "n.npz", net, PPOConfig())
    back = load_checkpoint(tmp_path / "n.npz")
    assert back.param_hash() == net.param_hash()
    x = np.random.default_rng(1).normal(size=(2, 5))
    np.testing.assert_array_equal(back.forward(x)[0], net.forward(x)[0])


def test_mlp_backward_shapes():
    m = MLP((3, 4, 2), np.random.default_rng(0))
    out, acts = m.forward(np.ones((5, 3)))
    grads = m.backward(acts, np.ones_like(out))
    assert [g.shape for g in grads] == [p.shape for p in m.params()]
