"""Proximal policy optimization in plain numpy.

Discrete actions, tanh MLPs with hand-written backprop, Adam, GAE.  The
policy and value heads share the input but not their hidden layers.
Everything random (initialisation, action sampling, minibatch order) is drawn
from generators derived from ``PPOConfig.seed``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence

import numpy as np


@dataclass(frozen=True)
class PPOConfig:
    rollout_steps: int = 120
    minibatch_size: int = 60
    learning_rate: float = 3e-4
    entropy_coef: float = 0.0
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    epochs_per_update: int = 10
    value_coef: float = 0.5
    max_grad_norm: Optional[float] = 0.5
    hidden: tuple[int, ...] = (64, 64)
    total_timesteps: int = 100_000
    adam_eps: float = 1e-8
    normalize_advantages: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("rollout_steps", "minibatch_size", "epochs_per_update", "total_timesteps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.learning_rate <= 0 or self.clip_epsilon <= 0 or self.value_coef < 0:
            raise ValueError("learning_rate and clip_epsilon must be positive, value_coef >= 0")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")

    @staticmethod
    def paper_scale(**overrides) -> "PPOConfig":
        """Hidden [256, 256] with the 500k-step budget; pass total_timesteps=200_000 for the shorter one."""
        return replace(PPOConfig(hidden=(256, 256), total_timesteps=500_000), **overrides)

    def replace(self, **changes) -> "PPOConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


# -- network -----------------------------------------------------------------

def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class MLP:
    """tanh hidden layers, linear output.  Weights are (in, out)."""

    def __init__(self, sizes: Sequence[int], rng: Optional[np.random.Generator] = None,
                 out_gain: float = 1.0, zero: bool = False):
        self.sizes = tuple(int(s) for s in sizes)
        self.W: list[np.ndarray] = []
        self.b: list[np.ndarray] = []
        n = len(self.sizes) - 1
        for k, (i, o) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if zero or rng is None:
                w = np.zeros((i, o))
            else:
                w = _orthogonal(rng, i, o, out_gain if k == n - 1 else math.sqrt(2.0))
            self.W.append(w)
            self.b.append(np.zeros(o))

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.W, self.b):
            out += [w, b]
        return out

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [x]
        h = x
        last = len(self.W) - 1
        for k, (w, b) in enumerate(zip(self.W, self.b)):
            h = h @ w + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def backward(self, acts: list[np.ndarray], dout: np.ndarray) -> list[np.ndarray]:
        grads: list[np.ndarray] = [None] * (2 * len(self.W))  # type: ignore[list-item]
        g = dout
        for k in range(len(self.W) - 1, -1, -1):
            inp = acts[k]
            grads[2 * k] = inp.T @ g
            grads[2 * k + 1] = g.sum(axis=0)
            if k > 0:
                g = (g @ self.W[k].T) * (1.0 - acts[k] ** 2)
        return grads


class PolicyNetwork:
    """Policy logits and state value from the same observation."""

    def __init__(self, obs_dim: int, num_actions: int, hidden: Sequence[int] = (64, 64),
                 rng: Optional[np.random.Generator] = None, zero: bool = False):
        self.obs_dim = int(obs_dim)
        self.num_actions = int(num_actions)
        self.hidden = tuple(hidden)
        self.pi = MLP((obs_dim, *hidden, num_actions), rng, out_gain=0.01, zero=zero)
        self.vf = MLP((obs_dim, *hidden, 1), rng, out_gain=1.0, zero=zero)

    def params(self) -> list[np.ndarray]:
        return self.pi.params() + self.vf.params()

    def set_params(self, values: Sequence[np.ndarray]) -> None:
        for p, v in zip(self.params(), values):
            p[...] = v

    def _check(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape[-1] != self.obs_dim:
            raise ValueError(f"observation has {obs.shape[-1]} features, network expects {self.obs_dim}")
        return obs

    def forward(self, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        obs = self._check(obs)
        logits, _ = self.pi.forward(obs)
        value, _ = self.vf.forward(obs)
        if not np.all(np.isfinite(logits)):
            raise FloatingPointError("non-finite logits")
        return logits, value[..., 0]

    def probs(self, obs: np.ndarray) -> np.ndarray:
        logits, _ = self.forward(obs)
        return softmax(logits)

    def act_greedy(self, obs: np.ndarray) -> int:
        logits, _ = self.pi.forward(self._check(obs))
        return int(np.argmax(logits))

    def param_hash(self) -> str:
        import hashlib
        h = hashlib.sha256()
        for p in self.params():
            h.update(np.ascontiguousarray(p).tobytes())
        return h.hexdigest()[:16]


def forward(net: PolicyNetwork, obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return net.forward(obs)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# -- advantage estimation ----------------------------------------------------

def gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray, last_value: float,
        gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets.

    ``dones[t]`` means step t ended its episode, so nothing is bootstrapped
    past it (terminal value 0).  ``last_value`` bootstraps a buffer that
    stops mid-episode.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    n = len(rewards)
    adv = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        if dones[t]:
            next_v, cont = 0.0, 0.0
        else:
            next_v = last_value if t == n - 1 else values[t + 1]
            cont = 1.0
        delta = rewards[t] + gamma * next_v - values[t]
        running = delta + gamma * lam * cont * running
        adv[t] = running
    return adv, adv + values


# -- loss and gradients ------------------------------------------------------

@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    old_logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def ppo_loss_and_grads(net: PolicyNetwork, batch: Batch, config: PPOConfig
                       ) -> tuple[float, dict, list[np.ndarray]]:
    """Total loss, statistics, and exact gradients for every parameter of ``net``."""
    n = len(batch.actions)
    adv = batch.advantages
    if config.normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    logits, pi_acts = net.pi.forward(batch.obs)
    vout, vf_acts = net.vf.forward(batch.obs)
    values = vout[:, 0]
    logp_all = log_softmax(logits)
    p = np.exp(logp_all)
    idx = np.arange(n)
    logp = logp_all[idx, batch.actions]
    ratio = np.exp(logp - batch.old_logp)
    eps = config.clip_epsilon
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    s1, s2 = ratio * adv, clipped * adv
    pg_loss = -np.mean(np.minimum(s1, s2))
    # the unclipped branch carries gradient whenever it is the active minimum
    active = (s1 <= s2) | ((ratio >= 1.0 - eps) & (ratio <= 1.0 + eps))
    dlogp = np.where(active, -adv * ratio, 0.0) / n
    dlogits = -p * dlogp[:, None]
    dlogits[idx, batch.actions] += dlogp

    entropy = -(p * logp_all).sum(axis=1)
    ent_mean = float(entropy.mean())
    if config.entropy_coef:
        # d(-c * mean H)/dz = c * p * (log p + H) / n
        dlogits += config.entropy_coef * p * (logp_all + entropy[:, None]) / n

    diff = values - batch.returns
    v_loss = float(np.mean(diff ** 2))
    dv = (config.value_coef * 2.0 * diff / n)[:, None]

    loss = pg_loss + config.value_coef * v_loss - config.entropy_coef * ent_mean
    grads = net.pi.backward(pi_acts, dlogits) + net.vf.backward(vf_acts, dv)
    stats = {
        "loss": float(loss),
        "policy_loss": float(pg_loss),
        "value_loss": v_loss,
        "entropy": ent_mean,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "approx_kl": float(np.mean(batch.old_logp - logp)),
    }
    return float(loss), stats, grads


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float, eps: float = 1e-8,
                 betas: tuple[float, float] = (0.9, 0.999)):
        self.params = params
        self.lr = lr
        self.eps = eps
        self.b1, self.b2 = betas
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def clip_grad_norm(grads: list[np.ndarray], max_norm: Optional[float]) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-6)
        for g in grads:
            g *= scale
    return norm


@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    terminal_kinds: list
    last_value: float = 0.0
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    @staticmethod
    def empty(capacity: int, obs_dim: int) -> "RolloutBuffer":
        return RolloutBuffer(np.zeros((capacity, obs_dim)), np.zeros(capacity, dtype=np.int64),
                             np.zeros(capacity), np.zeros(capacity), np.zeros(capacity),
                             np.zeros(capacity, dtype=bool), [None] * capacity)

    def compute_advantages(self, gamma: float, lam: float) -> None:
        self.advantages, self.returns = gae(self.rewards, self.values, self.dones,
                                            self.last_value, gamma, lam)


def update(net: PolicyNetwork, opt: Adam, buffer: RolloutBuffer, config: PPOConfig,
           rng: np.random.Generator) -> dict:
    """Several epochs of clipped-surrogate minibatch steps on one buffer."""
    if buffer.advantages is None:
        raise ValueError("compute advantages before updating")
    n = len(buffer.actions)
    mb = min(config.minibatch_size, n)
    agg: dict[str, float] = {}
    count = 0
    for _ in range(config.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            sel = order[start:start + mb]
            batch = Batch(buffer.obs[sel], buffer.actions[sel], buffer.logp[sel],
                          buffer.advantages[sel], buffer.returns[sel])
            loss, stats, grads = ppo_loss_and_grads(net, batch, config)
            if not math.isfinite(loss):
                raise FloatingPointError(f"non-finite PPO loss: {stats}")
            stats["grad_norm"] = clip_grad_norm(grads, config.max_grad_norm)
            opt.step(grads)
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            count += 1
    return {k: v / count for k, v in agg.items()}


# -- training loop -----------------------------------------------------------

class GymLike(Protocol):
    num_actions: int
    obs_dim: int

    def reset(self) -> np.ndarray:
        ...

    def step(self, action: int) -> tuple[Optional[np.ndarray], float, bool, dict]:
        ...


CURVE_FIELDS = ("timesteps", "mean_reward", "recovery_rate", "sim_steps_cumulative", "lazy_hit_rate")


@dataclass
class TrainResult:
    net: PolicyNetwork
    curve: list[dict] = field(default_factory=list)
    option_rounds: list[dict[int, int]] = field(default_factory=list)
    update_stats: list[dict] = field(default_factory=list)


def sample_action(probs: np.ndarray, u: float) -> int:
    c = np.cumsum(probs)
    return int(min(np.searchsorted(c, u * c[-1], side="right"), len(probs) - 1))


def train(env: GymLike, config: PPOConfig,
          evaluator: Optional[Callable[[PolicyNetwork], float]] = None, eval_every: int = 0,
          on_update: Optional[Callable[[int], None]] = None,
          net: Optional[PolicyNetwork] = None) -> TrainResult:
    """Alternate ``rollout_steps`` of interaction with one PPO update.

    Each round logs one learning-curve row; ``evaluator`` (when given) is
    called every ``eval_every`` rounds and on the last round.  Environments
    exposing ``rollout_sim_steps``/``lazy_hits``/``option_calls`` counters
    feed the compute columns, and ``option_of(action)`` the option-usage log.
    """
    init_ss, act_ss, shuf_ss = np.random.SeedSequence(config.seed).spawn(3)
    net = net or PolicyNetwork(env.obs_dim, env.num_actions, config.hidden, np.random.default_rng(init_ss))
    opt = Adam(net.params(), config.learning_rate, config.adam_eps)
    act_rng = np.random.default_rng(act_ss)
    shuf_rng = np.random.default_rng(shuf_ss)
    option_of = getattr(env, "option_of", lambda a: None)
    result = TrainResult(net)
    T = config.rollout_steps
    n_rounds = max(1, config.total_timesteps // T)
    obs = env.reset()
    ep_ret = 0.0
    last_mean = 0.0
    recovery = ""
    steps_done = 0
    for rnd in range(1, n_rounds + 1):
        buf = RolloutBuffer.empty(T, env.obs_dim)
        finished: list[float] = []
        counts: dict[int, int] = {}
        hits0 = getattr(env, "lazy_hits", 0)
        calls0 = getattr(env, "option_calls", 0)
        for t in range(T):
            logits, _ = net.pi.forward(obs)
            value, _ = net.vf.forward(obs)
            logp_all = log_softmax(logits)
            a = sample_action(np.exp(logp_all), act_rng.random())
            opt_i = option_of(a)
            if opt_i is not None:
                counts[opt_i] = counts.get(opt_i, 0) + 1
            nxt, r, done, info = env.step(a)
            buf.obs[t] = obs
            buf.actions[t] = a
            buf.logp[t] = logp_all[a]
            buf.values[t] = value[0]
            buf.rewards[t] = r
            buf.dones[t] = done
            buf.terminal_kinds[t] = info.get("terminal_kind")
            ep_ret += r
            if done:
                finished.append(ep_ret)
                ep_ret = 0.0
                obs = env.reset()
            else:
                obs = nxt
        steps_done += T
        buf.last_value = 0.0 if buf.dones[-1] else float(net.vf.forward(obs)[0][0])
        buf.compute_advantages(config.gamma, config.gae_lambda)
        result.update_stats.append(update(net, opt, buf, config, shuf_rng))
        if on_update is not None:
            on_update(rnd)
        if finished:
            last_mean = float(np.mean(finished))
        if evaluator is not None and ((eval_every and rnd % eval_every == 0) or rnd == n_rounds):
            recovery = float(evaluator(net))
        calls = getattr(env, "option_calls", 0) - calls0
        hits = getattr(env, "lazy_hits", 0) - hits0
        result.curve.append({
            "timesteps": steps_done,
            "mean_reward": last_mean,
            "recovery_rate": recovery,
            "sim_steps_cumulative": getattr(env, "rollout_sim_steps", 0),
            "lazy_hit_rate": hits / calls if calls else 0.0,
        })
        result.option_rounds.append(counts)
    return result


# -- checkpoints ---------------------------------------------------------------

def save_checkpoint(path: str | Path, net: PolicyNetwork, config: Optional[PPOConfig] = None) -> None:
    """``.npz`` with arrays p0..pN (policy trunk then value trunk, W then b per layer)
    and a JSON ``meta`` entry holding the shapes and the training config."""
    meta = {"obs_dim": net.obs_dim, "num_actions": net.num_actions, "hidden": list(net.hidden),
            "config": config.to_dict() if config else None}
    arrays = {f"p{i}": p for i, p in enumerate(net.params())}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path: str | Path) -> PolicyNetwork:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        net = PolicyNetwork(meta["obs_dim"], meta["num_actions"], meta["hidden"], zero=True)
        net.set_params([data[f"p{i}"] for i in range(len(net.params()))])
    return net
