"""PPO (discrete and continuous) and DQN / dueling-DQN learners."""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import nn
from .nn import Adam, Mlp


@dataclass
class Transition:
    s: np.ndarray
    a: object  # int (discrete) or length-2 array (continuous)
    r: float
    s_next: np.ndarray
    done: bool
    value: float  # old critic at s
    next_value: float  # old critic at s_next
    logp: float  # old policy log-probability of a


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray
    value: np.ndarray
    next_value: np.ndarray
    logp: np.ndarray
    adv: np.ndarray

    def __len__(self):
        return len(self.r)

    def take(self, idx) -> "Batch":
        return Batch(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


def make_batch(transitions: Sequence[Transition], gamma: float, lam: float = 0.0) -> Batch:
    """Stack transitions and attach GAE(lam) advantages from the stored old-critic values.

    ``lam = 0`` gives the one-step TD advantage ``r + gamma V'(s') - V'(s)``.
    Transitions must be in time order for ``lam > 0``.
    """
    if not transitions:
        raise ValueError("empty batch")
    r = np.array([t.r for t in transitions], dtype=float)
    done = np.array([t.done for t in transitions], dtype=bool)
    value = np.array([t.value for t in transitions], dtype=float)
    next_value = np.array([t.next_value for t in transitions], dtype=float)
    delta = r + gamma * np.where(done, 0.0, next_value) - value
    adv = delta.copy()
    if lam > 0:
        for i in range(len(adv) - 2, -1, -1):
            if not done[i]:
                adv[i] += gamma * lam * adv[i + 1]
    return Batch(
        s=np.stack([t.s for t in transitions]),
        a=np.array([t.a for t in transitions]),
        r=r,
        s_next=np.stack([t.s_next for t in transitions]),
        done=done,
        value=value,
        next_value=next_value,
        logp=np.array([t.logp for t in transitions], dtype=float),
        adv=adv,
    )


def normalize(adv: np.ndarray) -> np.ndarray:
    centred = adv - adv.mean()
    std = centred.std()
    return centred / std if std > 1e-8 else centred


def clipped_surrogate(ratio, adv, clip: float):
    """Elementwise ``min(ratio * adv, clip(ratio) * adv)`` and its derivative in ``ratio``."""
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv
    use_unclipped = unclipped <= clipped
    return np.where(use_unclipped, unclipped, clipped), np.where(use_unclipped, adv, 0.0)


class PpoAgent:
    """Actor-critic with frozen old-policy and old-critic snapshots.

    Discrete agents output logits over every encoded allocation. Continuous
    agents output raw ``[m_x, m_y, s_x, s_y]`` mapped to a Gaussian whose mean
    lies in ``[-1, 1]^2``, in units of the per-axis displacement bound, so
    actions of magnitude 1 mean full speed.
    """

    def __init__(self, state_dim: int, rng: np.random.Generator, *, n_actions: Optional[int] = None,
                 hidden: Sequence[int] = (128, 128), clip: float = 0.2, gamma: float = 0.99,
                 ent_coef: float = 0.01, lr_actor: float = 3e-4, lr_critic: float = 1e-3,
                 sigma_floor: float = 1e-3):
        if not 0 < clip < 1:
            raise ValueError("clip must lie in (0, 1)")
        if not 0 < gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        self.discrete = n_actions is not None
        self.n_actions = n_actions
        self.state_dim = state_dim
        self.clip, self.gamma, self.ent_coef = clip, gamma, ent_coef
        self.lr_actor, self.lr_critic = lr_actor, lr_critic
        self.sigma_floor = sigma_floor
        out = n_actions if self.discrete else 4
        self.actor = Mlp.build([state_dim, *hidden, out], rng, out_gain=0.01)
        self.critic = Mlp.build([state_dim, *hidden, 1], rng, out_gain=1.0)
        self.old_actor = self.actor.copy()
        self.old_critic = self.critic.copy()
        self.actor_opt = Adam(self.actor.params(), lr_actor)
        self.critic_opt = Adam(self.critic.params(), lr_critic)

    def sync(self) -> None:
        """Refresh the old-policy and old-critic snapshots from the live nets."""
        self.old_actor.load_params(self.actor)
        self.old_critic.load_params(self.critic)

    def value_old(self, s) -> float:
        return float(self.old_critic.infer(s)[0])

    def act(self, s, rng: np.random.Generator, eps: float = 0.0, greedy: bool = False):
        """Return ``(action, log_prob, old_value)`` from the snapshot policy."""
        s = np.asarray(s, dtype=float)
        if s.shape != (self.state_dim,):
            raise ValueError(f"expected state of shape ({self.state_dim},), got {s.shape}")
        out = self.old_actor.infer(s)
        value = self.value_old(s)
        if self.discrete:
            logp_all = nn.log_softmax(out)
            if greedy:
                a = int(np.argmax(logp_all))
            else:
                a = nn.categorical_sample_eps_greedy(np.exp(logp_all), eps, rng)
            return a, float(logp_all[a]), value
        mu, sigma = nn.gaussian_params(out, self.sigma_floor)
        a = mu.copy() if greedy else mu + sigma * rng.standard_normal(2)
        return a, float(nn.gaussian_logprob(mu, sigma, a)), value

    def logp(self, net: Mlp, s, a) -> np.ndarray:
        out = net.infer(s)
        if self.discrete:
            return nn.log_softmax(out)[np.arange(len(a)), a]
        mu, sigma = nn.gaussian_params(out, self.sigma_floor)
        return nn.gaussian_logprob(mu, sigma, a)

    def critic_loss(self, batch: Batch):
        """Mean squared TD error against ``r + gamma * V'(s')`` (stored, frozen)."""
        if len(batch) == 0:
            raise ValueError("empty batch")
        target = batch.r + self.gamma * np.where(batch.done, 0.0, batch.next_value)
        v = self.critic.forward(batch.s)[:, 0]
        err = v - target
        grads = self.critic.backward((2.0 * err / len(err))[:, None])
        return float(np.mean(err**2)), grads

    def actor_loss(self, batch: Batch, normalize_adv: bool = True):
        """Clipped surrogate plus entropy bonus, as a loss to minimise."""
        n = len(batch)
        if n == 0:
            raise ValueError("empty batch")
        adv = normalize(batch.adv) if normalize_adv else batch.adv
        out = self.actor.forward(batch.s)
        if self.discrete:
            logp_all = nn.log_softmax(out)
            a = batch.a.astype(np.int64)
            logp = logp_all[np.arange(n), a]
            entropy = nn.categorical_entropy(out, logp_all)
        else:
            mu, sigma = nn.gaussian_params(out, self.sigma_floor)
            logp = nn.gaussian_logprob(mu, sigma, batch.a)
            entropy = nn.gaussian_entropy(sigma)
        ratio = np.exp(logp - batch.logp)
        surr, d_surr_d_ratio = clipped_surrogate(ratio, adv, self.clip)
        loss = -np.mean(surr) - self.ent_coef * np.mean(entropy)

        d_logp = -d_surr_d_ratio * ratio / n
        if self.discrete:
            onehot = np.zeros_like(out)
            onehot[np.arange(n), a] = 1.0
            g_out = d_logp[:, None] * (onehot - np.exp(logp_all))
            g_out -= self.ent_coef / n * nn.categorical_entropy_grad(out, logp_all)
        else:
            d_mu, d_sigma = nn.gaussian_logprob_grads(mu, sigma, batch.a)
            d_mu = d_logp[:, None] * d_mu
            d_sigma = d_logp[:, None] * d_sigma - self.ent_coef / n / sigma
            g_out = nn.gaussian_raw_grad(out, d_mu, d_sigma)
        grads = self.actor.backward(g_out)
        return float(loss), grads

    def update(self, batch: Batch):
        """One actor and one critic Adam step on ``batch``; returns the two losses."""
        a_loss, a_grads = self.actor_loss(batch)
        self.actor_opt.step(self.actor.params(), a_grads, self.lr_actor)
        c_loss, c_grads = self.critic_loss(batch)
        self.critic_opt.step(self.critic.params(), c_grads, self.lr_critic)
        return a_loss, c_loss

    def state_arrays(self) -> dict:
        out = {"kind": np.array("ppo")}
        for name in ("actor", "critic", "old_actor", "old_critic"):
            out.update(nn.net_arrays(getattr(self, name), name + "/"))
        out.update(self.actor_opt.state_arrays("actor_opt/"))
        out.update(self.critic_opt.state_arrays("critic_opt/"))
        return out

    def load_state_arrays(self, data) -> None:
        _check_kind(data, "ppo")
        for name in ("actor", "critic", "old_actor", "old_critic"):
            nn.load_net_arrays(getattr(self, name), data, name + "/")
        self.actor_opt.load_state_arrays(data, "actor_opt/")
        self.critic_opt.load_state_arrays(data, "critic_opt/")


def _check_kind(data, kind):
    if str(data["kind"]) != kind:
        raise ValueError(f"checkpoint holds a {str(data['kind'])!r} agent, expected {kind!r}")


class ReplayBuffer:
    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity)
        self.s_next = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.pos = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s_next, done) -> None:
        i = self.pos
        self.s[i], self.a[i], self.r[i], self.s_next[i], self.done[i] = s, a, r, s_next, done
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(self.size, size=batch_size)
        return self.s[idx], self.a[idx], self.r[idx], self.s_next[idx], self.done[idx]


def dueling_combine(out: np.ndarray) -> np.ndarray:
    """``[V, A_1..A_k] -> Q = V + A - mean(A)``."""
    v, adv = out[..., :1], out[..., 1:]
    return v + adv - adv.mean(axis=-1, keepdims=True)


def dueling_backward(grad_q: np.ndarray) -> np.ndarray:
    """Gradient of :func:`dueling_combine` pulled back to ``[V, A]``."""
    g_v = grad_q.sum(axis=-1, keepdims=True)
    g_a = grad_q - grad_q.mean(axis=-1, keepdims=True)
    return np.concatenate([g_v, g_a], axis=-1)


class DqnAgent:
    """Deep Q-learning with a target network; ``dueling=True`` splits the head
    into a state value and per-action advantages."""

    def __init__(self, state_dim: int, n_actions: int, rng: np.random.Generator, *,
                 dueling: bool = False, hidden: Sequence[int] = (128, 128), gamma: float = 0.99,
                 lr: float = 1e-3, batch_size: int = 64, buffer_size: int = 50_000,
                 target_sync: int = 500):
        if buffer_size < batch_size:
            raise ValueError("replay capacity must be >= batch size")
        self.state_dim, self.n_actions = state_dim, n_actions
        self.dueling = dueling
        self.gamma, self.lr, self.batch_size, self.target_sync = gamma, lr, batch_size, target_sync
        self.q = Mlp.build([state_dim, *hidden, n_actions + (1 if dueling else 0)], rng, out_gain=1.0)
        self.target = self.q.copy()
        self.opt = Adam(self.q.params(), lr)
        self.replay = ReplayBuffer(buffer_size, state_dim)
        self.n_updates = 0

    def _q(self, net: Mlp, s, cache: bool = False) -> np.ndarray:
        out = net.forward(s) if cache else net.infer(s)
        return dueling_combine(out) if self.dueling else out

    def q_values(self, s) -> np.ndarray:
        return self._q(self.q, s)

    def act(self, s, rng: np.random.Generator, eps: float = 0.0, greedy: bool = False):
        """epsilon-greedy action; ties go to the lowest index. Returns ``(action, nan, nan)``
        to mirror :meth:`PpoAgent.act`."""
        if not greedy and rng.random() < eps:
            return int(rng.integers(self.n_actions)), float("nan"), float("nan")
        return int(np.argmax(self.q_values(s))), float("nan"), float("nan")

    def remember(self, s, a, r, s_next, done) -> None:
        self.replay.add(s, a, r, s_next, done)

    def td_loss(self, s, a, r, s_next, done):
        """Mean squared TD error and gradients w.r.t. the online network."""
        q_next = self._q(self.target, s_next).max(axis=-1)
        target = r + self.gamma * np.where(done, 0.0, q_next)
        q = self._q(self.q, s, cache=True)
        n = len(r)
        err = q[np.arange(n), a] - target
        grad_q = np.zeros_like(q)
        grad_q[np.arange(n), a] = 2.0 * err / n
        grad_out = dueling_backward(grad_q) if self.dueling else grad_q
        return float(np.mean(err**2)), self.q.backward(grad_out)

    def update(self, rng: np.random.Generator) -> float:
        if len(self.replay) < self.batch_size:
            raise ValueError(f"replay holds {len(self.replay)} transitions, need {self.batch_size}")
        loss, grads = self.td_loss(*self.replay.sample(self.batch_size, rng))
        self.opt.step(self.q.params(), grads, self.lr)
        self.n_updates += 1
        if self.n_updates % self.target_sync == 0:
            self.target.load_params(self.q)
        return loss

    def state_arrays(self) -> dict:
        out = {"kind": np.array("dqn"), "n_updates": np.array(self.n_updates),
               "dueling": np.array(self.dueling)}
        out.update(nn.net_arrays(self.q, "q/"))
        out.update(nn.net_arrays(self.target, "target/"))
        out.update(self.opt.state_arrays("opt/"))
        return out

    def load_state_arrays(self, data) -> None:
        _check_kind(data, "dqn")
        if bool(data["dueling"]) != self.dueling:
            raise ValueError("dueling flag of checkpoint does not match agent")
        nn.load_net_arrays(self.q, data, "q/")
        nn.load_net_arrays(self.target, data, "target/")
        self.opt.load_state_arrays(data, "opt/")
        self.n_updates = int(data["n_updates"])


def save_agent(agent, path, extra: Optional[dict] = None) -> None:
    """Write an agent (networks, snapshots, optimiser state) plus JSON ``extra`` to ``.npz``."""
    arrays = agent.state_arrays()
    arrays["extra"] = np.array(json.dumps(extra or {}))
    np.savez(path, **arrays)


def load_agent(agent, path) -> dict:
    """Restore ``agent`` in place from :func:`save_agent` output; returns ``extra``."""
    with np.load(path) as data:
        agent.load_state_arrays(data)
        return json.loads(str(data["extra"]))


class RandomPolicy:
    """Uniform allocation code (``n_actions`` given) or uniform displacement in the
    per-axis box (``n_actions=None``)."""

    def __init__(self, n_actions: Optional[int] = None):
        self.n_actions = n_actions

    def act(self, s, rng, eps=0.0, greedy=False):
        if self.n_actions is not None:
            return int(rng.integers(self.n_actions)), float("nan"), float("nan")
        return rng.uniform(-1.0, 1.0, size=2), float("nan"), float("nan")


class FixedPolicy:
    """Constant action; handy for hover-style baselines and tests."""

    def __init__(self, action):
        self.action = action

    def act(self, s, rng, eps=0.0, greedy=False):
        a = self.action
        return (np.array(a, dtype=float) if np.ndim(a) else a), float("nan"), float("nan")
