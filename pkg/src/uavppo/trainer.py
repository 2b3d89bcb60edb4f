"""Cascaded two-agent rollout and the periodic PPO update loop."""
from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .agents import DqnAgent, PpoAgent, Transition, make_batch
from .env import EnvConfig, UavEnv

DISCRETE_ALGOS = ("ppo", "dqn", "dueling-dqn")

METRIC_COLUMNS = [
    "episode", "mission_time", "success", "sum_r_ch", "sum_r_traj",
    "actor_loss_d", "critic_loss_d", "actor_loss_c", "critic_loss_c", "epsilon",
    "eval_mission_time",
]


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 5000
    horizon: int = 2048
    epochs: int = 10
    batch_size: int = 64
    eval_period: int = 10
    seed: int = 0
    discrete_algo: str = "ppo"
    hidden: Tuple[int, ...] = (128, 128)
    gamma: float = 0.99
    clip: float = 0.2
    gae_lambda: float = 0.0
    lr_actor: float = 3e-4
    lr_critic: float = 1e-3
    ent_coef_c: float = 0.01
    ent_coef_d: float = 0.005
    eps_start: float = 0.5
    eps_end: float = 0.02
    eps_decay_frac: float = 0.4
    dqn_lr: float = 1e-3
    dqn_warmup: int = 1000
    dqn_target_sync: int = 500
    dqn_buffer: int = 50_000
    dqn_batch: int = 64

    def __post_init__(self):
        if self.episodes < 0:
            raise ValueError("episodes must be >= 0")
        if not 1 <= self.batch_size <= self.horizon:
            raise ValueError("batch_size must lie in [1, horizon]")
        if self.discrete_algo not in DISCRETE_ALGOS:
            raise ValueError(f"discrete_algo must be one of {DISCRETE_ALGOS}")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise KeyError(f"unknown train config key: {sorted(unknown)[0]!r}")
        return cls(**d)


def epsilon_at(episode: int, cfg: TrainConfig) -> float:
    """Exponential decay from ``eps_start`` to ``eps_end`` over the first
    ``eps_decay_frac`` of the episode budget, flat afterwards."""
    span = cfg.eps_decay_frac * cfg.episodes
    if span <= 0 or episode >= span:
        return cfg.eps_end
    return cfg.eps_start * (cfg.eps_end / cfg.eps_start) ** (episode / span)


@dataclass
class RolloutBuffer:
    """Aligned discrete/continuous transition sequences for one update round."""

    horizon: int
    discrete: List[Transition] = field(default_factory=list)
    continuous: List[Transition] = field(default_factory=list)

    def add(self, d: Transition, c: Transition) -> None:
        self.discrete.append(d)
        self.continuous.append(c)

    def __len__(self):
        return len(self.continuous)

    def full(self) -> bool:
        return len(self) >= self.horizon

    def flush(self) -> None:
        self.discrete.clear()
        self.continuous.clear()


@dataclass
class EpisodeSummary:
    mission_time: int
    sum_r_ch: float
    sum_r_traj: float
    success: bool
    trace: Optional[list] = None


def build_agents(env_cfg: EnvConfig, cfg: TrainConfig, rng_d: np.random.Generator,
                 rng_c: np.random.Generator):
    if cfg.discrete_algo == "ppo":
        d_agent = PpoAgent(env_cfg.discrete_state_dim, rng_d, n_actions=env_cfg.n_actions,
                           hidden=cfg.hidden, clip=cfg.clip, gamma=cfg.gamma, ent_coef=cfg.ent_coef_d,
                           lr_actor=cfg.lr_actor, lr_critic=cfg.lr_critic)
    else:
        d_agent = DqnAgent(env_cfg.discrete_state_dim, env_cfg.n_actions, rng_d,
                           dueling=cfg.discrete_algo == "dueling-dqn", hidden=cfg.hidden,
                           gamma=cfg.gamma, lr=cfg.dqn_lr, batch_size=cfg.dqn_batch,
                           buffer_size=cfg.dqn_buffer, target_sync=cfg.dqn_target_sync)
    # sigma floor of 1e-3 * t_slot * v_max, expressed in units of t_slot * v_max
    c_agent = PpoAgent(env_cfg.continuous_state_dim, rng_c, hidden=cfg.hidden, clip=cfg.clip,
                       gamma=cfg.gamma, ent_coef=cfg.ent_coef_c, lr_actor=cfg.lr_actor,
                       lr_critic=cfg.lr_critic, sigma_floor=1e-3)
    return d_agent, c_agent


def run_episode(env: UavEnv, d_agent, c_agent, buffer: Optional[RolloutBuffer],
                rng: np.random.Generator, eps: float = 0.0, greedy: bool = False,
                after_step: Optional[Callable] = None, record_trace: bool = False) -> EpisodeSummary:
    """Play one episode: the discrete agent picks the allocation, then the
    continuous agent picks the displacement, then the environment steps.

    Transitions go to ``buffer`` when given; ``after_step(d_tr, c_tr)`` runs
    after each step (the trainer hooks update rounds there).
    """
    cfg = env.cfg
    env.reset()
    s_d, s_c = env.obs_discrete(), env.obs_continuous()
    sum_ch = sum_traj = 0.0
    trace = [] if record_trace else None
    while True:
        a_d, logp_d, v_d = d_agent.act(s_d, rng, eps=eps, greedy=greedy)
        a_c, logp_c, v_c = c_agent.act(s_c, rng, greedy=greedy)
        out = env.step(a_d, np.asarray(a_c) * cfg.max_step)
        s_d2, s_c2 = env.obs_discrete(), env.obs_continuous()
        sum_ch += out.r_ch
        sum_traj += out.r_traj
        if trace is not None:
            st = env.state
            trace.append({"step": st.step, "x_uav": repr(float(st.uav_xy[0])),
                          "y_uav": repr(float(st.uav_xy[1])), "alloc_encoded": int(a_d),
                          "r_ch": repr(out.r_ch), "r_traj": repr(out.r_traj),
                          "collected_total": repr(float(out.collected_bits.sum())),
                          "u_res": st.u_res.copy()})
        if buffer is not None or after_step is not None:
            nv_d = d_agent.value_old(s_d2) if isinstance(d_agent, PpoAgent) else float("nan")
            nv_c = c_agent.value_old(s_c2) if isinstance(c_agent, PpoAgent) else float("nan")
            d_tr = Transition(s_d, a_d, out.r_ch, s_d2, out.done, v_d, nv_d, logp_d)
            c_tr = Transition(s_c, np.asarray(a_c, dtype=float), out.r_traj, s_c2, out.done, v_c, nv_c, logp_c)
            if buffer is not None:
                buffer.add(d_tr, c_tr)
            if after_step is not None:
                after_step(d_tr, c_tr)
        s_d, s_c = s_d2, s_c2
        if out.done:
            return EpisodeSummary(env.state.step, sum_ch, sum_traj, out.success, trace)


def _ppo_round(agent: PpoAgent, transitions: List[Transition], cfg: TrainConfig,
               rng: np.random.Generator):
    batch = make_batch(transitions, cfg.gamma, cfg.gae_lambda)
    a_losses, c_losses = [], []
    n = len(batch)
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            a, c = agent.update(batch.take(perm[start:start + cfg.batch_size]))
            a_losses.append(a)
            c_losses.append(c)
    agent.sync()
    return float(np.mean(a_losses)), float(np.mean(c_losses)), len(a_losses)


def update_round(buffer: RolloutBuffer, d_agent, c_agent, cfg: TrainConfig,
                 rng: np.random.Generator) -> dict:
    """Run ``cfg.epochs`` shuffled minibatch passes for each PPO agent, refresh
    their snapshots and flush the buffer. DQN discrete agents are skipped; they
    learn from their own replay.
    """
    if len(buffer) < cfg.horizon:
        raise ValueError(f"buffer holds {len(buffer)} transitions, horizon is {cfg.horizon}")
    report = {"actor_loss_d": math.nan, "critic_loss_d": math.nan}
    if isinstance(d_agent, PpoAgent):
        a, c, nb = _ppo_round(d_agent, buffer.discrete, cfg, rng)
        report.update(actor_loss_d=a, critic_loss_d=c, batches_d=nb)
    a, c, nb = _ppo_round(c_agent, buffer.continuous, cfg, rng)
    report.update(actor_loss_c=a, critic_loss_c=c, batches_c=nb)
    buffer.flush()
    return report


class Trainer:
    """Holds the environment, both agents and every random stream for one run."""

    def __init__(self, env_cfg: EnvConfig, cfg: TrainConfig):
        self.env_cfg, self.cfg = env_cfg, cfg
        ss = np.random.SeedSequence(cfg.seed)
        r_env, r_eval, r_d, r_c, r_act, r_upd, r_eval_act = (np.random.default_rng(s) for s in ss.spawn(7))
        self.env = UavEnv(env_cfg, r_env)
        self.eval_env = UavEnv(env_cfg, r_eval)
        self.d_agent, self.c_agent = build_agents(env_cfg, cfg, r_d, r_c)
        self.act_rng, self.update_rng, self.eval_rng = r_act, r_upd, r_eval_act
        self.buffer = RolloutBuffer(cfg.horizon)
        self.episode = 0
        self._losses = {}

    @property
    def uses_dqn(self) -> bool:
        return isinstance(self.d_agent, DqnAgent)

    def _after_step(self, d_tr: Transition, c_tr: Transition) -> None:
        if self.uses_dqn:
            agent = self.d_agent
            agent.remember(d_tr.s, d_tr.a, d_tr.r, d_tr.s_next, d_tr.done)
            if len(agent.replay) >= max(self.cfg.dqn_warmup, agent.batch_size):
                self._losses.setdefault("critic_loss_d", []).append(agent.update(self.update_rng))
        if self.buffer.full():
            report = update_round(self.buffer, self.d_agent, self.c_agent, self.cfg, self.update_rng)
            for k in ("actor_loss_d", "critic_loss_d", "actor_loss_c", "critic_loss_c"):
                if not (self.uses_dqn and k.endswith("_d")):
                    self._losses.setdefault(k, []).append(report[k])

    def train_episode(self) -> dict:
        eps = epsilon_at(self.episode, self.cfg)
        self._losses = {}
        summary = run_episode(self.env, self.d_agent, self.c_agent, self.buffer, self.act_rng,
                              eps=eps, after_step=self._after_step)
        self.episode += 1
        row = {
            "episode": self.episode,
            "mission_time": summary.mission_time,
            "success": int(summary.success),
            "sum_r_ch": summary.sum_r_ch,
            "sum_r_traj": summary.sum_r_traj,
            "epsilon": eps,
        }
        for k in ("actor_loss_d", "critic_loss_d", "actor_loss_c", "critic_loss_c"):
            vals = self._losses.get(k)
            row[k] = float(np.mean(vals)) if vals else math.nan
        row["eval_mission_time"] = math.nan
        if self.cfg.eval_period > 0 and self.episode % self.cfg.eval_period == 0:
            row["eval_mission_time"] = self.evaluate().mission_time
        return row

    def evaluate(self, record_trace: bool = False) -> EpisodeSummary:
        """Greedy rollout: epsilon 0, argmax allocation, mean displacement."""
        return run_episode(self.eval_env, self.d_agent, self.c_agent, None, self.eval_rng,
                           greedy=True, record_trace=record_trace)

    def train(self, progress: Optional[Callable[[dict], None]] = None) -> List[dict]:
        rows = []
        while self.episode < self.cfg.episodes:
            row = self.train_episode()
            rows.append(row)
            if progress is not None:
                progress(row)
        return rows


def train(env_cfg: EnvConfig, cfg: TrainConfig, progress=None) -> List[dict]:
    """Run a full training job and return the per-episode metrics table."""
    return Trainer(env_cfg, cfg).train(progress)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_metrics(rows: List[dict], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(METRIC_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in METRIC_COLUMNS])


def read_metrics(path) -> List[dict]:
    with open(path, newline="") as f:
        rows = []
        for r in csv.DictReader(f):
            rows.append({k: (int(v) if k in ("episode", "mission_time", "success") else float(v))
                         for k, v in r.items()})
    return rows


def random_baseline(env_cfg: EnvConfig, episodes: int, seed: int) -> List[int]:
    """Mission times of the uniform-random policy."""
    from .agents import RandomPolicy

    rng_env, rng_act = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    env = UavEnv(env_cfg, rng_env)
    d, c = RandomPolicy(env_cfg.n_actions), RandomPolicy()
    return [run_episode(env, d, c, None, rng_act).mission_time for _ in range(episodes)]


__all__ = [
    "TrainConfig", "RolloutBuffer", "EpisodeSummary", "Trainer", "run_episode", "update_round",
    "train", "epsilon_at", "write_metrics", "read_metrics", "random_baseline",
]
