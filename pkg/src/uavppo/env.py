"""UAV data-collection MDP with a hybrid (allocation, displacement) action.

Each slot the UAV first moves by the commanded displacement, then every
MDC with a channel assignment and data left transmits over the current
fading realisation. Co-channel MDCs interfere with each other.
"""
from __future__ import annotations

import csv
import dataclasses
import functools
import re
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from . import channel
from .channel import RadioConfig

REWARD_MODES = ("shaped", "literal")
CLAMP_MODES = ("box", "norm")


@dataclass(frozen=True)
class EnvConfig:
    radio: RadioConfig = field(default_factory=RadioConfig)
    n_mdcs: int = 5
    n_channels: int = 3
    area_m: float = 200.0
    v_max: float = 10.0
    t_slot: float = 0.5
    data_size_bits: float = 50e6
    t_max: int = 400
    r_time: float = -1.0
    r_fail: float = -400.0
    r_penalty: float = -5.0
    # None -> seeded uniform placement from ``placement_seed``
    mdc_positions: Optional[tuple] = None
    placement_seed: int = 0
    # None -> centre of the area
    uav_start: Optional[tuple] = None
    reward_mode: str = "shaped"
    # None -> |r_time|
    w_data: Optional[float] = None
    clamp_mode: str = "box"

    def __post_init__(self):
        if isinstance(self.radio, dict):
            object.__setattr__(self, "radio", RadioConfig(**self.radio))
        if self.n_mdcs < 1 or self.n_channels < 1:
            raise ValueError("n_mdcs and n_channels must be >= 1")
        if not (self.area_m > 0 and self.v_max > 0 and self.t_slot > 0):
            raise ValueError("area_m, v_max and t_slot must be > 0")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if not self.r_time < 0:
            raise ValueError("r_time must be < 0")
        if not self.r_fail < self.r_time:
            raise ValueError("r_fail must be < r_time")
        if not self.r_penalty < 0:
            raise ValueError("r_penalty must be < 0")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if self.clamp_mode not in CLAMP_MODES:
            raise ValueError(f"clamp_mode must be one of {CLAMP_MODES}")

        if self.mdc_positions is None:
            rng = np.random.default_rng(self.placement_seed)
            pos = rng.uniform(0.0, self.area_m, size=(self.n_mdcs, 2))
        else:
            pos = np.asarray(self.mdc_positions, dtype=float)
        if pos.shape != (self.n_mdcs, 2):
            raise ValueError(f"mdc_positions must have shape ({self.n_mdcs}, 2), got {pos.shape}")
        if np.any(pos < 0) or np.any(pos > self.area_m):
            raise ValueError("all mdc_positions must lie in [0, area_m]^2")
        object.__setattr__(self, "mdc_positions", tuple(tuple(float(v) for v in p) for p in pos))

        start = self.uav_start
        if start is None:
            start = (self.area_m / 2, self.area_m / 2)
        object.__setattr__(self, "uav_start", tuple(float(v) for v in start))

    @property
    def n_actions(self) -> int:
        return (self.n_channels + 1) ** self.n_mdcs

    @property
    def max_step(self) -> float:
        """Per-axis displacement bound ``t_slot * v_max``."""
        return self.t_slot * self.v_max

    @property
    def data_weight(self) -> float:
        return abs(self.r_time) if self.w_data is None else self.w_data

    @property
    def discrete_state_dim(self) -> int:
        return self.n_mdcs + self.n_mdcs * self.n_channels

    @property
    def continuous_state_dim(self) -> int:
        return self.discrete_state_dim + 2

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mdc_positions"] = [list(p) for p in self.mdc_positions]
        d["uav_start"] = list(self.uav_start)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        d = dict(d)
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise KeyError(f"unknown env config key: {sorted(unknown)[0]!r}")
        radio = d.pop("radio", {})
        if isinstance(radio, dict):
            bad = set(radio) - {f.name for f in dataclasses.fields(RadioConfig)}
            if bad:
                raise KeyError(f"unknown radio config key: {sorted(bad)[0]!r}")
            radio = RadioConfig(**radio)
        if d.get("mdc_positions") is not None:
            d["mdc_positions"] = tuple(tuple(p) for p in d["mdc_positions"])
        if d.get("uav_start") is not None:
            d["uav_start"] = tuple(d["uav_start"])
        return cls(radio=radio, **d)


class YamlLoader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``5e-8``) as floats."""


YamlLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^[-+]?(?:[0-9][0-9_]*\.[0-9_]*(?:[eE][-+]?[0-9]+)?|\.[0-9_]+(?:[eE][-+]?[0-9]+)?
    |[0-9][0-9_]*[eE][-+]?[0-9]+|\.(?:inf|Inf|INF)|[-+]\.(?:inf|Inf|INF)|\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def load_yaml(stream):
    return yaml.load(stream, Loader=YamlLoader)


def save_scenario(cfg: EnvConfig, path) -> None:
    """Write ``cfg`` as a YAML scenario file (field names as in EnvConfig)."""
    with open(path, "w") as f:
        yaml.safe_dump(cfg.to_dict(), f, sort_keys=False)


def load_scenario(path) -> EnvConfig:
    with open(path) as f:
        return EnvConfig.from_dict(load_yaml(f) or {})


@dataclass
class EnvState:
    u_res: np.ndarray
    uav_xy: np.ndarray
    fading_sq: np.ndarray
    step: int = 0

    def copy(self) -> "EnvState":
        return EnvState(self.u_res.copy(), self.uav_xy.copy(), self.fading_sq.copy(), self.step)


@dataclass
class StepOutcome:
    r_ch: float
    r_traj: float
    collected_bits: np.ndarray
    done: bool
    success: bool


def encode_allocation(alloc, m: int) -> int:
    """Base-(m+1) code of a per-MDC channel vector; MDC 0 is least significant."""
    code = 0
    for i, ch in enumerate(alloc):
        ch = int(ch)
        if not 0 <= ch <= m:
            raise ValueError(f"channel index {ch} of MDC {i} outside 0..{m}")
        code += ch * (m + 1) ** i
    return code


def decode_allocation(action: int, n: int, m: int) -> np.ndarray:
    """Inverse of :func:`encode_allocation`."""
    action = int(action)
    base = m + 1
    if not 0 <= action < base**n:
        raise ValueError(f"encoded action {action} outside 0..{base**n - 1}")
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        action, out[i] = divmod(action, base)
    return out


def gains(state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """``(N, M)`` channel power gains at the current UAV position."""
    d = channel.distance(np.asarray(cfg.mdc_positions), state.uav_xy, cfg.radio.uav_height_m)
    beta = channel.large_scale_gain(cfg.radio, d)
    return channel.channel_gain(cfg.radio, beta[:, None], state.fading_sq)


def slot_rates(state: EnvState, alloc, cfg: EnvConfig) -> np.ndarray:
    """Per-MDC uplink rate (bit/s) under allocation ``alloc``.

    Unassigned MDCs and MDCs with no data left are silent: zero rate and no
    interference.
    """
    alloc = np.asarray(alloc, dtype=np.int64)
    active = (alloc > 0) & (state.u_res > 0)
    rates = np.zeros(cfg.n_mdcs)
    if not active.any():
        return rates
    idx = np.flatnonzero(active)
    ch = alloc[idx]
    g = gains(state, cfg)[idx, ch - 1]
    received = cfg.radio.tx_power_w * channel.cnr(cfg.radio, g)
    per_channel = np.bincount(ch, weights=received, minlength=cfg.n_channels + 1)
    interference = per_channel[ch] - received
    rates[idx] = channel.rate(cfg.radio, received / (1.0 + interference))
    return rates


def clamp_displacement(a_traj, cfg: EnvConfig) -> np.ndarray:
    """Clip a displacement to the per-axis box, or to the speed disc in norm mode."""
    a = np.asarray(a_traj, dtype=float).reshape(2)
    bound = cfg.max_step
    if cfg.clamp_mode == "norm":
        norm = np.hypot(a[0], a[1])
        return a * (bound / norm) if norm > bound else a
    return np.clip(a, -bound, bound)


def in_region(xy, cfg: EnvConfig) -> bool:
    return bool(0.0 <= xy[0] <= cfg.area_m and 0.0 <= xy[1] <= cfg.area_m)


def is_terminal(state: EnvState, cfg: EnvConfig) -> bool:
    return bool(state.u_res.max() <= 0 or state.step > cfg.t_max)


def reset(cfg: EnvConfig, rng: np.random.Generator) -> EnvState:
    return EnvState(
        u_res=np.full(cfg.n_mdcs, float(cfg.data_size_bits)),
        uav_xy=np.array(cfg.uav_start, dtype=float),
        fading_sq=channel.sample_fading(cfg.radio, rng, cfg.n_mdcs, cfg.n_channels),
        step=0,
    )


def step(state: EnvState, a_ch: int, a_traj, cfg: EnvConfig, rng: np.random.Generator):
    """Advance one slot. Returns ``(next_state, StepOutcome)``."""
    if is_terminal(state, cfg):
        raise RuntimeError("step() called on a terminal state")
    alloc = decode_allocation(a_ch, cfg.n_mdcs, cfg.n_channels)
    moved = EnvState(
        u_res=state.u_res,
        uav_xy=state.uav_xy + clamp_displacement(a_traj, cfg),
        fading_sq=state.fading_sq,
        step=state.step,
    )
    rates = slot_rates(moved, alloc, cfg)
    collected = np.minimum(state.u_res, cfg.t_slot * rates)
    u_res = state.u_res - collected

    t = state.step + 1
    U = cfg.data_size_bits
    if t > cfg.t_max:
        r_ch = cfg.r_fail
    elif cfg.reward_mode == "literal":
        r_ch = cfg.r_time / U * float(np.sum(cfg.t_slot * rates))
    else:
        r_ch = cfg.r_time + cfg.data_weight * float(collected.sum()) / U
    r_traj = r_ch if in_region(moved.uav_xy, cfg) else r_ch + cfg.r_penalty

    success = bool(u_res.max() <= 0)
    nxt = EnvState(
        u_res=u_res,
        uav_xy=moved.uav_xy,
        fading_sq=channel.sample_fading(cfg.radio, rng, cfg.n_mdcs, cfg.n_channels),
        step=t,
    )
    return nxt, StepOutcome(float(r_ch), float(r_traj), collected, success or t > cfg.t_max, success)


@functools.lru_cache(maxsize=64)
def _gain_feature_scale(cfg: EnvConfig):
    H, L = cfg.radio.uav_height_m, cfg.area_m
    near = np.log10(channel.large_scale_gain(cfg.radio, H))
    far = np.log10(channel.large_scale_gain(cfg.radio, np.sqrt(2 * L**2 + H**2)))
    return (near + far) / 2, max((near - far) / 2, 1e-12)


def state_vector_discrete(state: EnvState, cfg: EnvConfig) -> np.ndarray:
    """Normalised remaining data followed by log-compressed channel gains."""
    c1, c2 = _gain_feature_scale(cfg)
    h = np.maximum(gains(state, cfg), 1e-300)
    feat = np.clip((np.log10(h) - c1) / c2, -5.0, 5.0)
    return np.concatenate([state.u_res / cfg.data_size_bits, feat.ravel()])


def state_vector_continuous(state: EnvState, cfg: EnvConfig) -> np.ndarray:
    return np.concatenate([state_vector_discrete(state, cfg), state.uav_xy / cfg.area_m])


class UavEnv:
    """Stateful convenience wrapper around :func:`reset` / :func:`step`."""

    def __init__(self, cfg: EnvConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.state: Optional[EnvState] = None
        self._obs = None

    def reset(self) -> EnvState:
        self.state = reset(self.cfg, self.rng)
        self._obs = None
        return self.state

    def step(self, a_ch: int, a_traj) -> StepOutcome:
        self.state, out = step(self.state, a_ch, a_traj, self.cfg, self.rng)
        self._obs = None
        return out

    def obs_discrete(self) -> np.ndarray:
        if self._obs is None:
            self._obs = state_vector_discrete(self.state, self.cfg)
        return self._obs

    def obs_continuous(self) -> np.ndarray:
        return np.concatenate([self.obs_discrete(), self.state.uav_xy / self.cfg.area_m])


TRACE_HEADER = ["step", "x_uav", "y_uav", "alloc_encoded", "r_ch", "r_traj", "collected_total"]


def write_trace(path, rows, n_mdcs: int) -> None:
    """Write an episode trace CSV; ``rows`` are dicts keyed by the header names
    plus ``u_res`` (length-N sequence)."""
    header = TRACE_HEADER + [f"u_res_{i}" for i in range(n_mdcs)]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in rows:
            w.writerow([r[k] for k in TRACE_HEADER] + [repr(float(u)) for u in r["u_res"]])
