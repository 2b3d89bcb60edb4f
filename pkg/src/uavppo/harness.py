"""Experiment presets, multi-seed runs, comparison tables, scenarios and greedy evaluation."""
from __future__ import annotations

import csv
import dataclasses
import json
import os
import platform
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from . import __version__
from .agents import load_agent, save_agent
from .channel import RadioConfig
from .env import EnvConfig, load_yaml, save_scenario, write_trace
from .trainer import METRIC_COLUMNS, Trainer, TrainConfig, read_metrics, write_metrics

CONFIG_PATH_ENV = "UAVPPO_CONFIG_PATH"

# Fixed constant setting shared by every figure preset.
_TABLE_ENV = dict(n_channels=3, area_m=200.0, v_max=10.0)
_TABLE_RADIO = dict(bandwidth_hz=5e6, tx_power_w=5.0, noise_power_w=5e-8)

PRESETS: Dict[str, dict] = {
    "fig-time-50M": dict(n_mdcs=5, data_size_bits=50e6),
    "fig-time-100M": dict(n_mdcs=5, data_size_bits=100e6),
    "fig-reward-50M": dict(n_mdcs=5, data_size_bits=50e6),
    "fig-reward-100M": dict(n_mdcs=5, data_size_bits=100e6),
    "fig-time-50M-8u": dict(n_mdcs=8, data_size_bits=50e6),
    "custom": {},
}

# Desk-scale training defaults used by every preset run.
PRESET_TRAIN = dict(episodes=5000, horizon=256)

ALGOS = {"ppo-ppo": "ppo", "dqn-ppo": "dqn", "dueling-dqn-ppo": "dueling-dqn"}

SMOOTH_WINDOW = 100
FINAL_WINDOW = 500

_ENV_KEYS = {f.name for f in dataclasses.fields(EnvConfig)} - {"radio"}
_RADIO_KEYS = {f.name for f in dataclasses.fields(RadioConfig)}
_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed", "discrete_algo"}


@dataclass(frozen=True)
class ExperimentSpec:
    env: EnvConfig
    train: TrainConfig
    algo: str = "ppo-ppo"
    seeds: Tuple[int, ...] = (0,)
    out_dir: str = "runs"
    tag: str = "custom"

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise ValueError(f"unknown algo {self.algo!r}; valid: {', '.join(ALGOS)}")
        if self.tag not in PRESETS:
            raise ValueError(f"unknown preset {self.tag!r}; valid: {', '.join(PRESETS)}")
        if not self.seeds:
            raise ValueError("seed list is empty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def train_config(self, seed: int) -> TrainConfig:
        return dataclasses.replace(self.train, seed=seed, discrete_algo=ALGOS[self.algo])


def split_overrides(overrides: dict) -> Tuple[dict, dict, dict]:
    """Route flat ``key: value`` overrides to env, radio and train configs."""
    env, radio, train = {}, {}, {}
    for k, v in overrides.items():
        if k in _ENV_KEYS:
            env[k] = v
        elif k in _RADIO_KEYS:
            radio[k] = v
        elif k in _TRAIN_KEYS:
            train[k] = v
        else:
            raise KeyError(f"unknown config key: {k!r}")
    return env, radio, train


def build_spec(preset: str = "fig-time-50M", algo: str = "ppo-ppo", seeds: Sequence[int] = (0,),
               out_dir="runs", overrides: Optional[dict] = None) -> ExperimentSpec:
    """Resolve a preset plus flat overrides into a full experiment spec."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; valid: {', '.join(PRESETS)}")
    env_kw, radio_kw, train_kw = split_overrides(dict(overrides or {}))
    radio = {**_TABLE_RADIO, **radio_kw}
    env = EnvConfig.from_dict({**_TABLE_ENV, **PRESETS[preset], **env_kw, "radio": radio})
    train = TrainConfig.from_dict({**PRESET_TRAIN, **train_kw})
    return ExperimentSpec(env, train, algo, tuple(seeds), str(out_dir), preset)


def config_search_path() -> List[Path]:
    raw = os.environ.get(CONFIG_PATH_ENV, "")
    return [Path(p) for p in raw.split(os.pathsep) if p] + [Path.cwd()]


def find_config(name) -> Path:
    """Locate a config file by path, or by name (with or without extension) on the search path."""
    p = Path(name)
    if p.is_file():
        return p
    for d in config_search_path():
        for cand in (d / name, d / f"{name}.yaml", d / f"{name}.yml", d / f"{name}.json"):
            if cand.is_file():
                return cand
    dirs = ", ".join(str(d) for d in config_search_path())
    raise FileNotFoundError(f"config {name!r} not found (searched: {dirs})")


def load_config_file(name) -> dict:
    """Read a YAML/JSON config. Run manifests are valid config files too.

    Accepted top-level keys: ``preset``, ``algo``, ``seeds``, ``seed``, ``env``,
    ``train``, plus any flat override key.
    """
    path = find_config(name)
    with open(path) as f:
        raw = load_yaml(f) or {}
    out = {"overrides": {}}
    for k, v in raw.items():
        if k in ("preset", "algo"):
            out[k] = v
        elif k == "seeds":
            out["seeds"] = [int(s) for s in v]
        elif k == "seed":
            out["seeds"] = [int(v)]
        elif k == "env":
            v = dict(v)
            for rk, rv in (v.pop("radio", None) or {}).items():
                out["overrides"][rk] = rv
            out["overrides"].update(v)
        elif k == "train":
            v = {tk: tv for tk, tv in v.items() if tk not in ("seed", "discrete_algo")}
            out["overrides"].update(v)
        elif k in ("version", "python", "numpy", "platform"):
            continue
        else:
            out["overrides"][k] = v
    split_overrides(out["overrides"])
    return out


# -- run ----------------------------------------------------------------------

def _check_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise PermissionError(f"output directory {str(path)!r} is not writable: {e}") from e


def manifest(spec: ExperimentSpec, seed: int) -> dict:
    return {
        "version": __version__,
        "preset": spec.tag,
        "algo": spec.algo,
        "seed": seed,
        "env": spec.env.to_dict(),
        "train": spec.train_config(seed).to_dict(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def run_dir(spec: ExperimentSpec, seed: int) -> Path:
    return Path(spec.out_dir) / spec.algo / f"seed-{seed}"


def run_seed(spec: ExperimentSpec, seed: int,
             progress: Optional[Callable[[dict], None]] = None) -> Path:
    """Train one seed; writes ``metrics.csv``, ``manifest.json`` and checkpoints."""
    out = run_dir(spec, seed)
    _check_writable(out)
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest(spec, seed), f, indent=2)
    trainer = Trainer(spec.env, spec.train_config(seed))
    rows = trainer.train(progress)
    write_metrics(rows, out / "metrics.csv")
    save_agent(trainer.d_agent, out / "discrete.npz", {"episode": trainer.episode})
    save_agent(trainer.c_agent, out / "continuous.npz", {"episode": trainer.episode})
    return out


def merge_runs(dirs: Iterable[Path], path) -> None:
    """Stack per-seed metrics into one table keyed by algorithm and seed."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["algorithm", "seed"] + METRIC_COLUMNS)
        for d in dirs:
            meta = read_manifest(d)
            with open(Path(d) / "metrics.csv", newline="") as mf:
                r = csv.reader(mf)
                next(r)
                for row in r:
                    w.writerow([meta["algo"], meta["seed"]] + row)


def run_experiment(spec: ExperimentSpec, progress: Optional[Callable[[int, dict], None]] = None) -> List[Path]:
    """Train every seed in turn and write ``merged.csv`` next to the per-algorithm folders."""
    root = Path(spec.out_dir)
    _check_writable(root)
    dirs = []
    for seed in spec.seeds:
        cb = None if progress is None else (lambda row, s=seed: progress(s, row))
        dirs.append(run_seed(spec, seed, cb))
    merge_runs(dirs, root / f"merged-{spec.algo}.csv")
    return dirs


def read_manifest(run) -> dict:
    with open(Path(run) / "manifest.json") as f:
        return json.load(f)


def spec_from_manifest(run, out_dir=None) -> ExperimentSpec:
    """Rebuild the exact single-seed spec that produced ``run``."""
    m = read_manifest(run)
    train = {k: v for k, v in m["train"].items() if k not in ("seed", "discrete_algo")}
    return ExperimentSpec(EnvConfig.from_dict(m["env"]), TrainConfig.from_dict(train), m["algo"],
                          (m["seed"],), str(out_dir) if out_dir is not None else str(Path(run).parents[1]),
                          m["preset"])


# -- compare --------------------------------------------------------------------

def find_runs(paths: Iterable) -> List[Path]:
    """Every directory under ``paths`` holding both a manifest and a metrics table."""
    found = []
    for p in paths:
        p = Path(p)
        if not p.is_dir():
            continue
        for m in sorted(p.rglob("manifest.json")):
            if (m.parent / "metrics.csv").is_file():
                found.append(m.parent)
    return found


def smooth(x, window: int = SMOOTH_WINDOW) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` points average what is available."""
    x = np.asarray(x, dtype=float)
    c = np.cumsum(np.insert(x, 0, 0.0))
    n = np.arange(1, len(x) + 1)
    lo = np.maximum(n - window, 0)
    return (c[n] - c[lo]) / (n - lo)


@dataclass
class Comparison:
    series: List[dict]
    summary: List[dict]
    n_episodes: int
    notes: List[str] = field(default_factory=list)


def compare(paths: Iterable, final_window: int = FINAL_WINDOW) -> Comparison:
    """Load runs, align them to the shortest, and summarize per algorithm.

    Summary fields: mean mission time and its variance over the final window
    (pooled over seeds), timeout rate over the same window, and ``spread``,
    the mean across episodes of the between-series variance.
    """
    runs = find_runs(paths)
    if not runs:
        raise FileNotFoundError("no runs found")
    series = []
    for d in runs:
        meta = read_manifest(d)
        rows = read_metrics(d / "metrics.csv")
        series.append({"algorithm": meta["algo"], "seed": meta["seed"], "run": str(d),
                       "mission_time": np.array([r["mission_time"] for r in rows], dtype=float),
                       "success": np.array([r["success"] for r in rows], dtype=float),
                       "reward": np.array([r["sum_r_ch"] + r["sum_r_traj"] for r in rows])})
    lengths = {len(s["mission_time"]) for s in series}
    n = min(lengths)
    notes = []
    if len(lengths) > 1:
        notes.append(f"episode counts differ {sorted(lengths)}; aligned to the shortest ({n})")
    for s in series:
        for k in ("mission_time", "success", "reward"):
            s[k] = s[k][:n]

    summary = []
    lo = max(n - final_window, 0)
    for algo in sorted({s["algorithm"] for s in series}):
        group = [s for s in series if s["algorithm"] == algo]
        tail = np.concatenate([s["mission_time"][lo:] for s in group])
        ok = np.concatenate([s["success"][lo:] for s in group])
        stack = np.stack([s["mission_time"] for s in group])
        summary.append({
            "algorithm": algo,
            "runs": len(group),
            "episodes": n,
            "final_mean": float(tail.mean()) if tail.size else float("nan"),
            "final_var": float(tail.var()) if tail.size else float("nan"),
            "timeout_rate": float(1.0 - ok.mean()) if ok.size else float("nan"),
            "spread": float(stack.var(axis=0).mean()) if n else 0.0,
        })
    return Comparison(series, summary, n, notes)


SUMMARY_COLUMNS = ["algorithm", "runs", "episodes", "final_mean", "final_var", "timeout_rate", "spread"]
LONG_COLUMNS = ["algorithm", "seed", "run", "episode", "metric", "raw", "smoothed"]


def write_comparison(cmp: Comparison, out_dir) -> Tuple[Path, Path]:
    """Write ``summary.csv`` and the plot-ready ``series.csv`` (long format)."""
    out = Path(out_dir)
    _check_writable(out)
    with open(out / "summary.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_COLUMNS)
        for s in cmp.summary:
            w.writerow([s[c] if isinstance(s[c], (str, int)) else repr(s[c]) for c in SUMMARY_COLUMNS])
    with open(out / "series.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(LONG_COLUMNS)
        for s in cmp.series:
            for metric in ("mission_time", "reward"):
                raw = s[metric]
                for ep, (v, sm) in enumerate(zip(raw, smooth(raw)), start=1):
                    w.writerow([s["algorithm"], s["seed"], s["run"], ep, metric, repr(float(v)), repr(float(sm))])
    return out / "summary.csv", out / "series.csv"


# -- scenario / eval ------------------------------------------------------------------

def make_scenario(n: int, m: int, area_m: float, seed: int, path, **env_kw) -> EnvConfig:
    """Seeded uniform MDC placement written as a scenario file."""
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    cfg = EnvConfig(n_mdcs=n, n_channels=m, area_m=area_m, placement_seed=seed, **env_kw)
    save_scenario(cfg, path)
    return cfg


def evaluate_run(run, out_path, seed: int = 0) -> dict:
    """Greedy rollout of the checkpointed agents in ``run``; writes the episode trace."""
    m = read_manifest(run)
    env_cfg = EnvConfig.from_dict(m["env"])
    train = TrainConfig.from_dict({**m["train"], "seed": seed})
    trainer = Trainer(env_cfg, train)
    load_agent(trainer.d_agent, Path(run) / "discrete.npz")
    load_agent(trainer.c_agent, Path(run) / "continuous.npz")
    summary = trainer.evaluate(record_trace=True)
    write_trace(out_path, summary.trace, env_cfg.n_mdcs)
    return {"mission_time": summary.mission_time, "success": summary.success,
            "sum_r_ch": summary.sum_r_ch, "sum_r_traj": summary.sum_r_traj}


__all__ = [
    "PRESETS", "ALGOS", "ExperimentSpec", "build_spec", "split_overrides", "find_config",
    "load_config_file", "run_seed", "run_experiment", "merge_runs", "read_manifest",
    "spec_from_manifest", "find_runs", "smooth", "compare", "Comparison", "write_comparison",
    "make_scenario", "evaluate_run",
]
