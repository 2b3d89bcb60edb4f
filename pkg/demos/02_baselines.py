"""
Baselines on the 5-MDC preset
=============================

Before training anything it helps to know what no learning achieves: a
uniform-random policy, and hovering at the start point with every MDC on its
own channel where possible.
"""
import numpy as np

from uavppo.agents import FixedPolicy
from uavppo.env import EnvConfig, UavEnv, decode_allocation, encode_allocation
from uavppo.harness import build_spec
from uavppo.trainer import random_baseline, run_episode

env_cfg = build_spec("fig-time-50M").env
print(f"{env_cfg.n_mdcs} MDCs, {env_cfg.n_channels} channels, {env_cfg.n_actions} allocation codes")
print("MDC positions:", np.round(env_cfg.mdc_positions, 1).tolist())

# Allocation vectors are packed into a single integer, one base-(M+1) digit per MDC.
alloc = [1, 2, 3, 1, 2]
code = encode_allocation(alloc, env_cfg.n_channels)
print(f"allocation {alloc} -> code {code} -> {decode_allocation(code, env_cfg.n_mdcs, 3).tolist()}")

times = random_baseline(env_cfg, 200, seed=0)
print(f"random policy: mean mission time {np.mean(times):.1f} slots (std {np.std(times):.1f})")

env = UavEnv(env_cfg, np.random.default_rng(0))
rng = np.random.default_rng(1)
hover = [run_episode(env, FixedPolicy(code), FixedPolicy([0.0, 0.0]), None, rng).mission_time
         for _ in range(50)]
print(f"hover, fixed allocation {alloc}: mean mission time {np.mean(hover):.1f} slots")

# A tiny instance the agents learn in seconds; demos/03 trains on it.
micro = EnvConfig(n_mdcs=2, n_channels=1, area_m=100.0, data_size_bits=10e6)
print(f"micro env random policy: {np.mean(random_baseline(micro, 200, seed=0)):.1f} slots")
