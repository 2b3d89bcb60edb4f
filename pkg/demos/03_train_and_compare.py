"""
Training PPO-PPO and DQN-PPO
============================

Trains both hybrid-action variants on the 2-MDC micro environment through the
same harness the CLI uses, then compares them. Takes a few seconds.

Equivalent shell session::

    uavppo run --preset custom --algo ppo-ppo --seeds 1 --out demo-runs \
        --n_mdcs 2 --n_channels 1 --area_m 100 --data_size_bits 1e7 --episodes 300
    uavppo compare demo-runs
"""
import tempfile
from pathlib import Path

from uavppo import harness

out = Path(tempfile.mkdtemp(prefix="uavppo-demo-"))
micro = dict(n_mdcs=2, n_channels=1, area_m=100.0, data_size_bits=10e6, episodes=300, eval_period=10)

for algo in ("ppo-ppo", "dqn-ppo"):
    spec = harness.build_spec("custom", algo, seeds=(1,), out_dir=out, overrides=micro)
    harness.run_experiment(spec, progress=lambda seed, row: row["episode"] % 100 == 0 and print(
        f"{algo} episode {row['episode']}: mission time {row['mission_time']}"))

cmp = harness.compare([out], final_window=100)
for s in cmp.summary:
    print(f"{s['algorithm']:8s} final-100 mean {s['final_mean']:.2f}  variance {s['final_var']:.2f}"
          f"  timeouts {s['timeout_rate']:.2%}")
summary, series = harness.write_comparison(cmp, out / "comparison")
print("plot-ready series:", series)

# The checkpoint of any seed replays greedily into a per-step trace.
res = harness.evaluate_run(out / "ppo-ppo" / "seed-1", out / "trace.csv")
print(f"greedy PPO-PPO episode: {res['mission_time']} slots, trace in {out / 'trace.csv'}")
