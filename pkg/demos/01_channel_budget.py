"""
Link budget of the UAV uplink
=============================

How the default radio constants turn into bits per slot, and what sharing a
channel costs. Run with ``python3 demos/01_channel_budget.py``.
"""
import numpy as np

from uavppo import channel
from uavppo.channel import RadioConfig

cfg = RadioConfig()
print(cfg)

# Large-scale gain falls with distance^alpha; the UAV flies at H, so the
# shortest possible link is H metres long.
for horizontal in (0.0, 50.0, 100.0, 200.0):
    d = channel.distance((horizontal, 0.0), (0.0, 0.0), cfg.uav_height_m)
    beta = channel.large_scale_gain(cfg, d)
    snr = cfg.tx_power_w * channel.cnr(cfg, beta)
    print(f"offset {horizontal:5.0f} m  distance {d:6.1f} m  p*CNR {10 * np.log10(snr):6.2f} dB"
          f"  rate {channel.rate(cfg, snr) / 1e6:5.2f} Mbit/s")

# Small-scale Rician fading has unit mean power; K sets how much it spreads.
rng = np.random.default_rng(0)
for k in (0.0, 1.0, 10.0, np.inf):
    g = channel.sample_fading(RadioConfig(rician_k=k), rng, 100_000, 1)
    print(f"K={k:>4}  mean {g.mean():.3f}  5th percentile {np.percentile(g, 5):.3f}")

# Two MDCs on one channel interfere; on separate channels they do not.
cnrs = np.array([1.0, 1.0]) / cfg.tx_power_w
shared = sum(channel.rate(cfg, channel.sinr(cfg.tx_power_w, cnrs, i)) for i in range(2))
separate = 2 * channel.rate(cfg, cfg.tx_power_w * cnrs[0])
print(f"two MDCs at 0 dB: shared channel {shared / 1e6:.2f} Mbit/s total, separate {separate / 1e6:.2f}")
