"""Radio layer: path loss, Rician block fading, CNR, SINR and Shannon rate.

All functions are pure; randomness comes from a caller-owned
``numpy.random.Generator``.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class RadioConfig:
    """Physical constants of the UAV uplink.

    ``beta0`` is the reference gain at 1 m. The default is calibrated so
    that an MDC directly below a UAV at 100 m sees ``p * Gamma = 1`` (0 dB)
    with the 5 MHz / 5e-8 W / 5 W link budget.
    """

    beta0: float = 500.0
    alpha: float = 2.0
    rician_k: float = 10.0
    bandwidth_hz: float = 5e6
    noise_power_w: float = 5e-8
    tx_power_w: float = 5.0
    uav_height_m: float = 100.0
    carrier_hz: float = 28e9  # metadata only

    def __post_init__(self):
        for name in ("beta0", "bandwidth_hz", "noise_power_w", "tx_power_w", "uav_height_m"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not 2.0 <= self.alpha <= 6.0:
            raise ValueError(f"alpha must lie in [2, 6], got {self.alpha!r}")
        if not self.rician_k >= 0:
            raise ValueError(f"rician_k must be >= 0, got {self.rician_k!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def distance(mdc_xy, uav_xy, height: float):
    """3-D distance between ground node(s) ``mdc_xy`` and a UAV at ``height``.

    ``mdc_xy`` may be a single ``(x, y)`` pair or an ``(N, 2)`` array.
    """
    if height <= 0:
        raise ValueError("height must be > 0")
    diff = np.asarray(mdc_xy, dtype=float) - np.asarray(uav_xy, dtype=float)
    return np.sqrt(np.sum(diff**2, axis=-1) + height**2)


def large_scale_gain(cfg: RadioConfig, d):
    """Path-loss gain ``beta0 * d**-alpha``."""
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be > 0")
    out = cfg.beta0 * d ** (-cfg.alpha)
    return float(out) if out.ndim == 0 else out


def sample_fading(cfg: RadioConfig, rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    """Draw an ``(n, m)`` matrix of Rician fading powers ``|g|**2``.

    The LoS phasor is fixed to 1; the scatter term is a unit-variance
    circularly-symmetric complex Gaussian. ``rician_k = inf`` returns ones.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be >= 1")
    k = cfg.rician_k
    scatter = (rng.standard_normal((n, m)) + 1j * rng.standard_normal((n, m))) / np.sqrt(2.0)
    if np.isinf(k):
        return np.ones((n, m))
    g = np.sqrt(k / (k + 1.0)) + np.sqrt(1.0 / (k + 1.0)) * scatter
    return np.abs(g) ** 2


def channel_gain(cfg: RadioConfig, beta, fading_sq):
    """Channel power gain ``|h|**2 = beta * |g|**2``."""
    return np.asarray(beta, dtype=float) * np.asarray(fading_sq, dtype=float)


def cnr(cfg: RadioConfig, gain_sq):
    """Channel-to-noise ratio ``|h|**2 / (B * sigma**2)``."""
    return np.asarray(gain_sq, dtype=float) / (cfg.bandwidth_hz * cfg.noise_power_w)


def sinr(p_w: float, cnrs_in_channel, target_index: int) -> float:
    """SINR of one occupant of a channel; every other occupant interferes."""
    received = p_w * np.asarray(cnrs_in_channel, dtype=float)
    signal = received[target_index]
    interference = np.delete(received, target_index).sum()
    return float(signal / (1.0 + interference))


def rate(cfg: RadioConfig, sinr_value):
    """Shannon rate ``B * log2(1 + sinr)`` in bit/s."""
    return cfg.bandwidth_hz * np.log2(1.0 + np.asarray(sinr_value, dtype=float))
