import math

from uavppo.channel import RadioConfig
from uavppo.env import EnvConfig


def los_cfg(**kw):
    """Deterministic (K = inf) environment for closed-form checks."""
    radio = kw.pop("radio", RadioConfig(rician_k=math.inf))
    return EnvConfig(radio=radio, **kw)
