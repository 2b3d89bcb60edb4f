"""UAV-aided uplink data collection: fading-channel simulator, hybrid-action PPO agents
and an experiment harness."""

__version__ = "0.1.0"

from .channel import RadioConfig  # noqa: E402
from .env import EnvConfig, UavEnv  # noqa: E402
from .trainer import TrainConfig, Trainer, train  # noqa: E402

__all__ = ["__version__", "RadioConfig", "EnvConfig", "UavEnv", "TrainConfig", "Trainer", "train"]
