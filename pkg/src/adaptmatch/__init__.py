"""adaptmatch: semi-supervised classification trainer with self-adjusting
pseudo-label thresholds and a contrastive loss over low-confidence samples.

Quick start::

    from adaptmatch import TrainConfig, train
    result = train(TrainConfig(iterations=500), out_dir="runs/demo")
    print(result.final_accuracy)
"""

from .config import TrainConfig, config_from_dict, config_to_dict, load_config, save_config
from .core import BatchConfig, ConfigError, NumericalError
from .trainer import TrainResult, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "BatchConfig",
    "ConfigError",
    "NumericalError",
    "TrainConfig",
    "TrainResult",
    "config_from_dict",
    "config_to_dict",
    "evaluate",
    "load_config",
    "save_config",
    "train",
    "__version__",
]
