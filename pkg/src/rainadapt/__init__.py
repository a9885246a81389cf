"""Daily rainfall regression trained on one city and adapted to others."""

from .dataset import Dataset, Scaler, WeatherRecord
from .errors import DataError, NumericError, RainAdaptError
from .nn import AdaptationConfig, Mlp, MlpSpec, TrainConfig, adapt, init_mlp, train_source

__all__ = [
    "AdaptationConfig", "DataError", "Dataset", "Mlp", "MlpSpec", "NumericError", "RainAdaptError",
    "Scaler", "TrainConfig", "WeatherRecord", "adapt", "init_mlp", "train_source",
]
__version__ = "0.1.0"
