"""Synthetic data, normalization, training and forecast production."""

from .synth import SynthConfig, SynthDataset, synth_dataset, save_dataset, load_dataset, cloud_field
from .norm import NormStats, NormError, fit_norm, apply_norm, invert_norm
from .train import (TrainConfig, TrainResult, TrainingError, Adam, train, split_days,
                    sample_starts, Windows, loss_digest)
from .forecast import (ForecastSet, ForecastError, forecast, clearsky_baseline,
                       persistence_baseline)

__all__ = [
    "SynthConfig", "SynthDataset", "synth_dataset", "save_dataset", "load_dataset", "cloud_field",
    "NormStats", "NormError", "fit_norm", "apply_norm", "invert_norm",
    "TrainConfig", "TrainResult", "TrainingError", "Adam", "train", "split_days",
    "sample_starts", "Windows", "loss_digest",
    "ForecastSet", "ForecastError", "forecast", "clearsky_baseline", "persistence_baseline",
]
