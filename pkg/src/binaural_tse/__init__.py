"""Binaural target speaker extraction: mixture synthesis, filter-and-sum extraction network, training, evaluation."""

from .model import ModelConfig, TSEModel
from .trainer import Checkpoint, TrainConfig, extract, train

__version__ = "0.1.0"

__all__ = ["ModelConfig", "TSEModel", "Checkpoint", "TrainConfig", "extract", "train", "__version__"]
