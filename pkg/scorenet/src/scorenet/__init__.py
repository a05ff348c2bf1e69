"""Learned predictor of cumulative view-planning score vectors."""

__version__ = "0.1.0"

from .data import ImageCache, ScoreTupleDataset, TupleRecord, collate_tuples, load_records
from .evaluate import evaluate, mean_predictor_mae, predict
from .model import ScorePredictor, parameter_count, positional_encode
from .train import TrainSpec, load_checkpoint, mean_predictor_loss, train

__all__ = [
    "ImageCache",
    "ScorePredictor",
    "ScoreTupleDataset",
    "TrainSpec",
    "TupleRecord",
    "collate_tuples",
    "evaluate",
    "load_checkpoint",
    "load_records",
    "mean_predictor_loss",
    "mean_predictor_mae",
    "parameter_count",
    "positional_encode",
    "predict",
    "train",
]
