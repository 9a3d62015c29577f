"""Stacked stateless/stateful GRU forecasting of hourly solar irradiance."""

from .data import MinMaxScaler, TimeSeriesTable, WindowedDataset, make_windows, prepare
from .estimator import StackedGRURegressor
from .gru import GruLayerParams, GruStack, cell_forward, stack_backward, stack_forward
from .synthetic import synthesize
from .training import EpochRecord, TrainConfig, train

__all__ = [
    "EpochRecord",
    "GruLayerParams",
    "GruStack",
    "MinMaxScaler",
    "StackedGRURegressor",
    "TimeSeriesTable",
    "TrainConfig",
    "WindowedDataset",
    "cell_forward",
    "make_windows",
    "prepare",
    "stack_backward",
    "stack_forward",
    "synthesize",
    "train",
]

__version__ = "0.1.0"
