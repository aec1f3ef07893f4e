"""Sliding-window vision transformer: model construction, cost analysis and toy training."""

from ._simvit import (
    Config,
    ConfigError,
    EpochStats,
    FormatError,
    GeometryError,
    Model,
    ToyDataset,
    ValidationError,
    WeightFileError,
    count_macs,
    count_params,
    describe,
    evaluate_toy,
    gradcheck,
    mean_toy_loss,
    preset_names,
    train_toy,
    verify,
    window_count,
)

__all__ = [
    "Config",
    "ConfigError",
    "EpochStats",
    "FormatError",
    "GeometryError",
    "Model",
    "ToyDataset",
    "ValidationError",
    "WeightFileError",
    "count_macs",
    "count_params",
    "describe",
    "evaluate_toy",
    "gradcheck",
    "mean_toy_loss",
    "preset_names",
    "train_toy",
    "verify",
    "window_count",
]
