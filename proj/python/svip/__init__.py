"""SVIP zero-shot learning: synthetic data, training, evaluation and inspection."""

from ._svip import (
    ConfigError,
    DataError,
    NumericalError,
    ShapeError,
    UsageError,
    aggregate_attention,
    classify,
    evaluate,
    generate,
    gradcheck,
    harmonic_mean,
    inspect,
    jsd,
    patch_loss,
    pseudo_scores,
    select_top_m,
    train,
)

__all__ = [
    "ConfigError",
    "DataError",
    "NumericalError",
    "ShapeError",
    "UsageError",
    "aggregate_attention",
    "classify",
    "evaluate",
    "generate",
    "gradcheck",
    "harmonic_mean",
    "inspect",
    "jsd",
    "patch_loss",
    "pseudo_scores",
    "select_top_m",
    "train",
]
