"""Python bindings for the bevfl federated BEV toolkit."""

from ._bevfl import (
    ROUNDS_CSV_HEADER,
    SECURE_AGGREGATION,
    ConfigError,
    DimensionError,
    EmptySupportError,
    Error,
    NonFiniteError,
    aggregate,
    amcm_mask,
    compress_topk,
    convergence_diagnostic,
    lr_schedule,
    preset,
    preset_names,
    rounds_to_target,
    run,
    validate_config,
)

__all__ = [
    "ROUNDS_CSV_HEADER",
    "SECURE_AGGREGATION",
    "ConfigError",
    "DimensionError",
    "EmptySupportError",
    "Error",
    "NonFiniteError",
    "aggregate",
    "amcm_mask",
    "compress_topk",
    "convergence_diagnostic",
    "lr_schedule",
    "preset",
    "preset_names",
    "rounds_to_target",
    "run",
    "validate_config",
]
