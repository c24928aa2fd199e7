"""Regime filter for tick data whose arrival rate depends on the volatility state."""

from ._volfilter import (
    Error,
    FileError,
    GridSpec,
    InvalidInput,
    MarketModel,
    NumericError,
    ObservationPolicy,
    RunConfig,
    StructureTable,
    VolatilityChain,
    build_table,
    cli,
    default_z_range,
    load_table,
    parse_config,
    read_config,
    run_filter,
    run_oracle,
    simulate,
)

__all__ = [
    "Error",
    "FileError",
    "GridSpec",
    "InvalidInput",
    "MarketModel",
    "NumericError",
    "ObservationPolicy",
    "RunConfig",
    "StructureTable",
    "VolatilityChain",
    "build_table",
    "cli",
    "default_z_range",
    "load_table",
    "parse_config",
    "read_config",
    "run_filter",
    "run_oracle",
    "simulate",
]
