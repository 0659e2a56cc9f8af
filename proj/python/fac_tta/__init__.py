"""Frequency-domain test-time calibration for rolling forecasts."""

from ._core import (
    ConfigError,
    Error,
    audit,
    config_hash,
    correction_spectrum,
    default_config,
    estimate_period,
    irfft,
    param_count,
    rfft,
    run,
)

__all__ = [
    "ConfigError",
    "Error",
    "audit",
    "config_hash",
    "correction_spectrum",
    "default_config",
    "estimate_period",
    "irfft",
    "param_count",
    "rfft",
    "run",
]
