"""Exception types shared across the package.

The CLI maps these onto distinct exit codes (usage 2, data 3, numerical 4),
so library code should raise the most specific class that applies.
"""


class SidShrinkError(Exception):
    """Base class for package errors."""


class ConfigError(SidShrinkError):
    """Invalid or unsupported configuration (bad flag combination, non-SISO
    data passed to a SISO-only estimator, unknown config keys)."""


class DataError(SidShrinkError):
    """Malformed or insufficient input data (short signals, bad file format)."""


class NumericalError(SidShrinkError):
    """Numerical failure: singular or indefinite matrix where a definite one
    is required, non-convergent iteration, divergent sampler."""
