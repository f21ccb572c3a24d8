"""Exception taxonomy shared by every module.

The CLI maps these onto process exit codes: config/usage problems exit 1,
data problems exit 2, numeric failures exit 3.
"""


class GtfError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(GtfError, ValueError):
    """Operand dimensions do not chain; the message names both shapes."""


class ContractError(GtfError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(GtfError, ValueError):
    """Invalid or unknown configuration value."""


class NumericError(GtfError, ArithmeticError):
    """Non-finite value where a finite one is required."""


class DataError(GtfError, ValueError):
    """Problem with external data (files, rows, checkpoints, joins)."""


class IngestError(DataError):
    """Malformed or out-of-range telemetry input; names the offending line."""


class CheckpointError(DataError):
    """Unreadable, truncated, or version-incompatible model file."""


class JoinError(DataError):
    """Score and label rows could not be matched on their keys."""


class MetricUndefinedError(GtfError, ValueError):
    """An evaluation metric is undefined for the given labels."""
