"""Exception hierarchy shared across the package.

Each class maps to a distinct CLI exit code (see ``rdcfa.cli``).
"""


class RdCfaError(Exception):
    """Base class for all package errors."""


class ConfigError(RdCfaError):
    """Bad configuration file, key, or value."""


class DataError(RdCfaError):
    """Dataset layout or content problems (missing classes, mask mismatches)."""


class SizingError(RdCfaError):
    """Input spatial size incompatible with the backbone strides."""


class ShapeError(RdCfaError):
    """Tensor shape contract violated (channel/width mismatches)."""


class CheckpointError(RdCfaError):
    """Checkpoint missing, version-mismatched, or incompatible with the config."""


class NumericalFault(RdCfaError):
    """Non-finite values or diverging losses detected."""
