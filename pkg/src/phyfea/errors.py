"""Exception hierarchy.

ValidationError and its children map to CLI exit code 2; everything else that
escapes is an internal error (exit 1).
"""


class PhyfeaError(Exception):
    """Base class for all engine errors."""


class ValidationError(PhyfeaError):
    """Bad input from the outside world (files, shapes, config values)."""


class DimensionError(ValidationError):
    """Tensor or map dimensions violate an operation's contract."""


class ConfigError(ValidationError):
    """Invalid configuration value."""


class FormatError(ValidationError):
    """Malformed file content; message names the byte offset or pixel."""


class CatalogError(ValidationError):
    """Constraint catalog is missing a pair or is inconsistent."""


class ContractError(PhyfeaError):
    """An internal operation was fed values outside its stated domain."""
