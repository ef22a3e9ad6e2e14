"""Exception types shared across the package."""


class MfosemoError(Exception):
    """Base class for package errors."""


class ConfigurationError(MfosemoError):
    """Invalid argument, manifest, or campaign configuration."""


class NumericalError(MfosemoError):
    """Linear algebra failed beyond recoverable jitter escalation."""


class InvalidStateError(MfosemoError):
    """An operation was invoked before its required state existed."""
