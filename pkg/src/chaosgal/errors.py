"""Exception types shared across the package.

The CLI maps ``InputError`` and ``ConfigError`` to exit code 2 and
``AuditFailure`` to exit code 1.
"""


class InputError(ValueError):
    """Invalid argument or malformed input data."""


class ConfigError(ValueError):
    """Configuration that is inconsistent or outside the supported range."""


class DegenerateGeneratorError(ValueError):
    """Generator whose monotone derivative falls below the positivity floor."""


class TrainingError(RuntimeError):
    """Optimization produced non-finite values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class AuditFailure(AssertionError):
    """A measured quantity violated the inequality it was audited against."""
