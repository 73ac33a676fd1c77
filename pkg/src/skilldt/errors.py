"""Exception hierarchy shared across the package.

CLI exit-code mapping: usage/config problems (ArgumentError, FormatError,
ValidationError, ConfigurationError) exit 2; runtime/numeric failures
(NumericsError and unexpected exceptions) exit 1.
"""


class SkillDTError(Exception):
    """Base class for all package errors."""


class FormatError(SkillDTError):
    """A file does not parse under its declared on-disk format."""


class ValidationError(SkillDTError):
    """Parsed data violates a structural invariant (e.g. dimension mismatch)."""


class ArgumentError(SkillDTError, ValueError):
    """A caller-supplied argument is out of contract."""


class NumericsError(SkillDTError):
    """Non-finite values were produced or consumed where finite ones are required."""


class ConfigurationError(SkillDTError):
    """Components were combined with incompatible configuration (e.g. snapshot mismatch)."""


class TrainingDivergedError(NumericsError):
    """Training aborted on a non-finite loss; carries a diagnostic state snapshot."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state
