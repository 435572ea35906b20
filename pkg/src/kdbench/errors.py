"""Exception taxonomy shared across the toolkit.

Exit-code contract for the CLI: config problems exit 2, data problems
exit 3, numeric aborts exit 4.
"""


class KDBenchError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(KDBenchError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class NotFoundError(ConfigError):
    """A named entity (recipe, model, method) does not exist."""


class ConfigKeyError(ConfigError):
    """An override path does not name an existing field."""


class ValidationError(ConfigError):
    """A record failed its invariants; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DataError(KDBenchError):
    """Dataset missing, empty, or unreadable."""

    exit_code = 3


class SubsetError(DataError):
    """A subset fraction cannot be satisfied for some class."""


class ReportError(DataError):
    """Report inputs are incomplete (e.g. missing vanilla-KD entry)."""


class ParseError(DataError):
    """A metrics or report file could not be parsed."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        loc = f"{path}:{line}: " if path is not None and line is not None else ""
        super().__init__(f"{loc}{message}")


class NumericError(KDBenchError):
    """Non-finite values where finite ones are required."""

    exit_code = 4


class ShapeError(NumericError):
    """Tensor shapes are incompatible."""


class TargetError(NumericError):
    """A class target is out of range or malformed."""


class BatchError(NumericError):
    """Batch too small for the requested operation."""


class CKAUndefinedError(NumericError):
    """CKA is undefined (zero-variance inputs)."""


class TapError(KDBenchError):
    """A requested activation tap does not exist on the model."""

    exit_code = 2
