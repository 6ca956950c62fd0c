"""Exception types shared across the package.

The CLI maps these onto exit codes, so every domain failure that a user can
trigger from a config file should raise one of them.
"""


class DomainError(ValueError):
    """Inputs are well formed but outside the physical domain of an operation."""


class NoPhysicalIdler(DomainError):
    pass


class FlatMismatch(DomainError):
    pass


class HeraldNeverFires(DomainError):
    pass


class InsufficientStatistics(DomainError):
    pass


class ConfigError(ValueError):
    pass


class StreamFormatError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CalibrationError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals or {}
