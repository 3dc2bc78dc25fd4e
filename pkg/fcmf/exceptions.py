"""Error hierarchy

Two branches, mapped to CLI exit codes by fcmf.main:
- ValidationFailure (exit 1): the input, shape or configuration is wrong
- RuntimeFailure (exit 2): the input was valid but the run could not complete
"""


class FCMFError(Exception):
    """Base class for every error raised by fcmf"""


class ValidationFailure(FCMFError):
    """Bad input: shapes, configuration, data files, command line"""


class RuntimeFailure(FCMFError):
    """A valid run failed: missing feature files, non-finite values, divergence"""


class DimensionError(ValidationFailure, ValueError):
    """Tensor shapes do not fit the kernel contract"""


class ConfigurationError(ValidationFailure, ValueError):
    """Hyperparameters are inconsistent (e.g. hidden size not divisible by heads)"""


class DataError(ValidationFailure, ValueError):
    """Data content violates a contract (length mismatch, unknown label, ...)"""


class DatasetValidationError(DataError):
    """A dataset JSONL line failed validation"""

    def __init__(self, line: int, message: str):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}")


class UsageError(ValidationFailure):
    """Unknown subcommand or flag"""


class FeatureIOError(RuntimeFailure, OSError):
    """A feature_ref could not be resolved or read"""

    def __init__(self, ref: str, reason: str):
        self.ref = ref
        super().__init__(f"feature '{ref}': {reason}")


class NonFiniteError(RuntimeFailure, ArithmeticError):
    """A forward pass produced NaN/Inf"""


class DivergenceError(RuntimeFailure):
    """Training loss became non-finite"""
