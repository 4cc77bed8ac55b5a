"""Exception taxonomy shared across the package.

CLI exit codes map onto these: ConfigError -> 2, DataFormatError/OSError -> 3,
NumericError -> 4, VerificationError -> 5.
"""


class VapformerError(Exception):
    pass


class ShapeError(VapformerError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(VapformerError, ValueError):
    """A configuration value or file is invalid."""


class InputError(VapformerError, ValueError):
    """A data record violates its schema."""


class DataFormatError(VapformerError, ValueError):
    """An on-disk artifact is malformed or unreadable."""


class NumericError(VapformerError, ArithmeticError):
    """A non-finite value surfaced where finiteness is contractual."""


class MetricError(VapformerError, ValueError):
    """A metric is undefined for the given label/prediction pattern."""


class CheckpointMismatchError(VapformerError, ValueError):
    """Checkpoint and model disagree on parameter names or shapes."""

    def __init__(self, msg, missing_in_checkpoint=(), missing_in_model=()):
        super().__init__(msg)
        self.missing_in_checkpoint = list(missing_in_checkpoint)
        self.missing_in_model = list(missing_in_model)


class GradientMissingError(VapformerError, RuntimeError):
    """A trainable parameter reached the optimizer without a gradient."""


class VerificationError(VapformerError, RuntimeError):
    """One or more self-verification checks failed."""

    def __init__(self, msg, failed=()):
        super().__init__(msg)
        self.failed = list(failed)
