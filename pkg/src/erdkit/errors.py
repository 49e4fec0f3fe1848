"""Exception types shared across the package.

Validation problems (bad shapes, bad configs, malformed files, infeasible
requests) subclass ``ValidationError``; the CLI maps them to exit code 1.
Numeric failures during training or evaluation subclass ``NumericFailure``
and map to exit code 2.
"""


class ValidationError(ValueError):
    """A request or input that can never succeed as stated."""


class ShapeError(ValidationError):
    """Array dimensions incompatible with an operation."""


class SizeError(ValidationError):
    """Not enough samples to satisfy a requested split or quantile."""


class ParseError(ValidationError):
    """Malformed file content."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class DegenerateCentersError(ValidationError):
    """Cluster centers too close to separate (smallest kernel eigenvalue ~ 0)."""


class NumericFailure(RuntimeError):
    """Numeric breakdown while computing (non-finite values)."""


class NumericError(NumericFailure):
    """Non-finite activations; carries the offending layer index."""

    def __init__(self, message, layer_index=None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class TrainingDivergedError(NumericFailure):
    """Loss became non-finite during training; carries the epoch index."""

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch
