"""Exception hierarchy. CLI exit codes key off the base classes."""


class SqueezegateError(Exception):
    """Base class for all toolkit errors."""


class InputError(SqueezegateError, ValueError):
    """Malformed or out-of-range input (exit code 2)."""


class NumericalError(SqueezegateError, ArithmeticError):
    """A numerical routine failed or lost accuracy (exit code 3)."""


class SolverFailure(NumericalError):
    pass


class ChainUnstable(NumericalError):
    pass


class PropagationAccuracyError(NumericalError):
    pass


class NumericalFailure(NumericalError):
    def __init__(self, message, segment=None):
        super().__init__(message)
        self.segment = segment


class TruncationLeakage(NumericalError):
    pass


class InfeasibleTarget(InputError):
    def __init__(self, message, unreachable_modes=()):
        super().__init__(message)
        self.unreachable_modes = tuple(unreachable_modes)


class BoundViolation(InputError):
    pass


class StageError(SqueezegateError):
    """Wraps an error raised inside a pipeline stage with the stage name."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
