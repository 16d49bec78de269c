"""Exception hierarchy shared by the solvers and the CLI."""


class MFGAbsorbError(Exception):
    """Base class for all errors raised by the package."""


class PreconditionError(MFGAbsorbError, ValueError):
    """An input violates a documented precondition (CLI exit code 2)."""


class CFLError(PreconditionError):
    """The explicit part of a time step is unstable for the requested dt."""


class ConvergenceError(MFGAbsorbError, RuntimeError):
    """A fixed-point iteration hit ``max_iter`` (CLI exit code 3).

    The residual history is kept on the exception so callers can decide
    whether to retry with a smaller damping parameter.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []
