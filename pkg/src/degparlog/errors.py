"""Exception hierarchy shared by all solver modules.

The CLI maps these onto exit codes: ConfigurationError -> 2,
SolverError and its subclasses -> 3.
"""


class ConfigurationError(ValueError):
    """A precondition on parameters, domains, or config files is violated."""


class SolverError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(SolverError):
    """A trajectory left the finite range or tripped a growth guard.

    Expected behaviour for growth rates at or above the principal
    eigenvalue of the unconstrained region; carries the step index and
    time where growth was detected.
    """

    def __init__(self, message: str, step: int | None = None, time: float | None = None):
        super().__init__(message)
        self.step = step
        self.time = time
