"""Exception types shared across the package."""


class DomainError(ValueError):
    """A query outside the declared domain of an operation (time out of range, bad parameter)."""


class DivergenceError(RuntimeError):
    """Non-finite or runaway iterates in a solver.

    Attributes:
        window: index of the window being solved, if known.
        iteration: Picard iteration (or step) at which divergence was detected.
    """

    def __init__(self, message, window=None, iteration=None):
        self.window = window
        self.iteration = iteration
        where = []
        if window is not None:
            where.append(f"window {window}")
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConfigError(ValueError):
    """Invalid experiment configuration. `field` names the offending key when known."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        super().__init__(message)


class ConvergenceError(RuntimeError):
    """An iterative refinement (step halving, fixed-point loop) failed to reach its tolerance."""
