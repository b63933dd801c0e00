"""Exception types raised across the package."""


class MMFError(Exception):
    """Base class for package errors."""


class InvalidInputError(MMFError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidMeshError(InvalidInputError):
    """Mesh topology or geometry is not a valid oriented 2-manifold."""


class MeshParseError(MMFError, ValueError):
    """A mesh or field file could not be parsed.

    ``line`` is the 1-based line number where parsing stopped, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(MMFError, ValueError):
    """Bad or inconsistent run configuration."""


class SolverError(MMFError, RuntimeError):
    """Linear solve failed to converge."""

    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class NumericalError(MMFError, RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, message: str, last_good_time: float | None = None):
        self.last_good_time = last_good_time
        if last_good_time is not None:
            message = f"{message}; last finite state at t={last_good_time:g}"
        super().__init__(message)
