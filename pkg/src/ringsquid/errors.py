"""Exception hierarchy shared by the solvers and the CLI."""


class RingSquidError(Exception):
    """Base class for all package errors."""


class ParameterError(RingSquidError, ValueError):
    """Invalid physical parameter, grid, or config entry."""


class ConfigError(ParameterError):
    """Malformed config file. Carries the offending line number when known."""

    def __init__(self, message, lineno=None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class NumericalError(RingSquidError, RuntimeError):
    """A numerical procedure failed (non-convergence, aliasing, step size)."""


class RootFindError(NumericalError):
    def __init__(self, message, bracket=None, values=None):
        self.bracket = bracket
        self.values = values
        if bracket is not None:
            message += f" (bracket={bracket}, f={values})"
        super().__init__(message)


class ConvergenceError(NumericalError):
    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class AliasingError(NumericalError):
    pass


class AnalysisError(RingSquidError):
    """Fringe analysis could not produce a trustworthy number."""

    def __init__(self, message, raw=None):
        self.raw = raw
        super().__init__(message)


class RegimeWarning(UserWarning):
    """Evaluation outside the validity window of an asymptotic formula."""
