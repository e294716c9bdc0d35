"""Exception hierarchy."""


class MvldpError(Exception):
    """Base class for all errors raised by mvldp."""


class DimensionError(MvldpError, ValueError):
    pass


class EmptyDomainError(MvldpError, ValueError):
    pass


class ResolventError(MvldpError, RuntimeError):
    """The inner proximal solver ran out of iterations."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class HypothesisError(MvldpError, ValueError):
    """A structural hypothesis check failed while building a problem."""


class SimulationError(MvldpError, RuntimeError):
    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} at step {step}"
        super().__init__(message)
        self.step = step


class GridTooCoarseError(MvldpError, ValueError):
    pass


class TiltError(MvldpError, ValueError):
    pass


class ConfigError(MvldpError, ValueError):
    """Configuration problem; ``field`` and ``line`` locate it when known."""

    def __init__(self, message, field=None, line=None):
        where = []
        if field:
            where.append(f"field '{field}'")
        if line:
            where.append(f"line {line}")
        if where:
            message = f"{message} [{', '.join(where)}]"
        super().__init__(message)
        self.field = field
        self.line = line
