"""Exception hierarchy shared across the package."""


class TruncoagError(Exception):
    """Base class for all package errors."""


class DomainError(TruncoagError, ValueError):
    """A kernel or density was evaluated outside its domain."""


class DivergenceError(TruncoagError, ValueError):
    """A closed-form moment constant does not exist for the given exponents."""


class GridError(TruncoagError, ValueError):
    pass


class ProjectionError(TruncoagError):
    pass


class ContractError(TruncoagError, ValueError):
    """Input violates an operation's precondition (e.g. negative density)."""


class StepSizeError(TruncoagError):
    """Explicit step drove the density negative beyond roundoff.

    Retry with a smaller safety factor ``theta``.
    """


class SolverError(TruncoagError):
    """Integration failed; ``trajectory`` holds the snapshots emitted so far."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class StudyError(TruncoagError):
    pass


class ConfigError(TruncoagError, ValueError):
    """Invalid configuration file or parameter; ``key`` names the culprit."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
