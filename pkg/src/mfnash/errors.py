"""Exception hierarchy shared across the package."""


class MfnashError(Exception):
    """Base class for all package errors."""


class InvalidInputError(MfnashError, ValueError):
    """Malformed arguments: wrong shapes, asymmetric matrices, bad ranges."""


class InvalidMetricError(InvalidInputError):
    """A matrix used as a metric is not symmetric positive definite."""


class InfeasibleAgentError(MfnashError):
    """An agent's constraint set is empty."""

    def __init__(self, agent_id, message=None):
        self.agent_id = agent_id
        super().__init__(message or f"agent {agent_id}: constraint set is empty")


class QpFailure(MfnashError):
    """A QP did not reach the requested accuracy (or was infeasible)."""

    def __init__(self, status, message=None, agent_id=None):
        self.status = status
        self.agent_id = agent_id
        prefix = f"agent {agent_id}: " if agent_id is not None else ""
        super().__init__(prefix + (message or f"QP solve ended with status {status!r}"))


class DegenerateBestResponseError(MfnashError):
    """The effective Hessian of a best-response problem is not positive definite."""


class UndefinedDiagnosticError(MfnashError):
    """A diagnostic was requested on data for which it is not defined."""


class InadmissibleIterationError(MfnashError):
    """The requested iteration has no convergence certificate for this game."""


class ConfigError(MfnashError):
    """A scenario configuration failed validation.

    ``violations`` is a list of ``(path, message)`` pairs.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        lines = [f"{path or '<root>'}: {msg}" for path, msg in self.violations]
        super().__init__("invalid configuration:\n  " + "\n  ".join(lines))
