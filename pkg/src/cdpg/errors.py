"""Exception hierarchy shared by every cdpg module."""


class CDPGError(Exception):
    """Base class for all errors raised by the package."""


class ValidationError(CDPGError, ValueError):
    """Invalid input data. ``problems`` lists every violation found."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class GraphError(ValidationError):
    """Malformed graph: self-loops, duplicates, bad indices, disconnection."""


class InvalidIndexError(CDPGError, IndexError):
    """Cluster or agent index out of range."""


class ContractError(CDPGError):
    """A caller broke a documented precondition."""


class AssemblyError(CDPGError):
    """Operator dimensions do not match for some agent."""

    def __init__(self, message, agent=None):
        self.agent = agent
        if agent is not None:
            message = f"agent {agent[0]}.{agent[1]}: {message}"
        super().__init__(message)


class NumericalError(CDPGError, ArithmeticError):
    """An inner numerical routine failed to converge."""

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual={residual:.3e})"
        super().__init__(message)


class DivergenceError(CDPGError, ArithmeticError):
    """Non-finite values appeared in the dual iteration."""

    def __init__(self, iteration, phase, agent=None):
        self.iteration = iteration
        self.phase = phase
        self.agent = agent
        where = f" at agent {agent[0]}.{agent[1]}" if agent is not None else ""
        super().__init__(f"non-finite value in phase {phase} of iteration {iteration}{where}")


class InfeasibleError(CDPGError):
    """The coupling constraint cannot be met inside the local feasible sets."""


class ConfigError(ValidationError):
    """Scenario/run configuration file is malformed."""
