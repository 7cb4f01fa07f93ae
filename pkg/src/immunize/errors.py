"""Exception hierarchy shared by every module of the toolkit."""


class ImmunizeError(Exception):
    """Base class for all errors raised by :mod:`immunize`."""


class FormatError(ImmunizeError, ValueError):
    """A data or configuration file does not follow the expected layout."""


class RowError(FormatError):
    """A single data row was rejected.

    Attributes
    ----------
    line : int
        1-based line number in the source stream.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DomainError(ImmunizeError, ValueError):
    """An argument lies outside the domain of a function."""


class ContractError(ImmunizeError, ValueError):
    """Inputs violate a documented precondition (shapes, grids, indices)."""


class ConfigurationError(ImmunizeError, ValueError):
    """A basis, run configuration or parameter set is unusable."""


class SolverError(ImmunizeError, RuntimeError):
    """A portfolio solver could not produce a solution.

    Attributes
    ----------
    condition : float or None
        Condition number estimate of the offending matrix, when known.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class ParameterError(ConfigurationError):
    """Term-structure model parameters are inconsistent or numerically unusable."""
