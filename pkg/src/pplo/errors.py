"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class PploError(Exception):
    """Base class for all library errors."""


class ValidationError(PploError, ValueError):
    """Invalid input parameters or configuration."""


class NumericalError(PploError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy answer."""


class NoRootError(NumericalError):
    """Root bracketing failed."""


class ConvergenceError(NumericalError):
    """An iterative procedure ran out of its iteration budget."""


class DegenerateFitError(ConvergenceError):
    """The data do not identify the model parameters."""


class DivergenceError(NumericalError):
    """A trajectory did not settle within the allotted time."""


class TruncationError(NumericalError):
    """The Fock-space truncation is too small for the requested dynamics."""


class CoverageError(NumericalError):
    """A phase-space grid does not cover the support of the distribution."""
