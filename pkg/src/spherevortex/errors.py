"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line layer can map
failures onto its documented codes without a lookup table.
"""


class SphereVortexError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class DomainError(SphereVortexError, ValueError):
    """Input outside the domain of an operation (poles, bad counts, ...)."""

    exit_code = 2


class ValidationError(SphereVortexError, ValueError):
    """Configuration or argument validation failed."""

    exit_code = 2


class SingularityError(SphereVortexError, ArithmeticError):
    """Kernel evaluated at coincident points or a collision occurred."""

    exit_code = 3


class ConvergenceError(SphereVortexError, RuntimeError):
    """An iterative solver did not reach its tolerance.

    ``report`` holds whatever diagnostics the solver collected.
    """

    exit_code = 3

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class OverlapError(SphereVortexError, RuntimeError):
    """Patches overlap or a boundary lost its star shape."""

    exit_code = 3

    def __init__(self, message, dump=None):
        super().__init__(message)
        self.dump = dump


class IOFailure(SphereVortexError, OSError):
    """Reading or writing an artifact failed."""

    exit_code = 4
