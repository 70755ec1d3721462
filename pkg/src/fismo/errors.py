"""Exception hierarchy shared by all fismo modules."""


class FismoError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInput(FismoError):
    """Input violates a precondition (non-finite entries, non-SPD, ...)."""


class ShapeError(FismoError):
    """Operands have incompatible shapes."""


class DegenerateInput(FismoError):
    """Operation is undefined for this input (e.g. polar factor of zero)."""


class NearSingular(FismoError):
    """Matrix is too close to singular for the requested operation."""


class IterationDiverged(FismoError):
    """A fixed-point iteration left its basin of convergence."""


class InsufficientData(FismoError):
    """Not enough records/snapshots to evaluate the requested analysis."""


class ConfigError(FismoError):
    """Run configuration is invalid; message carries the offending field path."""
