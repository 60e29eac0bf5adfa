"""Exception hierarchy shared across the package."""


class IneqmnError(Exception):
    """Base class for all package errors."""


class DimensionError(IneqmnError, ValueError):
    """Shapes of data, parameters, or constraints do not line up."""


class InfeasibleError(IneqmnError):
    """A model has an empty feasible region, or no feasible point was found."""


class EmptyIntervalError(IneqmnError):
    """A conditional truncation interval collapsed below tolerance.

    This indicates a corrupted sampler state (a point drifted outside the
    constrained region), not a property of the model.
    """


class NumericError(IneqmnError):
    """A numerical routine failed to produce a trustworthy answer."""


class ModelFileError(IneqmnError, ValueError):
    """A model specification file is malformed or inconsistent."""
