"""Exception hierarchy shared by all margint modules."""


class MargintError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(MargintError):
    """Malformed dataset file or inconsistent dataset fields."""


class WindowEmptyError(MargintError):
    """No observed data points fall inside a local window."""

    def __init__(self, x):
        self.x = x
        super().__init__(f"no observed points in the window around {x}")


class DegenerateScaleError(MargintError):
    """Residual scale estimate is (numerically) zero."""


class InsufficientSupportError(MargintError):
    """Too few observed points carry kernel weight at the evaluation point."""


class SingularDesignError(MargintError):
    """Local weighted normal equations are numerically singular."""


class AllPointsFailedError(MargintError):
    """Every grid point of a component estimate failed."""


class GridCoverageError(MargintError):
    """A requested coordinate lies outside the usable grid range."""
