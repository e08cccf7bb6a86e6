"""Exception hierarchy shared across the package."""


class EnvcoreError(Exception):
    """Base class for all package errors."""


class DataError(EnvcoreError):
    """Malformed or unusable input data."""


class DimensionMismatch(EnvcoreError):
    pass


class NonPositiveDefinite(EnvcoreError):
    pass


class RankDeficientU(EnvcoreError):
    pass


class RankDeficientContrast(EnvcoreError):
    pass


class SingularDesign(EnvcoreError):
    pass


class SingularMoment(EnvcoreError):
    """A required moment matrix could not be inverted; names the matrix."""

    def __init__(self, which, *args):
        super().__init__(f"singular moment matrix: {which}", *args)
        self.which = which


class NoConvergence(EnvcoreError):
    """Optimizer failed to converge; carries the best iterate found."""

    def __init__(self, message, best=None, objective=None):
        super().__init__(message)
        self.best = best
        self.objective = objective


class InvalidPartition(EnvcoreError):
    pass


class Unidentifiable(EnvcoreError):
    pass


class DegenerateVariance(EnvcoreError):
    pass


class InvalidSpec(EnvcoreError):
    pass
