"""Exception hierarchy shared by all modules."""


class OLSCSError(Exception):
    """Base class for errors raised by ols_cs."""


class DimensionMismatch(OLSCSError, ValueError):
    pass


class DegenerateColumn(OLSCSError, ArithmeticError):
    """A column chosen for projection (or every remaining candidate) lies in
    the span of the already selected columns."""


class RankDeficient(OLSCSError, ArithmeticError):
    pass


class InvalidOrder(OLSCSError, ValueError):
    pass


class InvalidDimensions(OLSCSError, ValueError):
    pass


class DomainError(OLSCSError, ValueError):
    pass


class EmptyGrid(OLSCSError, ValueError):
    pass


class NotAchievable(OLSCSError):
    """A target probability cannot be reached on the admissible range.

    ``iteration`` is set when the failure happens inside an iterative
    schedule.
    """

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class TargetUnreachable(OLSCSError):
    pass
