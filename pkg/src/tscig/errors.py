"""Exception types shared across the package."""


class InvalidParameterError(ValueError):
    """A parameter violates a documented precondition."""


class DataError(ValueError):
    """Input data is malformed (ragged table, non-numeric cell, empty block...)."""


class SolverError(RuntimeError):
    """The mLASSO solver failed to converge.

    The offending :class:`~tscig.mlasso.SolverReport` is kept on ``report``
    (and ``node`` when raised from a neighbourhood estimate).
    """

    def __init__(self, message, report=None, node=None):
        super().__init__(message)
        self.report = report
        self.node = node
