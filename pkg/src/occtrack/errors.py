"""Exception types raised across the package.

Every error that stems from bad input data derives from ``DataError`` so the
command line can map it to a single exit status.
"""


class DataError(ValueError):
    pass


class InvalidBox(DataError):
    pass


class DegenerateState(DataError):
    pass


class ZeroVector(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class InvalidMarginals(DataError):
    pass


class NotConverged(RuntimeError):
    """Sinkhorn stopped at ``max_iters`` above tolerance; the plan is attached."""

    def __init__(self, message, plan=None):
        super().__init__(message)
        self.plan = plan


class NonMonotonicFrame(DataError):
    pass


class NoValidCrop(DataError):
    pass


class EmptyGroundTruth(DataError):
    pass


class InvalidConfig(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NonPositiveBox(ParseError):
    pass
