"""Exception hierarchy shared by all modules."""


class EntDistillError(Exception):
    """Base class for every error raised by the package."""


class InvalidOperator(EntDistillError):
    """Input is not Hermitian, not positive, has the wrong shape or bad dims."""


class ZeroOperator(EntDistillError):
    """An operator that must be nonzero is zero."""


class NumericalBreakdown(EntDistillError):
    """The conic solver could not make progress."""


class BracketInvalid(EntDistillError):
    """A bisection was started from an interval that does not bracket the threshold."""


class RankDeficient(EntDistillError):
    """A full-rank input was required."""


class TraceMismatch(EntDistillError):
    pass


class SupportMismatch(EntDistillError):
    pass


class UnboundedRatio(EntDistillError):
    """The relaxed ratio program is unbounded.

    ``lower`` carries the best finite lower bound found before giving up.
    """

    def __init__(self, message: str, lower: float = 0.0):
        super().__init__(message)
        self.lower = lower


class InfiniteValue(EntDistillError):
    pass


class SizeGuard(EntDistillError):
    """Requested instance exceeds the dimension limits."""


class DegenerateAbstention(EntDistillError):
    """A test accepts with probability zero on one of the hypotheses."""


class ZeroSuccessProbability(EntDistillError):
    pass


class PreconditionViolation(EntDistillError):
    pass


class ConversionUnknown(EntDistillError):
    pass
