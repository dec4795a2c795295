"""Exception hierarchy shared by every module."""


class LipinvError(Exception):
    """Base class for all errors raised by lipinv."""


class ZeroVector(LipinvError, ValueError):
    pass


class UnsupportedNorm(LipinvError, ValueError):
    pass


class NonConvergence(LipinvError, RuntimeError):
    pass


class EvaluationFailure(LipinvError, FloatingPointError):
    pass


class CoincidentTarget(LipinvError, ValueError):
    pass


class NotSquare(LipinvError, ValueError):
    pass


class DegenerateSegment(LipinvError, ValueError):
    pass


class DimensionTooLarge(LipinvError, ValueError):
    pass


class DimensionNot2(LipinvError, ValueError):
    pass


class OutOfRange(LipinvError, ValueError):
    pass


class Unreachable(LipinvError, ValueError):
    pass


class NotCertified(LipinvError, ValueError):
    pass


class NotAWeight(LipinvError, ValueError):
    pass


class NotPositive(LipinvError, ValueError):
    pass


class CriticalPoint(LipinvError, ArithmeticError):
    pass


class TraceTooShort(LipinvError, ValueError):
    pass


class NoContraction(LipinvError, RuntimeError):
    pass
