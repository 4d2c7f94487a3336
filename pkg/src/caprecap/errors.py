"""Exception hierarchy shared by every module."""


class CaptureRecaptureError(ValueError):
    """Base class for all domain errors raised by caprecap."""


class ZeroRecapture(CaptureRecaptureError):
    """No individual was caught in both stages; the estimate is undefined."""


class NonPositiveWeight(CaptureRecaptureError):
    pass


class EmptySequence(CaptureRecaptureError):
    pass


class InvalidSpec(CaptureRecaptureError):
    pass


class InfeasibleSequence(CaptureRecaptureError):
    pass


class SizeMismatch(CaptureRecaptureError):
    pass


class SampleTooLarge(CaptureRecaptureError):
    pass


class Exhausted(CaptureRecaptureError):
    """RDS frontier emptied and the restart budget is spent."""


class UnknownStratum(CaptureRecaptureError):
    pass


class MissingCovariate(CaptureRecaptureError):
    pass


class InvalidNormalization(CaptureRecaptureError):
    """Some inclusion probability exceeds one after normalization."""


class AllRunsDegenerate(CaptureRecaptureError):
    """Every Monte Carlo replicate had zero double captures."""
