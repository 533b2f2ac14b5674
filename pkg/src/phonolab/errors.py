"""Exception hierarchy shared by all phonolab modules."""


class PhonolabError(Exception):
    """Base class for every error raised by phonolab."""


class InvalidDimensionError(PhonolabError, ValueError):
    pass


class DimensionMismatchError(PhonolabError, ValueError):
    pass


class TruncationError(PhonolabError, ValueError):
    """Fock-space cutoff too small for the requested state or scenario."""


class InvalidStateError(PhonolabError, ValueError):
    """A matrix failed the density-matrix invariants."""


class NonHermitianError(PhonolabError, ValueError):
    pass


class StiffnessError(PhonolabError, RuntimeError):
    """Adaptive step size underflowed; carries the time and step at failure."""

    def __init__(self, message, t=None, h=None):
        super().__init__(message)
        self.t = t
        self.h = h


class IntegrationAccuracyError(PhonolabError, RuntimeError):
    pass


class SingularityError(PhonolabError, ValueError):
    pass


class ResonanceSingularityError(SingularityError):
    pass


class StraddlingSingularityError(SingularityError):
    pass


class NoPureDephasingError(PhonolabError, ValueError):
    pass


class NonIdentifiableError(PhonolabError, ValueError):
    pass


class BoundViolationError(PhonolabError, ValueError):
    pass


class ConfigError(PhonolabError, ValueError):
    pass


class DataFormatError(PhonolabError, ValueError):
    pass


class NonIdentifiableWarning(UserWarning):
    pass


class InvariantWarning(UserWarning):
    pass


class PreconditionError(PhonolabError, ValueError):
    pass
