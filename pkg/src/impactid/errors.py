"""Exception hierarchy shared by every module of the package."""


class ImpactIdError(Exception):
    """Base class for all errors raised by impactid."""


class ValidationError(ImpactIdError, ValueError):
    """An argument violates a documented precondition.

    ``field`` names the offending parameter when one can be singled out.
    """

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class NonPositiveInput(ValidationError):
    pass


# --- ingestion / signal conditioning ---------------------------------------

class MalformedCsv(ImpactIdError):
    pass


class MissingColumn(MalformedCsv):
    pass


class NonUniformSampling(ImpactIdError):
    pass


class NonFiniteSample(ImpactIdError):
    pass


class WindowOutOfRange(ValidationError):
    pass


class NoPositivePeak(ImpactIdError):
    def __init__(self, message="no positive peak found", trial_index=None):
        super().__init__(message)
        self.trial_index = trial_index


class EmptyInput(ValidationError):
    pass


class NoOverlap(ImpactIdError):
    pass


class AlreadyOffsetWarning(UserWarning):
    """Offsets were requested on a trial that already carries them."""


# --- forward model ----------------------------------------------------------

class InvalidConfig(ValidationError):
    pass


class UnstableIntegration(ImpactIdError):
    pass


class UpsamplingRequested(ValidationError):
    pass


# --- identification -----------------------------------------------------------

class IndexOutOfRange(ValidationError):
    pass


class PeakMismatch(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class EmptyGroup(ValidationError):
    pass


# --- statistics ---------------------------------------------------------------

class NonFiniteInput(ValidationError):
    pass


class TooFewGroups(ValidationError):
    pass


class IncompleteBlocks(ValidationError):
    pass


class AllZeroDifferences(ValidationError):
    pass


class InvalidAlpha(ValidationError):
    pass


# --- pipeline -----------------------------------------------------------------

class MissingResults(ImpactIdError):
    pass


class UnknownGrouping(ValidationError):
    pass


class InsufficientData(ImpactIdError):
    pass
