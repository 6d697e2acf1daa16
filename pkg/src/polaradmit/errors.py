"""Exception hierarchy shared by all modules."""


class PolarAdmitError(Exception):
    pass


class RankDeficient(PolarAdmitError, ValueError):
    pass


class NonPositiveIntensity(PolarAdmitError, ValueError):
    pass


class EmptyImage(PolarAdmitError, ValueError):
    pass


class EmptyDataset(PolarAdmitError, ValueError):
    pass


class ShapeMismatch(PolarAdmitError, ValueError):
    pass


class DimensionMismatch(PolarAdmitError, ValueError):
    pass


class FormatError(PolarAdmitError):
    """Base for on-disk format problems."""


class BadMagic(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class UnsupportedVersion(FormatError):
    pass


class ValueOutOfRange(FormatError, ValueError):
    pass


class MissingChannel(FormatError):
    pass


class GraphNotRecorded(PolarAdmitError, RuntimeError):
    pass


class NonFiniteLoss(PolarAdmitError, FloatingPointError):
    def __init__(self, msg, checkpoint=None, log=None):
        super().__init__(msg)
        self.checkpoint = checkpoint
        self.log = log


class TooFewSamples(PolarAdmitError, ValueError):
    pass


class DegenerateBaseline(PolarAdmitError, ValueError):
    pass
