"""Exception hierarchy.

Two families matter to callers: :class:`DomainError` (bad values, failed
validation, undefined metrics) and :class:`FileFormatError` (anything that
goes wrong reading or writing bytes). The command line maps them to exit
codes 1 and 2.
"""


class CfevalError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CfevalError, ValueError):
    pass


class FileFormatError(CfevalError, OSError):
    pass


# linalg
class NotSquare(DomainError):
    pass


class NotSymmetric(DomainError):
    pass


class NoConvergence(DomainError):
    pass


class NegativeEigenvalue(DomainError):
    pass


class TooFewSamples(DomainError):
    pass


# data / metrics
class DimensionMismatch(DomainError):
    pass


class LengthMismatch(DomainError):
    pass


class EmptySelection(DomainError):
    pass


class MissingTargets(DomainError):
    pass


class MissingOracle(DomainError):
    pass


class MetricUnavailable(DomainError):
    """A requested metric needs a bundle role that is absent."""


class SupportMismatch(DomainError):
    pass


class NotADistribution(DomainError):
    pass


class UnknownLabel(DomainError):
    pass


# stats
class EmptyInput(DomainError):
    pass


class OutOfRange(DomainError):
    pass


class MetricMismatch(DomainError):
    pass


class MethodSetMismatch(DomainError):
    pass


class ConfigMismatch(DomainError):
    pass


# synth
class SpecInvalid(DomainError):
    pass


class AlreadyTarget(DomainError):
    pass


class NoValidAlpha(DomainError):
    pass


class UnknownAttribute(DomainError):
    pass


class TooNarrow(DomainError):
    pass


# io
class UnsupportedDtype(FileFormatError):
    pass


class MalformedHeader(FileFormatError):
    pass


class RaggedRows(FileFormatError):
    pass


class IoFailure(FileFormatError):
    pass


class MissingManifest(FileFormatError):
    pass


class ValidationFailed(DomainError):
    def __init__(self, findings):
        self.findings = list(findings)
        lines = "; ".join(str(f) for f in self.findings)
        super().__init__(f"bundle failed validation: {lines}")


class EmptyReportSet(DomainError):
    pass
