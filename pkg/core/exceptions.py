"""
Exceptions Module
Named errors raised by the conservation, statistics, propagation and I/O layers
"""


class ConserveAIError(Exception):
    """Base class for every error raised by this package"""


class ConfigurationError(ConserveAIError):
    """Invalid or incomplete pipeline configuration"""


class NonPositiveReference(ConfigurationError):
    """A conservation reference distance or range is not strictly positive"""


class MissingJoint(ConserveAIError):
    """A joint required by a pair is absent from the frame"""


class LengthMismatch(ConserveAIError):
    """Reference and scan geometry disagree"""


class InsufficientSamples(ConserveAIError):
    """Too few valid samples to estimate a reference or spread"""


class DegenerateTimestamps(ConserveAIError):
    """Two consecutive frames share a timestamp"""


class EmptySeries(ConserveAIError):
    """A deviation series has no values"""


class UnknownCovariate(ConserveAIError):
    """The requested covariate is not attached to the series"""


class TooFewSamples(ConserveAIError):
    """A dependency test needs more samples"""


class DegenerateCovariate(ConserveAIError):
    """Correlation is undefined because one side has zero variance"""


class EmptyTerms(ConserveAIError):
    """combine() was called without sensitivity terms"""


class OutOfRange(ConserveAIError):
    """A value lies outside its admissible range"""


class CoincidentPositions(ConserveAIError):
    """Human and robot positions coincide, distance gradient undefined"""


class MixedConfidence(ConserveAIError):
    """Estimates at different confidence levels cannot be averaged"""


class FormatError(ConserveAIError):
    """Fatal input format problem (header or geometry)"""


class RecordError(ConserveAIError):
    """A single malformed record; the reader skips it"""


class SinkError(ConserveAIError):
    """A report could not be serialized or written"""


class InvalidSpec(ConserveAIError):
    """A synthetic scenario is invalid"""


class UnsupportedSpec(ConserveAIError):
    """The oracle does not support this scenario"""


class MissingChannel(ConserveAIError):
    """A generic frame lacks the conserved channel"""
