"""Exception hierarchy shared by every stage of the pipeline."""


class VralprError(Exception):
    """Base class for all library errors."""


class ConfigError(VralprError):
    """Invalid or unreadable configuration."""


# video io
class SourceNotFound(VralprError):
    pass


class GeometryMismatch(VralprError):
    pass


class UnsupportedFormat(VralprError):
    pass


class UnsupportedDepth(VralprError):
    pass


class TruncatedFrame(VralprError):
    pass


# visual rhythm
class LineOutOfBounds(VralprError):
    pass


class EmptyChunk(VralprError):
    pass


# detection
class DetectorUnavailable(VralprError):
    """The external backend could not be started or died mid-run."""


class ProtocolError(VralprError):
    """The external backend answered with something the wire format forbids."""


# association / ocr
class NoVehicleMatch(VralprError):
    pass


class InvalidCrop(VralprError):
    pass


class EmptyReading(VralprError):
    """The plate image contains no ink at all (not the same as reading "")."""


class InvalidGlyph(VralprError):
    pass


# synth / eval
class SceneInfeasible(VralprError):
    pass


class EvalError(VralprError):
    pass
