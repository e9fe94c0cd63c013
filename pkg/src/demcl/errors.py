"""Exception types shared across the package."""


class DemclError(Exception):
    """Base class for all package errors."""


class InvalidInputError(DemclError, ValueError):
    """An argument violates an operation's precondition."""


class InvalidConfigError(InvalidInputError):
    """A configuration value is out of range or inconsistent."""


class ShapeMismatchError(InvalidInputError):
    """A tensor does not have the shape a layer or model expects."""


class InvalidParameterError(InvalidInputError):
    """A model parameter holds an illegal value (e.g. a non-positive RBF width)."""


class NonFiniteGradientError(DemclError, FloatingPointError):
    """A gradient contains NaN or inf."""


class MissingCacheError(DemclError, RuntimeError):
    """``backward`` was called without a preceding ``forward``."""


class FlatWindowError(InvalidInputError):
    """The gait envelope has zero variance, so no period can be estimated."""


class FormatError(DemclError, ValueError):
    """A binary file has the wrong magic bytes or an inconsistent header."""


class VersionError(FormatError):
    """A checkpoint was written with an unsupported format version."""


class TruncatedFileError(FormatError):
    """A binary file ends before its header says it should."""


class UnsupportedLayerError(DemclError, ValueError):
    """A checkpoint names a layer kind this build does not know."""
