"""Exception hierarchy shared across the package."""


class AnypruneError(Exception):
    """Base class for all package errors."""


class ShapeError(AnypruneError):
    """Tensor shapes are inconsistent with the requested operation."""


class LabelError(AnypruneError):
    """A class label is outside [0, C)."""


class TapeError(AnypruneError):
    """The requested value was not recorded on the given tape."""


class NumericError(AnypruneError):
    """A computation produced non-finite values where finite ones are required."""


class ParameterError(AnypruneError):
    """A numeric argument is outside its documented range."""


class DataError(AnypruneError):
    """A dataset or data subset cannot support the requested operation."""


class RefinementError(AnypruneError):
    """A pruning step would grow the mask support instead of refining it."""


class ModelSpecError(AnypruneError):
    """A ModelSpec has inconsistent dimensions."""


class PartitionError(AnypruneError):
    """A dataset cannot be partitioned into the requested megabatches."""


class ConfigError(AnypruneError):
    """A run configuration is missing, malformed, or contradictory."""

    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class FormatError(AnypruneError):
    """An input file does not follow its declared binary or text format."""


class LogError(AnypruneError):
    """A metrics log is incomplete or internally inconsistent."""
