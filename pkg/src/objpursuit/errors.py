"""Exception types shared across the package."""


class ShapeError(ValueError):
    """A tensor or operand has an incompatible shape; message names the offending dimension."""


class NumericFault(ArithmeticError):
    """A NaN/Inf was produced where finite values are required."""


class RenderFailure(RuntimeError):
    """The simulator could not produce a sample meeting the visibility floor."""


class DatasetParseError(ValueError):
    """An on-disk dataset file is malformed; message carries file name and byte offset."""


class DatasetIntegrityError(ValueError):
    """Manifest and files on disk disagree."""


class CheckpointError(ValueError):
    """A checkpoint directory is corrupt or version-incompatible."""


class ConfigError(ValueError):
    """A run configuration key is unknown, mistyped, or out of range."""
