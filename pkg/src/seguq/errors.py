"""Exception hierarchy shared by all seguq modules."""


class SegUQError(Exception):
    """Base class for every error raised by this package."""


class FormatError(SegUQError):
    """A tensor or image file does not match the expected binary layout."""


class DistributionError(SegUQError):
    """A per-pixel class distribution is too far from summing to one."""


class LabelRangeError(SegUQError):
    """A non-ignored label value lies outside [0, num_classes)."""


class IoError(SegUQError):
    """A file could not be read or written."""


class InvariantError(SegUQError):
    """A value violates a documented data invariant."""


class ManifestError(SegUQError):
    """A dataset manifest is structurally invalid."""


class EnsembleSizeError(SegUQError):
    """An operation needs more predictions per image than were provided."""


class EmptyImageError(SegUQError):
    """An image has no valid pixels to work with."""


class ShapeError(SegUQError):
    """Two arrays that must share a shape do not."""


class UndefinedAurocError(SegUQError):
    """AUROC is undefined because one of the two outcome classes is empty."""


class UndefinedMetricError(SegUQError):
    """A metric is undefined on the given input (e.g. no valid pixels)."""


class ConfigError(SegUQError):
    """A configuration value is out of its allowed range."""


class CliUsageError(SegUQError):
    """Flags and data do not fit together (reported as a usage error, exit 2)."""
