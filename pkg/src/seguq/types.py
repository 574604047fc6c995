"""Core container types shared across the package.

All containers are frozen dataclasses around numpy arrays. Arrays are
treated as immutable once a container is built; loaders and generators
additionally clear the writeable flag on arrays they create themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, EnsembleSizeError, InvariantError, LabelRangeError, ShapeError


class Scenario(Enum):
    """How the predictions in a stack were produced."""

    BASE = "base"
    NOISE = "noise"
    SCALE = "scale"
    DROP = "drop"


class VarianceReduction(Enum):
    """How per-class ensemble variances collapse to one value per pixel."""

    MEAN_OVER_CLASSES = "mean"
    MAX_OVER_CLASSES = "max"


@dataclass(frozen=True)
class ProbabilityMap:
    """Dense per-pixel class distributions, laid out (class, row, col)."""

    data: np.ndarray  # float32, shape (K, H, W)

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 3:
            raise ShapeError(f"probability map must be a (K, H, W) array, got {getattr(d, 'shape', None)}")
        if d.dtype != np.float32:
            raise InvariantError(f"probability map must be float32, got {d.dtype}")
        if d.shape[0] < 2:
            raise InvariantError(f"need at least 2 classes, got K={d.shape[0]}")
        if d.shape[1] < 1 or d.shape[2] < 1:
            raise ShapeError(f"empty spatial extent {d.shape[1:]}")

    @property
    def num_classes(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class PredictionStack:
    """All predictions produced for one image under one scenario."""

    predictions: tuple[ProbabilityMap, ...]
    scenario: Scenario

    def __post_init__(self):
        if not self.predictions:
            raise EnsembleSizeError("a prediction stack needs at least one prediction")
        shapes = {p.data.shape for p in self.predictions}
        if len(shapes) != 1:
            raise ShapeError(f"stack members disagree on (K, H, W): {sorted(shapes)}")
        if self.scenario is Scenario.BASE and len(self.predictions) != 1:
            raise InvariantError(f"Base scenario implies a single prediction, got N={len(self.predictions)}")

    @property
    def num_predictions(self) -> int:
        return len(self.predictions)

    @property
    def num_classes(self) -> int:
        return self.predictions[0].num_classes

    @property
    def height(self) -> int:
        return self.predictions[0].height

    @property
    def width(self) -> int:
        return self.predictions[0].width

    def as_array(self) -> np.ndarray:
        """Members stacked to one contiguous (N, K, H, W) float32 array."""
        return np.ascontiguousarray(np.stack([p.data for p in self.predictions], axis=0))


@dataclass(frozen=True)
class LabelMap:
    """Per-pixel ground-truth class ids with an ignore index."""

    labels: np.ndarray  # integer, shape (H, W)
    ignore_index: int
    num_classes: int

    def __post_init__(self):
        lab = self.labels
        if not isinstance(lab, np.ndarray) or lab.ndim != 2:
            raise ShapeError(f"label map must be a (H, W) array, got {getattr(lab, 'shape', None)}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise InvariantError(f"label map must be integer, got {lab.dtype}")
        if self.num_classes < 2:
            raise InvariantError(f"need at least 2 classes, got K={self.num_classes}")
        bad = (lab != self.ignore_index) & ((lab < 0) | (lab >= self.num_classes))
        if bad.any():
            r, c = np.unravel_index(int(np.flatnonzero(bad.ravel())[0]), lab.shape)
            raise LabelRangeError(
                f"label {int(lab[r, c])} at pixel ({r}, {c}) outside [0, {self.num_classes}) "
                f"and not the ignore index {self.ignore_index}"
            )

    @property
    def valid(self) -> np.ndarray:
        return self.labels != self.ignore_index

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


@dataclass(frozen=True)
class UncertaintyMap:
    """Per-pixel scalar uncertainty plus the mask of pixels it covers.

    Finiteness of the values is not checked here so that broken maps can be
    represented; writers and consumers that require finite values enforce it.
    """

    values: np.ndarray  # float32, shape (H, W)
    valid: np.ndarray  # bool, shape (H, W)

    def __post_init__(self):
        if not isinstance(self.values, np.ndarray) or self.values.ndim != 2:
            raise ShapeError("uncertainty values must be a (H, W) array")
        if self.values.dtype != np.float32:
            raise InvariantError(f"uncertainty values must be float32, got {self.values.dtype}")
        if self.valid.shape != self.values.shape:
            raise ShapeError(f"valid mask shape {self.valid.shape} != values shape {self.values.shape}")
        if self.valid.dtype != np.bool_:
            raise InvariantError(f"valid mask must be bool, got {self.valid.dtype}")

    @property
    def num_valid(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True)
class GrayImage:
    """A single-channel image with float values in [0, 1]."""

    pixels: np.ndarray  # float32, shape (H, W)

    def __post_init__(self):
        p = self.pixels
        if not isinstance(p, np.ndarray) or p.ndim != 2:
            raise ShapeError("gray image must be a (H, W) array")
        if p.dtype != np.float32:
            raise InvariantError(f"gray image must be float32, got {p.dtype}")
        if p.size and (float(p.min()) < 0.0 or float(p.max()) > 1.0):
            raise InvariantError("gray image values must lie in [0, 1]")


@dataclass(frozen=True)
class DetectionMask:
    """Pixels flagged as likely misclassified at one threshold."""

    flagged: np.ndarray  # bool, shape (H, W)
    valid: np.ndarray  # bool, shape (H, W)
    threshold_used: float

    def __post_init__(self):
        if self.flagged.shape != self.valid.shape:
            raise ShapeError(f"flagged shape {self.flagged.shape} != valid shape {self.valid.shape}")
        if (self.flagged & ~self.valid).any():
            raise InvariantError("flagged pixels must be a subset of valid pixels")


@dataclass(frozen=True)
class DetectionTarget:
    """Ground truth for the detection task: which valid pixels are wrong."""

    misclassified: np.ndarray  # bool, shape (H, W)
    valid: np.ndarray  # bool, shape (H, W)

    def __post_init__(self):
        if self.misclassified.shape != self.valid.shape:
            raise ShapeError(
                f"misclassified shape {self.misclassified.shape} != valid shape {self.valid.shape}"
            )
        if (self.misclassified & ~self.valid).any():
            raise InvariantError("misclassified pixels must be a subset of valid pixels")

    @property
    def num_valid(self) -> int:
        return int(self.valid.sum())

    @property
    def num_misclassified(self) -> int:
        return int(self.misclassified.sum())


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    label_path: str
    prediction_paths: tuple[str, ...]
    scenario: Scenario
    image_path: str | None = None


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    class_names: tuple[str, ...]
    ignore_index: int
    root: str = "."

    @property
    def num_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class OverlaySpec:
    """Colors for the three-way detection overlay."""

    color_tp: tuple[int, int, int] = (0, 255, 0)  # misclassified and flagged
    color_fn: tuple[int, int, int] = (255, 0, 0)  # misclassified, missed
    color_fp: tuple[int, int, int] = (0, 0, 255)  # correct but flagged
    background: str = "black"  # "black" or "image"

    def __post_init__(self):
        colors = {self.color_tp, self.color_fn, self.color_fp}
        if len(colors) != 3:
            raise ConfigError("overlay needs three distinct colors")
        for c in (self.color_tp, self.color_fn, self.color_fp):
            if len(c) != 3 or any(not (0 <= int(v) <= 255) for v in c):
                raise ConfigError(f"invalid RGB triple {c}")
        if self.background not in ("black", "image"):
            raise ConfigError(f"background must be 'black' or 'image', got {self.background!r}")


def require_same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: shape {a.shape} != {b.shape}")


def freeze(arr: np.ndarray) -> np.ndarray:
    """Mark an array immutable (loaders call this on arrays they own)."""
    arr.flags.writeable = False
    return arr
