"""Small constructors shared across test modules."""

from __future__ import annotations

import numpy as np

from seguq.types import (
    DetectionTarget,
    LabelMap,
    PredictionStack,
    ProbabilityMap,
    Scenario,
    UncertaintyMap,
)


def pmap(values) -> ProbabilityMap:
    """ProbabilityMap from a (K, H, W) array or a single (K,) pixel."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr[:, None, None]
    return ProbabilityMap(np.ascontiguousarray(arr))


def stack(members, scenario: Scenario | None = None) -> PredictionStack:
    maps = tuple(m if isinstance(m, ProbabilityMap) else pmap(m) for m in members)
    if scenario is None:
        scenario = Scenario.BASE if len(maps) == 1 else Scenario.NOISE
    return PredictionStack(maps, scenario)


def stack_from_array(arr: np.ndarray, scenario: Scenario | None = None) -> PredictionStack:
    return stack([arr[i] for i in range(arr.shape[0])], scenario)


def umap(values, valid=None) -> UncertaintyMap:
    vals = np.asarray(values, dtype=np.float32)
    if valid is None:
        valid = np.ones(vals.shape, dtype=bool)
    return UncertaintyMap(vals, np.asarray(valid, dtype=bool))


def labels(values, ignore_index: int = 255, num_classes: int | None = None) -> LabelMap:
    arr = np.asarray(values, dtype=np.int32)
    if num_classes is None:
        num_classes = int(arr[arr != ignore_index].max()) + 1 if (arr != ignore_index).any() else 2
    return LabelMap(arr, ignore_index=ignore_index, num_classes=max(num_classes, 2))


def target(mis, valid=None) -> DetectionTarget:
    mis = np.asarray(mis, dtype=bool)
    if valid is None:
        valid = np.ones(mis.shape, dtype=bool)
    return DetectionTarget(misclassified=mis, valid=np.asarray(valid, dtype=bool))
