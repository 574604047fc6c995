"""Per-image dynamic threshold selection and binary flagging.

Both selectors expect maps whose valid values lie in [0, 1] (the pipeline
min-max normalizes first by default; raw values are allowed behind an
explicit flag as long as they are already in range). Flagging uses strict
``value > threshold`` so that a threshold equal to the maximum flags
nothing, which the budget guarantee of the max-fraction method relies on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptyImageError, InvariantError
from .types import DetectionMask, UncertaintyMap

DEFAULT_LEVELS = 100


@dataclass(frozen=True)
class ThresholdPolicy:
    """Either ``largest-diff`` with a grid of `levels`, or ``max-frac`` with a budget."""

    method: str  # "largest-diff" or "max-frac"
    levels: int = DEFAULT_LEVELS
    budget: float = 0.1

    def __post_init__(self):
        if self.method not in ("largest-diff", "max-frac"):
            raise ConfigError(f"unknown threshold method {self.method!r}")
        if self.method == "largest-diff" and self.levels < 2:
            raise ConfigError(f"largest-diff needs at least 2 levels, got {self.levels}")
        if self.method == "max-frac" and not (0.0 < self.budget < 1.0):
            raise ConfigError(f"max-frac budget must lie in (0, 1), got {self.budget}")

    @classmethod
    def parse(cls, spec: str) -> "ThresholdPolicy":
        """Parse CLI syntax: ``largest-diff``, ``largest-diff:L=50`` or ``max-frac:0.1``."""
        name, _, arg = spec.partition(":")
        if name == "largest-diff":
            if not arg:
                return cls("largest-diff")
            if not arg.startswith("L="):
                raise ConfigError(f"largest-diff takes L=<levels>, got {arg!r}")
            try:
                return cls("largest-diff", levels=int(arg[2:]))
            except ValueError as e:
                raise ConfigError(f"bad level count {arg[2:]!r}") from e
        if name == "max-frac":
            if not arg:
                raise ConfigError("max-frac needs a budget, e.g. max-frac:0.10")
            try:
                return cls("max-frac", budget=float(arg))
            except ValueError as e:
                raise ConfigError(f"bad budget {arg!r}") from e
        raise ConfigError(f"unknown threshold method {name!r} (use largest-diff or max-frac)")

    def select(self, umap: UncertaintyMap) -> float:
        if self.method == "largest-diff":
            return largest_difference_threshold(umap, self.levels)
        return max_fraction_threshold(umap, self.budget)

    def describe(self) -> str:
        if self.method == "largest-diff":
            return f"largest-diff:L={self.levels}"
        return f"max-frac:{self.budget}"


def flag(umap: UncertaintyMap, threshold: float) -> DetectionMask:
    """Flag valid pixels with value strictly above the threshold."""
    flagged = umap.valid & (umap.values > threshold)
    return DetectionMask(flagged=flagged, valid=umap.valid.copy(), threshold_used=float(threshold))


def _valid_values(umap: UncertaintyMap) -> np.ndarray:
    vals = umap.values[umap.valid]
    if vals.size == 0:
        raise EmptyImageError("threshold selection needs at least one valid pixel")
    if float(vals.min()) < 0.0 or float(vals.max()) > 1.0:
        raise InvariantError(
            "threshold selection expects values in [0, 1]; normalize the map first"
        )
    return vals


def largest_difference_threshold(umap: UncertaintyMap, levels: int = DEFAULT_LEVELS) -> float:
    """Threshold at the steepest drop of the flagged fraction over a uniform grid.

    Evaluates f(t_i) = fraction of valid pixels with value > t_i at
    t_i = i/levels, picks the t_i with the largest f(t_{i-1}) - f(t_i),
    smallest i on ties.
    """
    if levels < 2:
        raise ConfigError(f"need at least 2 levels, got {levels}")
    vals = np.sort(_valid_values(umap))
    grid = np.arange(levels + 1, dtype=np.float64) / levels
    above = vals.size - np.searchsorted(vals, grid, side="right")
    frac = above / vals.size
    drops = frac[:-1] - frac[1:]
    best = int(np.argmax(drops))  # first occurrence = smallest i
    return float(grid[best + 1])


def max_fraction_threshold(umap: UncertaintyMap, budget: float) -> float:
    """Smallest threshold whose flagged fraction stays within the budget.

    With n valid values this is the (n - floor(budget*n))-th order
    statistic: strict-greater flagging then marks at most floor(budget*n)
    pixels, and any lower threshold would exceed the budget.
    """
    if not (0.0 < budget < 1.0):
        raise ConfigError(f"budget must lie in (0, 1), got {budget}")
    vals = _valid_values(umap)
    n = vals.size
    allowed = int(math.floor(budget * n))
    order = n - allowed  # 1-indexed order statistic == ceil((1-budget)*n)
    return float(np.partition(vals, order - 1)[order - 1])
