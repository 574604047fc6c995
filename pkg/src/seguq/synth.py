"""Synthetic scenarios with analytically known misclassification structure.

The generator fixes, by construction, which valid pixels are misclassified
(argmax of the ensemble mean differs from the label exactly there), hits
the requested misclassification rate by exact pixel count, and couples an
informativeness knob to the confidence of misclassified pixels:

  * informativeness 1: misclassified pixels are exactly uniform (entropy
    ln K) while correct pixels have top probability in [0.9, 0.95], so
    entropy separates the populations perfectly;
  * informativeness 0: both populations draw the same confidence law;
  * in between, the misclassified population's top-probability range is
    linearly interpolated.

All draws are independent of the knob, so sweeping it with a fixed seed
changes nothing but the interpolation. Randomness comes from a
counter-based Philox generator keyed by the seed, so outputs are
bit-reproducible.

Exact uniformity forces the argmax tie-break (class 0), so misclassified
pixels are only designated where the label is nonzero; everywhere else the
top-two margin is strictly positive (at least 0.05 away from the knob's
upper end).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .types import (
    DetectionTarget,
    LabelMap,
    PredictionStack,
    ProbabilityMap,
    Scenario,
    freeze,
)

CORRECT_LO = 0.90
CORRECT_HI = 0.95
IGNORE_INDEX = 255


@dataclass(frozen=True)
class SynthConfig:
    height: int
    width: int
    num_classes: int
    num_predictions: int = 1
    mis_rate: float = 0.25
    informativeness: float = 1.0
    region_count: int = 8
    ignore_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ConfigError(f"image extent must be positive, got {self.height}x{self.width}")
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if self.num_predictions < 1:
            raise ConfigError(f"need at least 1 prediction, got {self.num_predictions}")
        if not (0.0 < self.mis_rate < 1.0):
            raise ConfigError(f"mis_rate must lie in (0, 1), got {self.mis_rate}")
        if not (0.0 <= self.informativeness <= 1.0):
            raise ConfigError(f"informativeness must lie in [0, 1], got {self.informativeness}")
        if self.region_count < 1:
            raise ConfigError(f"region_count must be positive, got {self.region_count}")
        if not (0.0 <= self.ignore_rate < 1.0):
            raise ConfigError(f"ignore_rate must lie in [0, 1), got {self.ignore_rate}")
        if self.mis_rate * self.height * self.width < 1.0:
            raise ConfigError(
                f"mis_rate {self.mis_rate} leaves no misclassified pixel at {self.height}x{self.width}"
            )


@dataclass(frozen=True)
class SynthResult:
    labels: LabelMap
    stack: PredictionStack
    target: DetectionTarget
    region_labels: np.ndarray  # Voronoi class of every pixel, including ignored ones


def _voronoi_labels(rng: np.random.Generator, h: int, w: int, regions: int, k: int) -> np.ndarray:
    seed_r = rng.uniform(0.0, h, regions)
    seed_c = rng.uniform(0.0, w, regions)
    seed_class = rng.permutation(np.arange(regions) % k)
    rows = np.arange(h, dtype=np.float64)
    cols = np.arange(w, dtype=np.float64)
    d2 = (
        (rows[:, None, None] - seed_r[None, None, :]) ** 2
        + (cols[None, :, None] - seed_c[None, None, :]) ** 2
    )
    nearest = np.argmin(d2, axis=-1)  # first minimum = smallest seed index
    return seed_class[nearest].astype(np.int32)


def generate(config: SynthConfig, scenario: Scenario | None = None) -> SynthResult:
    """Build labels, a prediction stack and the ground-truth detection target."""
    h, w, k, n = config.height, config.width, config.num_classes, config.num_predictions
    n_pixels = h * w
    uniform = 1.0 / k
    rng = np.random.Generator(np.random.Philox(config.seed))

    region = _voronoi_labels(rng, h, w, config.region_count, k)
    region_flat = region.ravel()

    n_ignore = int(round(config.ignore_rate * n_pixels))
    valid_flat = np.ones(n_pixels, dtype=bool)
    valid_flat[rng.permutation(n_pixels)[:n_ignore]] = False

    n_valid = n_pixels - n_ignore
    n_mis = int(round(config.mis_rate * n_valid))
    eligible = np.flatnonzero(valid_flat & (region_flat != 0))
    if eligible.size < n_mis:
        raise ConfigError(
            f"only {eligible.size} valid pixels with nonzero label, need {n_mis} "
            "misclassified ones; raise region_count or num_classes"
        )
    mis_flat = np.zeros(n_pixels, dtype=bool)
    mis_flat[rng.permutation(eligible)[:n_mis]] = True

    # All draws below are knob-independent so sweeps share everything but the lerp.
    u_conf = rng.random(n_pixels)
    pred_offset = rng.integers(0, k - 1, n_pixels)
    tail_s = rng.uniform(-1.0, 1.0, (n_pixels, k - 1))
    jitter = rng.uniform(-1.0, 1.0, (n, n_pixels, k)) if n > 1 else None

    gamma = config.informativeness
    mis_lo = (1.0 - gamma) * CORRECT_LO + gamma * uniform
    mis_hi = (1.0 - gamma) * CORRECT_HI + gamma * uniform
    p1 = np.where(
        mis_flat,
        mis_lo + (mis_hi - mis_lo) * u_conf,
        CORRECT_LO + (CORRECT_HI - CORRECT_LO) * u_conf,
    )
    predicted = np.where(
        mis_flat, (region_flat + 1 + pred_offset) % k, region_flat
    ).astype(np.int64)

    base = (1.0 - p1) / (k - 1)
    gap = np.maximum(p1 - base, 0.0)
    delta = np.minimum(0.05, gap / 2.0)
    tail_amp = np.maximum(np.minimum(0.9 * base, gap - delta), 0.0)
    centered = tail_s - tail_s.mean(axis=1, keepdims=True)
    max_abs = np.abs(centered).max(axis=1)
    tail_scale = np.where(max_abs > 0.0, tail_amp / np.maximum(max_abs, 1e-300), 0.0)
    tails = base[:, None] + centered * tail_scale[:, None]

    mean = np.empty((n_pixels, k), dtype=np.float64)
    rows_idx = np.arange(n_pixels)[:, None]
    tail_cols = np.arange(k - 1)[None, :]
    tail_cols = tail_cols + (tail_cols >= predicted[:, None])
    mean[rows_idx, tail_cols] = tails
    mean[np.arange(n_pixels), predicted] = p1

    # Exactly uniform misclassified pixels when the knob sits at 1.
    if gamma == 1.0:
        mean[mis_flat] = uniform

    if n == 1:
        members = mean[None, :, :]
    else:
        min_p = mean.min(axis=1)
        second = base + tail_amp  # largest tail component by construction
        margin = np.maximum(p1 - second, 0.0)
        amp = 0.25 * np.minimum(np.minimum(min_p, margin), 1.0 - p1)
        g = jitter - jitter.mean(axis=0)
        g = g - g.mean(axis=2, keepdims=True)
        g_max = np.abs(g).max(axis=(0, 2))
        g = g * np.where(g_max > 0.0, amp / np.maximum(g_max, 1e-300), 0.0)[None, :, None]
        members = mean[None, :, :] + g

    member_maps = []
    for i in range(n):
        arr = members[i].T.reshape(k, h, w).astype(np.float32)
        member_maps.append(ProbabilityMap(freeze(np.ascontiguousarray(arr))))

    if scenario is None:
        scenario = Scenario.BASE if n == 1 else Scenario.NOISE
    stack = PredictionStack(tuple(member_maps), scenario)

    labels = np.where(valid_flat.reshape(h, w), region, np.int32(IGNORE_INDEX)).astype(np.int32)
    label_map = LabelMap(freeze(labels), ignore_index=IGNORE_INDEX, num_classes=k)

    target = DetectionTarget(
        misclassified=freeze(mis_flat.reshape(h, w).copy()),
        valid=freeze(valid_flat.reshape(h, w).copy()),
    )
    return SynthResult(labels=label_map, stack=stack, target=target, region_labels=region)


def realized_mis_rate(result: SynthResult) -> float:
    """Fraction of valid pixels designated misclassified."""
    return result.target.num_misclassified / result.target.num_valid
