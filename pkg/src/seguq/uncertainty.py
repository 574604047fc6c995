"""Per-pixel uncertainty metrics, ensemble fusion and the edge baseline.

All metrics accumulate in float64 (see :mod:`seguq.kernels` for the exact
float64 layer) and store float32 maps. Natural log everywhere; scaling to
[0, 1] is :func:`normalize_unit`'s job, not a change of log base.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .errors import EnsembleSizeError, InvariantError, ShapeError
from .types import (
    GrayImage,
    PredictionStack,
    ProbabilityMap,
    UncertaintyMap,
    VarianceReduction,
)

# BALD below this is an inconsistency, not accumulation noise.
BALD_TOLERANCE = 1e-9

# 3x3 Scharr kernel for the horizontal gradient; its transpose is the vertical one.
SCHARR_X = np.array([[3.0, 0.0, -3.0], [10.0, 0.0, -10.0], [3.0, 0.0, -3.0]])

# ITU-R BT.601 luma weights for RGB-to-gray conversion.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def _full_valid(shape: tuple[int, int]) -> np.ndarray:
    return np.ones(shape, dtype=bool)


def _as_valid(valid: np.ndarray | None, shape: tuple[int, int]) -> np.ndarray:
    if valid is None:
        return _full_valid(shape)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != shape:
        raise ShapeError(f"valid mask shape {valid.shape} != map shape {shape}")
    return valid


def variation_ratio(pmap: ProbabilityMap, valid: np.ndarray | None = None) -> UncertaintyMap:
    """1 minus the highest class probability per pixel; in [0, 1 - 1/K]."""
    p1, _, _ = kernels.top2_argmax(pmap.data)
    values = (1.0 - p1.astype(np.float64)).astype(np.float32)
    return UncertaintyMap(values, _as_valid(valid, values.shape))


def probability_margin(pmap: ProbabilityMap, valid: np.ndarray | None = None) -> UncertaintyMap:
    """1 minus the gap between the two highest probabilities; in [0, 1]."""
    p1, p2, _ = kernels.top2_argmax(pmap.data)
    values = (1.0 - (p1.astype(np.float64) - p2.astype(np.float64))).astype(np.float32)
    return UncertaintyMap(values, _as_valid(valid, values.shape))


def entropy(pmap: ProbabilityMap, valid: np.ndarray | None = None) -> UncertaintyMap:
    """Natural-log entropy per pixel with 0 log 0 := 0; in [0, ln K]."""
    values = kernels.entropy64(pmap.data).astype(np.float32)
    return UncertaintyMap(values, _as_valid(valid, values.shape))


def base_metrics(pmap: ProbabilityMap, valid: np.ndarray | None = None) -> dict[str, UncertaintyMap]:
    """Variation ratio, probability margin and entropy from one tensor pass."""
    ent, p1, p2, _ = kernels.base_stats(pmap.data)
    v = _as_valid(valid, ent.shape)
    p1d = p1.astype(np.float64)
    return {
        "vr": UncertaintyMap((1.0 - p1d).astype(np.float32), v),
        "pm": UncertaintyMap((1.0 - (p1d - p2.astype(np.float64))).astype(np.float32), v),
        "entropy": UncertaintyMap(ent.astype(np.float32), v),
    }


def average_probabilities(stack: PredictionStack) -> ProbabilityMap:
    """Arithmetic mean over the stack per (class, pixel)."""
    mean = kernels.stack_mean(stack.as_array())
    return ProbabilityMap(mean.astype(np.float32))


def averaged_vr(stack: PredictionStack, valid: np.ndarray | None = None) -> UncertaintyMap:
    return variation_ratio(average_probabilities(stack), valid)


def averaged_margin(stack: PredictionStack, valid: np.ndarray | None = None) -> UncertaintyMap:
    return probability_margin(average_probabilities(stack), valid)


def averaged_entropy(stack: PredictionStack, valid: np.ndarray | None = None) -> UncertaintyMap:
    return entropy(average_probabilities(stack), valid)


def class_variance(
    stack: PredictionStack,
    reduction: VarianceReduction,
    valid: np.ndarray | None = None,
) -> UncertaintyMap:
    """Population variance of each class probability, reduced over classes."""
    if stack.num_predictions < 2:
        raise EnsembleSizeError(
            f"class variance needs at least 2 predictions, got N={stack.num_predictions}"
        )
    var_mean, var_max = kernels.stack_variance(stack.as_array())
    picked = var_mean if reduction is VarianceReduction.MEAN_OVER_CLASSES else var_max
    values = picked.astype(np.float32)
    return UncertaintyMap(values, _as_valid(valid, values.shape))


def bald(stack: PredictionStack, valid: np.ndarray | None = None) -> UncertaintyMap:
    """Entropy of the ensemble mean minus the mean member entropy.

    Values in [-1e-9, 0) are accumulation noise and clamp to 0; anything
    more negative means the inputs violate Jensen's inequality and raises.
    """
    raw = kernels.bald_raw(stack.as_array())
    low = float(raw.min()) if raw.size else 0.0
    if low < -BALD_TOLERANCE:
        raise InvariantError(f"BALD reached {low}, below the -{BALD_TOLERANCE} noise floor")
    values = np.maximum(raw, 0.0).astype(np.float32)
    return UncertaintyMap(values, _as_valid(valid, values.shape))


def rgb_to_gray(rgb: np.ndarray) -> GrayImage:
    """BT.601 luma of an (H, W, 3) uint8 or [0, 1] float image."""
    arr = np.asarray(rgb, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ShapeError(f"expected (H, W, 3), got {arr.shape}")
    if np.issubdtype(np.asarray(rgb).dtype, np.integer):
        arr = arr / 255.0
    r, g, b = LUMA_WEIGHTS
    gray = r * arr[:, :, 0] + g * arr[:, :, 1] + b * arr[:, :, 2]
    return GrayImage(np.clip(gray, 0.0, 1.0).astype(np.float32))


def scharr_raw(pixels: np.ndarray) -> np.ndarray:
    """Unscaled Scharr gradient magnitude with replicate border padding, float64."""
    if pixels.ndim != 2 or pixels.shape[0] < 3 or pixels.shape[1] < 3:
        raise ShapeError(f"need a (H, W) image with H, W >= 3, got {pixels.shape}")
    h, w = pixels.shape
    pad = np.pad(pixels.astype(np.float64), 1, mode="edge")

    def win(dr: int, dc: int) -> np.ndarray:
        return pad[1 + dr : 1 + dr + h, 1 + dc : 1 + dc + w]

    gx = np.zeros((h, w), dtype=np.float64)
    gy = np.zeros((h, w), dtype=np.float64)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            cx = SCHARR_X[dr + 1, dc + 1]
            cy = SCHARR_X[dc + 1, dr + 1]  # transposed kernel
            if cx:
                gx += cx * win(dr, dc)
            if cy:
                gy += cy * win(dr, dc)
    return np.sqrt(gx * gx + gy * gy)


def scharr_magnitude(
    image: GrayImage,
    valid: np.ndarray | None = None,
    normalize: bool = True,
) -> UncertaintyMap:
    """Edge-strength baseline: Scharr magnitude, min-max scaled over valid pixels."""
    mag = scharr_raw(image.pixels)
    v = _as_valid(valid, mag.shape)
    umap = UncertaintyMap(mag.astype(np.float32), v)
    return normalize_unit(umap) if normalize else umap


def normalize_unit(umap: UncertaintyMap) -> UncertaintyMap:
    """Min-max scale valid values to [0, 1]; invalid pixels become 0.

    A constant map (max == min) maps to all zeros. Maps already spanning
    [0, 1] pass through bit-identically at valid pixels.
    """
    vals = umap.values
    valid = umap.valid
    if valid.any() and not np.isfinite(vals[valid]).all():
        raise InvariantError("cannot normalize a map with non-finite values at valid pixels")
    out = np.zeros(vals.shape, dtype=np.float32)
    if valid.any():
        picked = vals[valid].astype(np.float64)
        lo = picked.min()
        hi = picked.max()
        if hi > lo:
            out[valid] = ((picked - lo) / (hi - lo)).astype(np.float32)
    return UncertaintyMap(out, valid.copy())
