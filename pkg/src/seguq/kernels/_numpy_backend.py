"""Pure-numpy kernel implementations.

Fallback for environments without the compiled extension; also the
reference the compiled kernels are tested against. All accumulation is
float64; selection outputs (top-2 probabilities, argmax) keep the input's
exact float32 values.
"""

from __future__ import annotations

import numpy as np


def _plane_entropy(v: np.ndarray) -> np.ndarray:
    """-v*log(v) summed is built by the callers; this term handles 0 log 0 := 0."""
    v = np.clip(v, 0.0, 1.0)
    lg = np.log(np.where(v > 0.0, v, 1.0))
    return v * lg


def entropy64(probs: np.ndarray) -> np.ndarray:
    """Per-pixel natural-log entropy of a (K, H, W) float32 tensor, float64 out."""
    out = np.zeros(probs.shape[1:], dtype=np.float64)
    for k in range(probs.shape[0]):
        out -= _plane_entropy(probs[k].astype(np.float64))
    return out


def top2_argmax(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Highest and second-highest probability per pixel plus the argmax.

    Ties resolve to the smallest class index. The second-highest value is the
    second order statistic, so duplicated maxima give p1 == p2.
    """
    k = probs.shape[0]
    am = np.argmax(probs, axis=0).astype(np.int32)
    part = np.partition(probs, k - 2, axis=0)
    p1 = np.ascontiguousarray(part[k - 1])
    p2 = np.ascontiguousarray(part[k - 2])
    return p1, p2, am


def base_stats(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Entropy, top-2 probabilities and argmax in one call."""
    p1, p2, am = top2_argmax(probs)
    return entropy64(probs), p1, p2, am


def stack_mean(stack: np.ndarray) -> np.ndarray:
    """Float64 mean over the prediction axis of a (N, K, H, W) tensor."""
    return stack.sum(axis=0, dtype=np.float64) / stack.shape[0]


def stack_variance(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Population variance per class, reduced by mean and by max over classes."""
    n = stack.shape[0]
    mean = stack_mean(stack)
    acc = np.zeros(mean.shape, dtype=np.float64)
    for i in range(n):
        d = stack[i].astype(np.float64) - mean
        acc += d * d
    var = acc / n
    return var.mean(axis=0), var.max(axis=0)


def bald_raw(stack: np.ndarray) -> np.ndarray:
    """Entropy of the ensemble mean minus the mean member entropy, unclamped.

    The mean is kept in float64 so the result respects Jensen's inequality up
    to float64 rounding; the caller applies the tolerance clamp.
    """
    n = stack.shape[0]
    mean = stack_mean(stack)
    ent_of_mean = np.zeros(mean.shape[1:], dtype=np.float64)
    for k in range(mean.shape[0]):
        ent_of_mean -= _plane_entropy(mean[k])
    mean_of_ent = np.zeros(ent_of_mean.shape, dtype=np.float64)
    for i in range(n):
        mean_of_ent += entropy64(stack[i])
    mean_of_ent /= n
    return ent_of_mean - mean_of_ent
