"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the
pure-numpy twin takes over. ``SEGUQ_BACKEND`` forces the choice:
``auto`` (default), ``cython`` (fail if unavailable) or ``numpy``.

Both backends share dtypes and semantics: float32 in, float64
accumulations out, selection outputs (top-2, argmax) as exact float32 /
int32. Per-pixel results are bit-deterministic for any thread count.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy_backend

_requested = os.environ.get("SEGUQ_BACKEND", "auto").lower()
if _requested not in ("auto", "cython", "numpy"):
    raise ValueError(f"SEGUQ_BACKEND must be auto, cython or numpy, got {_requested!r}")

_impl = _numpy_backend
_name = "numpy"
if _requested in ("auto", "cython"):
    try:
        from . import _cykernels as _compiled

        _impl = _compiled
        _name = "cython"
    except ImportError:
        if _requested == "cython":
            raise


def backend_name() -> str:
    return _name


def get_backend(name: str):
    """Return a specific backend module (used by tests and benchmarks)."""
    if name == "numpy":
        return _numpy_backend
    if name == "cython":
        from . import _cykernels

        return _cykernels
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    out = ["numpy"]
    try:
        from . import _cykernels  # noqa: F401

        out.append("cython")
    except ImportError:
        pass
    return out


def _probs3(probs: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(probs, dtype=np.float32)


def _stack4(stack: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(stack, dtype=np.float32)


def entropy64(probs: np.ndarray) -> np.ndarray:
    """Per-pixel natural-log entropy of a (K, H, W) tensor, as float64."""
    return _impl.entropy64(_probs3(probs))


def top2_argmax(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(highest, second highest, argmax) per pixel; smallest index on ties."""
    return _impl.top2_argmax(_probs3(probs))


def base_stats(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(entropy64, p1, p2, argmax) in a single pass over the tensor."""
    return _impl.base_stats(_probs3(probs))


def stack_mean(stack: np.ndarray) -> np.ndarray:
    """Float64 mean over axis 0 of a (N, K, H, W) tensor."""
    return _impl.stack_mean(_stack4(stack))


def stack_variance(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(mean-over-classes, max-over-classes) of the per-class population variance."""
    return _impl.stack_variance(_stack4(stack))


def bald_raw(stack: np.ndarray) -> np.ndarray:
    """Unclamped BALD score per pixel, float64."""
    return _impl.bald_raw(_stack4(stack))
