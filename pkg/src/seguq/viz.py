"""Overlay and grayscale-map rendering.

The three-way overlay follows the detection outcome per pixel: flagged and
misclassified pixels turn green, missed misclassifications red, false
alarms blue; everything else shows the background (black, or the source
image when one is given).
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .errors import ShapeError
from .types import DetectionMask, DetectionTarget, OverlaySpec, UncertaintyMap


def render_overlay(
    target: DetectionTarget,
    mask: DetectionMask,
    spec: OverlaySpec = OverlaySpec(),
    source: np.ndarray | None = None,
) -> np.ndarray:
    """(H, W, 3) uint8 overlay of detection outcomes."""
    if target.valid.shape != mask.valid.shape:
        raise ShapeError(
            f"target shape {target.valid.shape} != mask shape {mask.valid.shape}"
        )
    h, w = target.valid.shape
    if spec.background == "image":
        if source is None:
            raise ShapeError("background 'image' needs a source image")
        if source.shape[:2] != (h, w):
            raise ShapeError(f"source image shape {source.shape[:2]} != {(h, w)}")
        out = np.ascontiguousarray(source[:, :, :3], dtype=np.uint8).copy()
    else:
        out = np.zeros((h, w, 3), dtype=np.uint8)
    mis = target.misclassified
    flagged = mask.flagged
    out[mis & flagged] = spec.color_tp
    out[mis & ~flagged] = spec.color_fn
    out[~mis & target.valid & flagged] = spec.color_fp
    return out


def save_rgb(image: np.ndarray, path) -> None:
    Image.fromarray(image, mode="RGB").save(path, format="PNG")


def save_gray_map(umap: UncertaintyMap, path) -> None:
    """Write a map as an 8-bit grayscale PNG; invalid pixels are black."""
    vals = np.clip(umap.values, 0.0, 1.0)
    img = np.where(umap.valid, np.round(vals * 255.0), 0.0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(path, format="PNG")
