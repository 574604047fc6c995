"""Reading and writing probability tensors, label maps, uncertainty maps and manifests.

File formats:
  * probability tensors: npy v1.0, little-endian float32, C-order, shape (K, H, W)
  * label maps: single-channel PNG, 8-bit (16-bit when values exceed 255)
  * uncertainty maps: npz with ``values`` (float32) and ``valid`` (bool) members
  * manifests: UTF-8 JSON, paths relative to the manifest file

Loaders return immutable objects and are pure, so they can run concurrently
on distinct files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    DistributionError,
    FormatError,
    InvariantError,
    IoError,
    ManifestError,
)
from .types import (
    DatasetManifest,
    LabelMap,
    ManifestEntry,
    PredictionStack,
    ProbabilityMap,
    Scenario,
    UncertaintyMap,
    freeze,
)

# Per-pixel sums within SUM_GATE of 1 are accepted and renormalized; sums
# already within SUM_SKIP are left bit-untouched, which makes renormalization
# idempotent (one renormalization lands within ~6e-8 of 1).
SUM_GATE = 1e-3
SUM_SKIP = 2e-7


def renormalize(data: np.ndarray) -> np.ndarray:
    """Scale each pixel's class distribution to sum to 1.

    Pixels whose sum is already within ``SUM_SKIP`` of 1 are returned
    bit-identical, so ``renormalize(renormalize(x))`` equals
    ``renormalize(x)`` exactly. Degenerate all-zero pixels are left as
    zeros.
    """
    sums = data.sum(axis=0, dtype=np.float64)
    need = (np.abs(sums - 1.0) > SUM_SKIP) & (sums != 0.0)
    if not need.any():
        return data
    out = data.copy()
    out[:, need] = (out[:, need].astype(np.float64) / sums[need]).astype(np.float32)
    return out


def _check_sums(data: np.ndarray, path: str) -> None:
    sums = data.sum(axis=0, dtype=np.float64)
    bad = (np.abs(sums - 1.0) > SUM_GATE) & (sums != 0.0)  # all-zero pixels are padding
    if bad.any():
        r, c = np.unravel_index(int(np.flatnonzero(bad.ravel())[0]), bad.shape)
        raise DistributionError(
            f"{path}: pixel ({r}, {c}) sums to {sums[r, c]:.6f}, outside [1-{SUM_GATE}, 1+{SUM_GATE}]"
        )


def load_probability_map(path: str | os.PathLike) -> ProbabilityMap:
    """Load one (K, H, W) float32 npy file, validating and renormalizing it."""
    try:
        arr = np.load(path, allow_pickle=False)
    except FileNotFoundError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except (ValueError, OSError) as e:
        raise FormatError(f"{path}: not a valid array file: {e}") from e
    if arr.ndim != 3:
        raise FormatError(f"{path}: expected a (K, H, W) tensor, got shape {arr.shape}")
    if arr.dtype != np.dtype("<f4"):
        raise FormatError(f"{path}: expected little-endian float32, got {arr.dtype}")
    if not arr.flags["C_CONTIGUOUS"]:
        raise FormatError(f"{path}: expected C-order data")
    if arr.shape[0] < 2:
        raise FormatError(f"{path}: need at least 2 classes, got K={arr.shape[0]}")
    if arr.size and (float(arr.min()) < 0.0 or float(arr.max()) > 1.0):
        raise FormatError(f"{path}: probabilities must lie in [0, 1]")
    _check_sums(arr, str(path))
    return ProbabilityMap(freeze(renormalize(arr)))


def save_probability_map(pmap: ProbabilityMap, path: str | os.PathLike) -> None:
    try:
        with open(path, "wb") as fh:
            np.save(fh, np.ascontiguousarray(pmap.data, dtype="<f4"))
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load_probability_stack(entry: ManifestEntry, root: str | os.PathLike = ".") -> PredictionStack:
    """Load the prediction files of a manifest entry, in manifest order."""
    maps = []
    for rel in entry.prediction_paths:
        pmap = load_probability_map(Path(root) / rel)
        if maps and pmap.data.shape != maps[0].data.shape:
            raise FormatError(
                f"{rel}: shape {pmap.data.shape} differs from {entry.prediction_paths[0]} "
                f"with {maps[0].data.shape}"
            )
        maps.append(pmap)
    return PredictionStack(tuple(maps), entry.scenario)


def load_label_map(path: str | os.PathLike, ignore_index: int, num_classes: int) -> LabelMap:
    """Load a single-channel 8/16-bit PNG of class ids."""
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except OSError as e:
        raise FormatError(f"{path}: not a readable image: {e}") from e
    if img.mode not in ("L", "I", "I;16"):
        raise FormatError(f"{path}: expected single-channel 8/16-bit image, got mode {img.mode}")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise FormatError(f"{path}: expected a single channel, got shape {arr.shape}")
    labels = freeze(arr.astype(np.int32))
    return LabelMap(labels, ignore_index=ignore_index, num_classes=num_classes)


def save_label_map(label_map: LabelMap, path: str | os.PathLike) -> None:
    labels = label_map.labels
    hi = max(int(labels.max(initial=0)), label_map.ignore_index)
    if hi <= 255:
        img = Image.fromarray(labels.astype(np.uint8), mode="L")
    else:
        img = Image.fromarray(labels.astype(np.uint16))
    try:
        img.save(path, format="PNG")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def save_uncertainty_map(umap: UncertaintyMap, path: str | os.PathLike) -> None:
    """Write values + validity mask; refuses non-finite values at valid pixels."""
    if not np.isfinite(umap.values[umap.valid]).all():
        raise InvariantError("uncertainty map has non-finite values at valid pixels")
    try:
        with open(path, "wb") as fh:
            np.savez(fh, values=umap.values, valid=umap.valid)
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e


def load_uncertainty_map(path: str | os.PathLike) -> UncertaintyMap:
    try:
        with np.load(path, allow_pickle=False) as npz:
            values = npz["values"]
            valid = npz["valid"]
    except FileNotFoundError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except (KeyError, ValueError, OSError) as e:
        raise FormatError(f"{path}: not a valid uncertainty map file: {e}") from e
    if values.dtype != np.float32 or valid.dtype != np.bool_:
        raise FormatError(f"{path}: wrong member dtypes ({values.dtype}, {valid.dtype})")
    return UncertaintyMap(freeze(values), freeze(valid))


def load_rgb_image(path: str | os.PathLike) -> np.ndarray:
    """Load any readable image as an (H, W, 3) uint8 RGB array."""
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except OSError as e:
        raise FormatError(f"{path}: not a readable image: {e}") from e
    return np.asarray(img.convert("RGB"))


_SCENARIOS = {s.value: s for s in Scenario}


def load_manifest(path: str | os.PathLike) -> DatasetManifest:
    """Load a dataset manifest and verify every referenced file exists."""
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as e:
        raise IoError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: invalid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    for key in ("entries", "class_names", "ignore_index"):
        if key not in doc:
            raise ManifestError(f"{path}: missing required key {key!r}")
    class_names = tuple(str(n) for n in doc["class_names"])
    if len(class_names) < 2:
        raise ManifestError(f"{path}: need at least 2 class names")
    entries = []
    for pos, raw in enumerate(doc["entries"]):
        for key in ("image_id", "label_path", "prediction_paths", "scenario"):
            if key not in raw:
                raise ManifestError(f"{path}: entry {pos} missing key {key!r}")
        scenario = _SCENARIOS.get(str(raw["scenario"]).lower())
        if scenario is None:
            raise ManifestError(
                f"{path}: entry {pos} has unknown scenario {raw['scenario']!r} "
                f"(expected one of {sorted(_SCENARIOS)})"
            )
        preds = tuple(str(p) for p in raw["prediction_paths"])
        if not preds:
            raise ManifestError(f"{path}: entry {pos} has no prediction paths")
        entries.append(
            ManifestEntry(
                image_id=str(raw["image_id"]),
                label_path=str(raw["label_path"]),
                prediction_paths=preds,
                scenario=scenario,
                image_path=str(raw["image_path"]) if raw.get("image_path") else None,
            )
        )
    root = path.parent
    missing = []
    for entry in entries:
        for rel in (entry.label_path, *entry.prediction_paths):
            if not (root / rel).is_file():
                missing.append(str(root / rel))
        if entry.image_path and not (root / entry.image_path).is_file():
            missing.append(str(root / entry.image_path))
    if missing:
        raise IoError(f"{path}: missing referenced files: " + ", ".join(missing))
    return DatasetManifest(
        entries=tuple(entries),
        class_names=class_names,
        ignore_index=int(doc["ignore_index"]),
        root=str(root),
    )


def save_manifest(manifest: DatasetManifest, path: str | os.PathLike, extra: dict | None = None) -> None:
    doc = {
        "class_names": list(manifest.class_names),
        "ignore_index": manifest.ignore_index,
        "entries": [
            {
                "image_id": e.image_id,
                "label_path": e.label_path,
                "prediction_paths": list(e.prediction_paths),
                "scenario": e.scenario.value,
                **({"image_path": e.image_path} if e.image_path else {}),
            }
            for e in manifest.entries
        ],
    }
    if extra:
        doc.update(extra)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as e:
        raise IoError(f"cannot write {path}: {e}") from e
