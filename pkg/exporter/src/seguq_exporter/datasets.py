"""Dataset adapters: pairs of (image path, label path) plus an ignore index."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .errors import SetupError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class Sample:
    image_id: str
    image_path: Path
    label_path: Path


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    ignore_index: int


def folder_dataset(images_dir: str, labels_dir: str, ignore_index: int = 255, limit: int | None = None) -> Dataset:
    """Pair images with same-stem PNG label maps from a sibling directory."""
    images = Path(images_dir)
    labels = Path(labels_dir)
    if not images.is_dir():
        raise SetupError(f"image directory {images} does not exist")
    if not labels.is_dir():
        raise SetupError(f"label directory {labels} does not exist")
    samples = []
    for path in sorted(images.iterdir()):
        if path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        label = labels / f"{path.stem}.png"
        if not label.is_file():
            raise SetupError(f"no label map {label} for image {path.name}")
        samples.append(Sample(image_id=path.stem, image_path=path, label_path=label))
    if not samples:
        raise SetupError(f"no images with suffixes {IMAGE_SUFFIXES} in {images}")
    if limit is not None:
        samples = samples[:limit]
    return Dataset(samples=tuple(samples), ignore_index=ignore_index)


def cityscapes_val(root: str, limit: int | None = None) -> Dataset:
    """Cityscapes validation split with trainId label maps."""
    base = Path(root)
    img_root = base / "leftImg8bit" / "val"
    gt_root = base / "gtFine" / "val"
    if not img_root.is_dir() or not gt_root.is_dir():
        raise SetupError(
            f"Cityscapes not found under {root}. Register at https://www.cityscapes-dataset.com, "
            "download leftImg8bit_trainvaltest.zip and gtFine_trainvaltest.zip, extract both "
            "into one root, and generate *_gtFine_labelTrainIds.png with the official "
            "cityscapesScripts preparation tool."
        )
    samples = []
    for img in sorted(img_root.rglob("*_leftImg8bit.png")):
        stem = img.name.replace("_leftImg8bit.png", "")
        label = gt_root / img.parent.name / f"{stem}_gtFine_labelTrainIds.png"
        if not label.is_file():
            raise SetupError(
                f"missing {label}; run cityscapesScripts createTrainIdLabelImgs first"
            )
        samples.append(Sample(image_id=stem, image_path=img, label_path=label))
    if not samples:
        raise SetupError(f"no validation images under {img_root}")
    if limit is not None:
        samples = samples[:limit]
    return Dataset(samples=tuple(samples), ignore_index=255)


def load_dataset(spec: str, limit: int | None = None) -> Dataset:
    """Parse ``folder:<images>:<labels>`` or ``cityscapes:<root>``."""
    kind, _, rest = spec.partition(":")
    if kind == "folder":
        images, sep, labels = rest.rpartition(":")
        if not sep or not images:
            raise SetupError("folder dataset spec is folder:<images_dir>:<labels_dir>")
        return folder_dataset(images, labels, limit=limit)
    if kind == "cityscapes":
        if not rest:
            raise SetupError("cityscapes dataset spec is cityscapes:<root>")
        return cityscapes_val(rest, limit=limit)
    raise SetupError(f"unknown dataset kind {kind!r}; use folder:... or cityscapes:...")
