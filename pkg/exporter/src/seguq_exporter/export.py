"""Run a model under a perturbation scenario and emit seguq-format files.

Per image the exporter writes one float32 (K, H, W) npy probability file
per forward pass (softmax applied; scaled passes are resampled back to the
original resolution bilinearly before the softmax is stored), copies the
label map and source image in, and finally writes a manifest the seguq
loaders accept unchanged. Noise and dropout passes are seeded, and the
seed is recorded in the manifest.
"""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .datasets import Dataset
from .errors import ScenarioError
from .models import SegmentationModel

DEFAULT_SCALES = (0.5, 0.75, 1.0, 1.25, 1.5)
SCENARIOS = ("base", "noise", "scale", "drop", "input-noise")


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "base"
    passes: int = 10
    noise_std: float = 0.01  # on normalized inputs
    scale_factors: tuple[float, ...] = DEFAULT_SCALES
    input_noise_std: float = 25.0  # on raw 0..255 intensities
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ScenarioError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.scenario in ("noise", "drop") and self.passes < 2:
            raise ScenarioError(f"{self.scenario} needs at least 2 passes, got {self.passes}")
        if self.scenario == "scale" and not self.scale_factors:
            raise ScenarioError("scale needs at least one factor")

    @property
    def manifest_scenario(self) -> str:
        # input-noise is a single perturbed forward pass, so stacks are Base-shaped
        return "base" if self.scenario == "input-noise" else self.scenario


def _pass_seed(config: ScenarioConfig, image_index: int, pass_index: int) -> int:
    return (config.seed * 1_000_003 + image_index * 1_009 + pass_index) % (2**31 - 1)


def _logits_to_probs(logits: torch.Tensor, height: int, width: int) -> np.ndarray:
    """(1, K, h, w) logits to a (K, H, W) float32 softmax at image resolution."""
    if logits.shape[-2:] != (height, width):
        logits = F.interpolate(
            logits, size=(height, width), mode="bilinear", align_corners=False
        )
    probs = torch.softmax(logits[0], dim=0)
    return np.ascontiguousarray(probs.detach().cpu().numpy().astype("<f4"))


def _forward_passes(
    model: SegmentationModel,
    rgb: np.ndarray,
    config: ScenarioConfig,
    image_index: int,
) -> list[np.ndarray]:
    height, width = rgb.shape[:2]
    out = []
    with torch.no_grad():
        if config.scenario == "base":
            x = model.preprocess(rgb)
            out.append(_logits_to_probs(model.forward_logits(x[None]), height, width))
        elif config.scenario == "input-noise":
            rng = np.random.default_rng(_pass_seed(config, image_index, 0))
            noisy = np.clip(
                rgb.astype(np.float64) + rng.normal(0.0, config.input_noise_std, rgb.shape),
                0.0,
                255.0,
            )
            x = model.preprocess(noisy)
            out.append(_logits_to_probs(model.forward_logits(x[None]), height, width))
        elif config.scenario == "noise":
            x = model.preprocess(rgb)
            for j in range(config.passes):
                gen = torch.Generator().manual_seed(_pass_seed(config, image_index, j))
                noisy = x + torch.randn(x.shape, generator=gen) * config.noise_std
                out.append(_logits_to_probs(model.forward_logits(noisy[None]), height, width))
        elif config.scenario == "scale":
            x = model.preprocess(rgb)
            for factor in config.scale_factors:
                if factor == 1.0:
                    scaled = x[None]
                else:
                    scaled = F.interpolate(
                        x[None], scale_factor=factor, mode="bilinear", align_corners=False,
                        recompute_scale_factor=False,
                    )
                out.append(_logits_to_probs(model.forward_logits(scaled), height, width))
        elif config.scenario == "drop":
            if not model.supports_dropout:
                raise ScenarioError(
                    f"model {model.model_id} has no dropout layers; the drop scenario "
                    "is unavailable for it"
                )
            x = model.preprocess(rgb)
            modules = model.dropout_modules()
            for m in modules:
                m.train()
            try:
                for j in range(config.passes):
                    torch.manual_seed(_pass_seed(config, image_index, j))
                    out.append(_logits_to_probs(model.forward_logits(x[None]), height, width))
            finally:
                for m in modules:
                    m.eval()
    return out


def export(
    model: SegmentationModel,
    dataset: Dataset,
    config: ScenarioConfig,
    out_dir: str | Path,
) -> Path:
    """Export every dataset sample; returns the manifest path."""
    out = Path(out_dir)
    (out / "probs").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    (out / "images").mkdir(parents=True, exist_ok=True)

    entries = []
    for i, sample in enumerate(dataset.samples):
        with Image.open(sample.image_path) as img:
            rgb = np.asarray(img.convert("RGB"))
        probs = _forward_passes(model, rgb, config, i)
        pred_paths = []
        for j, arr in enumerate(probs):
            rel = f"probs/{sample.image_id}_p{j}.npy"
            np.save(out / rel, arr)
            pred_paths.append(rel)
        label_rel = f"labels/{sample.image_id}.png"
        shutil.copyfile(sample.label_path, out / label_rel)
        image_rel = f"images/{sample.image_id}{sample.image_path.suffix.lower()}"
        shutil.copyfile(sample.image_path, out / image_rel)
        entries.append(
            {
                "image_id": sample.image_id,
                "label_path": label_rel,
                "prediction_paths": pred_paths,
                "scenario": config.manifest_scenario,
                "image_path": image_rel,
            }
        )

    manifest = {
        "class_names": list(model.class_names),
        "ignore_index": dataset.ignore_index,
        "entries": entries,
        "export_config": {
            "model": model.model_id,
            "scenario": config.scenario,
            "passes": config.passes,
            "noise_std": config.noise_std,
            "scale_factors": list(config.scale_factors),
            "input_noise_std": config.input_noise_std,
            "seed": config.seed,
        },
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path
