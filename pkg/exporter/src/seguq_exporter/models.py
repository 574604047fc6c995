"""Model registry.

Every model exposes the same minimal surface: preprocessing from an RGB
array to a normalized tensor, and a forward pass from a (1, 3, H, W) batch
to (1, K, h, w) logits. Real checkpoints are loaded lazily and raise
:class:`SetupError` with download instructions when their assets are not
available locally; the ``tiny`` model needs no assets and backs the smoke
tests.
"""

from __future__ import annotations

import os

import numpy as np
import torch
from torch import nn

from .errors import ScenarioError, SetupError

CITYSCAPES_CLASSES = (
    "road", "sidewalk", "building", "wall", "fence", "pole", "traffic light",
    "traffic sign", "vegetation", "terrain", "sky", "person", "rider", "car",
    "truck", "bus", "train", "motorcycle", "bicycle",
)


class SegmentationModel:
    """Common surface over all checkpoints."""

    model_id: str = ""
    class_names: tuple[str, ...] = ()
    supports_dropout: bool = False

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def preprocess(self, rgb: np.ndarray) -> torch.Tensor:
        """RGB (H, W, 3) in [0, 255] (uint8 or float) to a normalized (3, H, W) tensor."""
        raise NotImplementedError

    def forward_logits(self, batch: torch.Tensor) -> torch.Tensor:
        """(1, 3, H, W) normalized batch to (1, K, h, w) logits."""
        raise NotImplementedError

    def dropout_modules(self) -> list[nn.Module]:
        return []


class TinySegNet(SegmentationModel):
    """Small seeded conv net used for smoke testing the export pipeline.

    It produces spatially varying, input-dependent logits and includes a
    Dropout2d layer so every scenario (including Drop) can be exercised
    without downloading checkpoints.
    """

    supports_dropout = True

    def __init__(self, num_classes: int = 5, seed: int = 1234):
        self.model_id = "tiny"
        self.class_names = tuple(f"class_{i:02d}" for i in range(num_classes))
        gen = torch.Generator().manual_seed(seed)
        self.net = nn.Sequential(
            nn.Conv2d(3, 16, 3, padding=1),
            nn.ReLU(),
            nn.Dropout2d(p=0.3),
            nn.Conv2d(16, num_classes, 3, padding=1),
        )
        with torch.no_grad():
            for p in self.net.parameters():
                p.copy_(torch.empty_like(p).uniform_(-0.5, 0.5, generator=gen))
        self.net.eval()

    def preprocess(self, rgb: np.ndarray) -> torch.Tensor:
        arr = np.asarray(rgb, dtype=np.float32) / 255.0
        t = torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))
        return (t - 0.5) / 0.25

    def forward_logits(self, batch: torch.Tensor) -> torch.Tensor:
        return self.net(batch)

    def dropout_modules(self) -> list[nn.Module]:
        return [m for m in self.net.modules() if isinstance(m, (nn.Dropout, nn.Dropout2d))]


class DrnModel(SegmentationModel):
    """Dilated Residual Network checkpoints (D-22 / D-105), trained on Cityscapes.

    Requires the upstream implementation and weights on disk; has no Dropout
    layers, so the Drop scenario is unavailable.
    """

    supports_dropout = False

    def __init__(self, variant: str):
        self.model_id = f"drn-{variant}"
        self.class_names = CITYSCAPES_CLASSES
        root = os.environ.get("SEGUQ_DRN_ROOT", "")
        checkpoint = os.path.join(root, f"drn_{variant.replace('-', '_')}_cityscapes.pth")
        if not root or not os.path.isfile(checkpoint):
            raise SetupError(
                f"DRN {variant} checkpoint not found. Clone https://github.com/fyu/drn, "
                f"download the Cityscapes weights linked in its README as "
                f"drn_{variant.replace('-', '_')}_cityscapes.pth, and point "
                f"SEGUQ_DRN_ROOT at the directory containing both."
            )
        raise SetupError(
            "DRN inference needs the drn package importable from SEGUQ_DRN_ROOT; "
            "install it into the environment and re-run."
        )


class SegformerModel(SegmentationModel):
    """SegFormer B5 via the transformers hub; downloads weights on first use."""

    supports_dropout = True

    def __init__(self, dataset: str = "cityscapes"):
        self.model_id = f"segformer-b5-{dataset}"
        hub = {
            "cityscapes": "nvidia/segformer-b5-finetuned-cityscapes-1024-1024",
            "ade20k": "nvidia/segformer-b5-finetuned-ade-640-640",
        }[dataset]
        try:
            from transformers import SegformerForSemanticSegmentation, SegformerImageProcessor

            self.processor = SegformerImageProcessor.from_pretrained(hub)
            self.net = SegformerForSemanticSegmentation.from_pretrained(hub)
        except Exception as e:  # missing package, no network, or no cache
            raise SetupError(
                f"cannot load {hub}: {e}. Install transformers and fetch the checkpoint "
                f"once with network access (huggingface-cli download {hub}), or set "
                f"HF_HOME to a directory that already caches it."
            ) from e
        self.net.eval()
        self.class_names = tuple(
            self.net.config.id2label[i] for i in range(self.net.config.num_labels)
        )

    def preprocess(self, rgb: np.ndarray) -> torch.Tensor:
        arr = np.clip(np.asarray(rgb, dtype=np.float32), 0.0, 255.0)
        out = self.processor(images=arr.astype(np.uint8), return_tensors="pt")
        return out["pixel_values"][0]

    def forward_logits(self, batch: torch.Tensor) -> torch.Tensor:
        return self.net(pixel_values=batch).logits

    def dropout_modules(self) -> list[nn.Module]:
        from torch import nn as _nn

        return [m for m in self.net.modules() if isinstance(m, (_nn.Dropout, _nn.Dropout2d))]


class OneFormerModel(SegmentationModel):
    """OneFormer checkpoints; see the README for the hub ids."""

    supports_dropout = True

    def __init__(self, backbone: str = "convnext-l"):
        hub = {
            "convnext-l": "shi-labs/oneformer_cityscapes_convnext_large",
            "swin-l": "shi-labs/oneformer_cityscapes_swin_large",
        }[backbone]
        raise SetupError(
            f"OneFormer export needs the {hub} checkpoint and the transformers OneFormer "
            f"pipeline; fetch it once with network access (huggingface-cli download {hub}) "
            f"and run the export on a machine with the cache available. Per-pixel "
            f"probabilities are taken from the model's semantic post-processing output."
        )


_REGISTRY = {
    "tiny": lambda: TinySegNet(),
    "drn-d-22": lambda: DrnModel("d-22"),
    "drn-d-105": lambda: DrnModel("d-105"),
    "segformer-b5-cityscapes": lambda: SegformerModel("cityscapes"),
    "segformer-b5-ade20k": lambda: SegformerModel("ade20k"),
    "oneformer-convnext-l": lambda: OneFormerModel("convnext-l"),
    "oneformer-swin-l": lambda: OneFormerModel("swin-l"),
}

MODEL_IDS = tuple(sorted(_REGISTRY))


def load_model(model_id: str, **kwargs) -> SegmentationModel:
    if model_id == "tiny" and kwargs:
        return TinySegNet(**kwargs)
    try:
        factory = _REGISTRY[model_id]
    except KeyError:
        raise ScenarioError(f"unknown model {model_id!r}; choose from {', '.join(MODEL_IDS)}")
    return factory()
