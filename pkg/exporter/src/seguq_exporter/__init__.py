"""seguq-exporter: run segmentation checkpoints under perturbation scenarios."""

from .datasets import Dataset, Sample, folder_dataset, load_dataset
from .export import DEFAULT_SCALES, SCENARIOS, ScenarioConfig, export
from .models import MODEL_IDS, SegmentationModel, TinySegNet, load_model

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "MODEL_IDS",
    "DEFAULT_SCALES",
    "SCENARIOS",
    "Sample",
    "ScenarioConfig",
    "SegmentationModel",
    "TinySegNet",
    "export",
    "folder_dataset",
    "load_dataset",
    "load_model",
]
