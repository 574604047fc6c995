"""seguq: uncertainty maps and misclassification detection for segmentation outputs."""

from . import errors, evaluation, kernels, pipeline, synth, tensor_io, thresholding, uncertainty, viz
from .types import (
    DatasetManifest,
    DetectionMask,
    DetectionTarget,
    GrayImage,
    LabelMap,
    ManifestEntry,
    OverlaySpec,
    PredictionStack,
    ProbabilityMap,
    Scenario,
    UncertaintyMap,
    VarianceReduction,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetManifest",
    "DetectionMask",
    "DetectionTarget",
    "GrayImage",
    "LabelMap",
    "ManifestEntry",
    "OverlaySpec",
    "PredictionStack",
    "ProbabilityMap",
    "Scenario",
    "UncertaintyMap",
    "VarianceReduction",
    "errors",
    "evaluation",
    "kernels",
    "pipeline",
    "synth",
    "tensor_io",
    "thresholding",
    "uncertainty",
    "viz",
]
