"""Dataset-level orchestration shared by the CLI subcommands.

Per-image work is independent and runs on a small thread pool; results are
merged in manifest order with associative accumulators, so reports are
byte-identical for identical inputs and flags regardless of the worker
count.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import evaluation, kernels, tensor_io, thresholding, uncertainty, viz
from .errors import CliUsageError
from .thresholding import ThresholdPolicy
from .types import (
    DatasetManifest,
    DetectionMask,
    DetectionTarget,
    GrayImage,
    ManifestEntry,
    OverlaySpec,
    PredictionStack,
    ProbabilityMap,
    UncertaintyMap,
)

METRICS = (
    "vr",
    "pm",
    "entropy",
    "avg-vr",
    "avg-pm",
    "avg-entropy",
    "var-mean",
    "var-max",
    "bald",
    "scharr",
)

SINGLE_PASS_METRICS = ("vr", "pm", "entropy")
ENSEMBLE_METRICS = ("var-mean", "var-max", "bald")


@dataclass(frozen=True)
class EvalOptions:
    metric: str = "entropy"
    policy: ThresholdPolicy = field(default_factory=lambda: ThresholdPolicy("max-frac", budget=0.1))
    normalize: str = "unit"  # "unit" or "none"
    ece_bins: int = evaluation.DEFAULT_ECE_BINS
    jobs: int = 1
    hist_bins: int = 50
    save_overlays: bool = False
    save_hist: bool = False
    overlay_background: str = "black"
    stamp: bool = False

    def __post_init__(self):
        if self.metric not in METRICS:
            raise CliUsageError(f"--metric must be one of {', '.join(METRICS)}, got {self.metric!r}")
        if self.normalize not in ("unit", "none"):
            raise CliUsageError(f"--normalize must be unit or none, got {self.normalize!r}")
        if self.ece_bins < 1:
            raise CliUsageError(f"--ece-bins must be >= 1, got {self.ece_bins}")
        if self.jobs < 1:
            raise CliUsageError(f"--jobs must be >= 1, got {self.jobs}")
        if self.hist_bins < 1:
            raise CliUsageError(f"--hist-bins must be >= 1, got {self.hist_bins}")


def check_metric_compatibility(metric: str, stack: PredictionStack, entry: ManifestEntry) -> None:
    n = stack.num_predictions
    if metric in SINGLE_PASS_METRICS and n != 1:
        raise CliUsageError(
            f"--metric {metric} needs a single prediction per image but "
            f"{entry.image_id!r} has {n}; use avg-{metric} for multi-pass stacks"
        )
    if metric in ENSEMBLE_METRICS and n < 2:
        raise CliUsageError(
            f"--metric {metric} needs at least 2 predictions per image but "
            f"{entry.image_id!r} has {n}; allowed metrics for single-pass data: "
            f"{', '.join(SINGLE_PASS_METRICS + tuple('avg-' + m for m in SINGLE_PASS_METRICS))}"
        )
    if metric == "scharr" and entry.image_path is None:
        raise CliUsageError(
            f"--metric scharr needs an image_path on every manifest entry; "
            f"{entry.image_id!r} has none"
        )


def compute_metric_map(
    metric: str,
    stack: PredictionStack,
    valid: np.ndarray,
    image: GrayImage | None = None,
) -> UncertaintyMap:
    if metric == "vr":
        return uncertainty.variation_ratio(stack.predictions[0], valid)
    if metric == "pm":
        return uncertainty.probability_margin(stack.predictions[0], valid)
    if metric == "entropy":
        return uncertainty.entropy(stack.predictions[0], valid)
    if metric == "avg-vr":
        return uncertainty.averaged_vr(stack, valid)
    if metric == "avg-pm":
        return uncertainty.averaged_margin(stack, valid)
    if metric == "avg-entropy":
        return uncertainty.averaged_entropy(stack, valid)
    if metric == "var-mean":
        return uncertainty.class_variance(stack, uncertainty.VarianceReduction.MEAN_OVER_CLASSES, valid)
    if metric == "var-max":
        return uncertainty.class_variance(stack, uncertainty.VarianceReduction.MAX_OVER_CLASSES, valid)
    if metric == "bald":
        return uncertainty.bald(stack, valid)
    if metric == "scharr":
        if image is None:
            raise CliUsageError("--metric scharr needs a source image")
        return uncertainty.scharr_magnitude(image, valid, normalize=True)
    raise CliUsageError(f"unknown metric {metric!r}; choose from {', '.join(METRICS)}")


@dataclass
class EntryArtifacts:
    """Everything one image contributes: metrics plus optional visual inputs."""

    result: evaluation.ImageEvalResult
    hist_counts: tuple
    umap: UncertaintyMap
    mask: DetectionMask
    target: DetectionTarget
    source_rgb: np.ndarray | None


def _quality_map(stack: PredictionStack) -> ProbabilityMap:
    if stack.num_predictions == 1:
        return stack.predictions[0]
    return uncertainty.average_probabilities(stack)


def process_entry(
    entry: ManifestEntry,
    manifest: DatasetManifest,
    options: EvalOptions,
    keep_source: bool = False,
) -> EntryArtifacts:
    root = manifest.root
    stack = tensor_io.load_probability_stack(entry, root)
    check_metric_compatibility(options.metric, stack, entry)
    labels = tensor_io.load_label_map(
        Path(root) / entry.label_path, manifest.ignore_index, manifest.num_classes
    )
    if labels.labels.shape != (stack.height, stack.width):
        raise CliUsageError(
            f"{entry.image_id!r}: label shape {labels.labels.shape} does not match "
            f"predictions {(stack.height, stack.width)}"
        )
    if stack.num_classes != manifest.num_classes:
        raise CliUsageError(
            f"{entry.image_id!r}: predictions have K={stack.num_classes} classes but the "
            f"manifest names {manifest.num_classes}"
        )

    image = None
    source_rgb = None
    if entry.image_path is not None and (options.metric == "scharr" or keep_source):
        source_rgb = tensor_io.load_rgb_image(Path(root) / entry.image_path)
        image = uncertainty.rgb_to_gray(source_rgb)

    valid = labels.valid
    umap = compute_metric_map(options.metric, stack, valid, image)
    if options.normalize == "unit":
        umap = uncertainty.normalize_unit(umap)

    threshold = options.policy.select(umap)
    mask = thresholding.flag(umap, threshold)

    quality = _quality_map(stack)
    pred = evaluation.argmax_labels(quality)
    target = evaluation.misclassification_target(pred, labels)

    result = evaluation.evaluate_image(
        entry.image_id, umap, mask, target, quality, labels, options.ece_bins
    )
    hist_counts = evaluation.cumulative_counts(umap, target, options.hist_bins)
    return EntryArtifacts(
        result=result,
        hist_counts=hist_counts,
        umap=umap,
        mask=mask,
        target=target,
        source_rgb=source_rgb if keep_source else None,
    )


def _map_entries(manifest: DatasetManifest, options: EvalOptions, keep_source: bool):
    work = lambda entry: process_entry(entry, manifest, options, keep_source)
    if options.jobs == 1 or len(manifest.entries) <= 1:
        return [work(e) for e in manifest.entries]
    with ThreadPoolExecutor(max_workers=options.jobs) as pool:
        return list(pool.map(work, manifest.entries))


def _config_echo(manifest_path, options: EvalOptions) -> dict:
    echo = {
        "manifest": str(manifest_path),
        "metric": options.metric,
        "threshold": options.policy.describe(),
        "normalize": options.normalize,
        "ece_bins": options.ece_bins,
        "hist_bins": options.hist_bins,
        "jobs": options.jobs,
        "backend": kernels.backend_name(),
    }
    if options.stamp:
        import datetime

        echo["generated_at"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
    return echo


def pooled_hist_rows(artifacts: list[EntryArtifacts]) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    thresholds = artifacts[0].hist_counts[0]
    cor_le = sum(a.hist_counts[1] for a in artifacts)
    mis_gt = sum(a.hist_counts[2] for a in artifacts)
    n_cor = sum(a.hist_counts[3] for a in artifacts)
    n_mis = sum(a.hist_counts[4] for a in artifacts)
    curves = evaluation.curves_from_counts(thresholds, cor_le, mis_gt, n_cor, n_mis)
    return curves.thresholds, curves.correct, curves.misclassified


def write_hist_csv(path, thresholds, correct, mis) -> None:
    header = ["threshold"]
    if correct is not None:
        header.append("correct_cum")
    if mis is not None:
        header.append("mis_cum")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, t in enumerate(thresholds):
            row = [repr(float(t))]
            if correct is not None:
                row.append(repr(float(correct[i])))
            if mis is not None:
                row.append(repr(float(mis[i])))
            writer.writerow(row)


def run_eval(
    manifest_path, options: EvalOptions, out_dir
) -> evaluation.EvalReport:
    """Evaluate a manifest and write report.json / report.csv (plus extras)."""
    manifest = tensor_io.load_manifest(manifest_path)
    if not manifest.entries:
        raise CliUsageError("manifest has no entries")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    keep_source = options.save_overlays and options.overlay_background == "image"
    artifacts = _map_entries(manifest, options, keep_source)
    report = evaluation.build_report(
        [a.result for a in artifacts], manifest.class_names, _config_echo(manifest_path, options)
    )
    report.write_json(out_dir / "report.json")
    report.write_csv(out_dir / "report.csv")
    if options.save_overlays:
        spec = OverlaySpec(background=options.overlay_background)
        for entry, art in zip(manifest.entries, artifacts):
            img = viz.render_overlay(art.target, art.mask, spec, art.source_rgb)
            viz.save_rgb(img, out_dir / f"{entry.image_id}_overlay.png")
    if options.save_hist:
        thresholds, correct, mis = pooled_hist_rows(artifacts)
        write_hist_csv(out_dir / "hist.csv", thresholds, correct, mis)
    return report


def run_hist(manifest_path, options: EvalOptions, out_path) -> None:
    """Write the pooled cumulative histogram curves as CSV."""
    manifest = tensor_io.load_manifest(manifest_path)
    if not manifest.entries:
        raise CliUsageError("manifest has no entries")
    artifacts = _map_entries(manifest, options, keep_source=False)
    thresholds, correct, mis = pooled_hist_rows(artifacts)
    write_hist_csv(out_path, thresholds, correct, mis)


def run_uncertainty(manifest_path, options: EvalOptions, out_dir, save_png: bool = False) -> list[str]:
    """Compute and save one uncertainty map per manifest entry."""
    manifest = tensor_io.load_manifest(manifest_path)
    if not manifest.entries:
        raise CliUsageError("manifest has no entries")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = _map_entries(manifest, options, keep_source=False)
    written = []
    for entry, art in zip(manifest.entries, artifacts):
        path = out_dir / f"{entry.image_id}__{options.metric}.npz"
        tensor_io.save_uncertainty_map(art.umap, path)
        written.append(str(path))
        if save_png:
            png = out_dir / f"{entry.image_id}__{options.metric}.png"
            viz.save_gray_map(art.umap, png)
            written.append(str(png))
    return written


def run_viz(manifest_path, options: EvalOptions, out_dir) -> list[str]:
    """Render one overlay PNG per manifest entry."""
    manifest = tensor_io.load_manifest(manifest_path)
    if not manifest.entries:
        raise CliUsageError("manifest has no entries")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    keep_source = options.overlay_background == "image"
    artifacts = _map_entries(manifest, options, keep_source)
    spec = OverlaySpec(background=options.overlay_background)
    written = []
    for entry, art in zip(manifest.entries, artifacts):
        img = viz.render_overlay(art.target, art.mask, spec, art.source_rgb)
        path = out_dir / f"{entry.image_id}_overlay.png"
        viz.save_rgb(img, path)
        written.append(str(path))
    return written
