"""Misclassification targets, detection metrics, quality metrics and aggregation.

Conventions: the positive class is "misclassified" (higher uncertainty
should mean more likely wrong), undefined ratios are reported as absent
(``None``) rather than coerced to 0, and macro averages are unweighted
means over the images where a metric is defined.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import (
    InvariantError,
    ShapeError,
    UndefinedAurocError,
    UndefinedMetricError,
)
from .types import (
    DetectionMask,
    DetectionTarget,
    LabelMap,
    ProbabilityMap,
    UncertaintyMap,
    require_same_shape,
)

DEFAULT_ECE_BINS = 15

METRIC_KEYS = ("auroc", "precision", "recall", "pixel_fraction", "miou", "ece", "brier")


def argmax_labels(pmap: ProbabilityMap) -> np.ndarray:
    """Predicted label per pixel: the smallest class index attaining the max."""
    _, _, am = kernels.top2_argmax(pmap.data)
    return am


def misclassification_target(pred: np.ndarray, gt: LabelMap) -> DetectionTarget:
    """Valid pixels where the prediction disagrees with the ground truth."""
    require_same_shape(pred, gt.labels, "predicted vs ground-truth labels")
    valid = gt.valid
    return DetectionTarget(misclassified=valid & (pred != gt.labels), valid=valid)


@dataclass(frozen=True)
class PRStats:
    """Detection counts plus the derived precision/recall/pixel-fraction."""

    tp: int
    fp: int
    fn: int
    n_valid: int

    @property
    def precision(self) -> float | None:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp > 0 else None

    @property
    def recall(self) -> float | None:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn > 0 else None

    @property
    def pixel_fraction(self) -> float | None:
        return (self.tp + self.fp) / self.n_valid if self.n_valid > 0 else None

    def merged(self, other: "PRStats") -> "PRStats":
        return PRStats(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn + other.fn,
            self.n_valid + other.n_valid,
        )


def precision_recall(mask: DetectionMask, target: DetectionTarget) -> PRStats:
    if mask.valid.shape != target.valid.shape or not np.array_equal(mask.valid, target.valid):
        raise InvariantError("detection mask and target must share the same validity mask")
    mis = target.misclassified
    flagged = mask.flagged
    tp = int((flagged & mis).sum())
    fp = int((flagged & ~mis).sum())
    fn = int((~flagged & mis).sum())
    return PRStats(tp=tp, fp=fp, fn=fn, n_valid=int(target.valid.sum()))


def _rank_auroc(values: np.ndarray, positives: np.ndarray) -> float:
    """Mann-Whitney rank statistic with midranks for ties.

    Equals (#{pos > neg} + 0.5 * #{pos == neg}) / (n_pos * n_neg), i.e. the
    trapezoidal area under the ROC curve with the positive class on top.
    """
    n_pos = int(positives.sum())
    n_neg = values.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAurocError(
            f"AUROC needs both outcomes, got {n_pos} misclassified and {n_neg} correct pixels"
        )
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sp = positives[order]
    boundary = np.empty(sv.size, dtype=bool)
    boundary[0] = True
    np.not_equal(sv[1:], sv[:-1], out=boundary[1:])
    group = np.cumsum(boundary) - 1
    counts = np.bincount(group)
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    avg_rank = starts + (counts + 1) / 2.0  # 1-based midrank per tie group
    rank_sum = float(avg_rank[group[sp]].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auroc(umap: UncertaintyMap, target: DetectionTarget) -> float:
    """Probability that a misclassified pixel outranks a correct one (ties count half)."""
    if umap.valid.shape != target.valid.shape or not np.array_equal(umap.valid, target.valid):
        raise InvariantError("uncertainty map and target must share the same validity mask")
    valid = target.valid
    return _rank_auroc(umap.values[valid], target.misclassified[valid])


def classwise_auroc(
    umap: UncertaintyMap, target: DetectionTarget, gt: LabelMap
) -> dict[int, float]:
    """AUROC restricted to each ground-truth class; classes missing an outcome are absent."""
    if umap.valid.shape != gt.labels.shape:
        raise ShapeError("uncertainty map and label map shapes differ")
    valid = target.valid
    values = umap.values[valid]
    positives = target.misclassified[valid]
    labels = gt.labels[valid]
    out: dict[int, float] = {}
    for c in np.unique(labels):
        sel = labels == c
        pos = positives[sel]
        n_pos = int(pos.sum())
        if n_pos == 0 or n_pos == pos.size:
            continue
        out[int(c)] = _rank_auroc(values[sel], pos)
    return out


def accumulate_confusion(pred: np.ndarray, gt: LabelMap) -> np.ndarray:
    """K x K confusion counts (rows ground truth, cols prediction) over valid pixels."""
    require_same_shape(pred, gt.labels, "predicted vs ground-truth labels")
    k = gt.num_classes
    valid = gt.valid
    p = pred[valid].astype(np.int64)
    g = gt.labels[valid].astype(np.int64)
    if p.size and (p.min() < 0 or p.max() >= k):
        raise InvariantError(f"predicted labels outside [0, {k})")
    return np.bincount(g * k + p, minlength=k * k).reshape(k, k)


def iou_per_class(cm: np.ndarray) -> np.ndarray:
    """IoU per class; NaN where the class has zero union."""
    tp = np.diag(cm).astype(np.float64)
    union = cm.sum(axis=1) + cm.sum(axis=0) - np.diag(cm)
    out = np.full(cm.shape[0], np.nan)
    defined = union > 0
    out[defined] = tp[defined] / union[defined]
    return out


def miou(cm: np.ndarray) -> float:
    """Mean IoU over classes with nonzero union."""
    ious = iou_per_class(cm)
    defined = ~np.isnan(ious)
    if not defined.any():
        raise UndefinedMetricError("mIoU undefined: all classes have zero union")
    return float(ious[defined].mean())


def ece_bin_stats(
    pmap: ProbabilityMap, gt: LabelMap, bins: int = DEFAULT_ECE_BINS
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-bin (count, confidence sum, correct count) over valid pixels.

    Confidence is the top probability; bin b (1-based) covers
    ((b-1)/bins, b/bins]. The tuples merge additively, and the merged bins
    reproduce the pooled-pixel ECE exactly.
    """
    if bins < 1:
        raise InvariantError(f"need at least 1 bin, got {bins}")
    p1, _, am = kernels.top2_argmax(pmap.data)
    require_same_shape(p1, gt.labels, "probability map vs label map")
    valid = gt.valid
    conf = p1[valid].astype(np.float64)
    correct = (am[valid] == gt.labels[valid]).astype(np.float64)
    edges = np.arange(1, bins + 1, dtype=np.float64) / bins
    idx = np.minimum(np.searchsorted(edges, conf, side="left"), bins - 1)
    counts = np.bincount(idx, minlength=bins)
    conf_sum = np.bincount(idx, weights=conf, minlength=bins)
    correct_sum = np.bincount(idx, weights=correct, minlength=bins)
    return counts, conf_sum, correct_sum


def ece_from_bins(counts: np.ndarray, conf_sum: np.ndarray, correct_sum: np.ndarray) -> float:
    n = int(counts.sum())
    if n == 0:
        raise UndefinedMetricError("ECE undefined: no valid pixels")
    nz = counts > 0
    acc = correct_sum[nz] / counts[nz]
    conf = conf_sum[nz] / counts[nz]
    return float((np.abs(acc - conf) * counts[nz]).sum() / n)


def ece(pmap: ProbabilityMap, gt: LabelMap, bins: int = DEFAULT_ECE_BINS) -> float:
    """Expected calibration error with equal-width confidence bins on (0, 1]."""
    return ece_from_bins(*ece_bin_stats(pmap, gt, bins))


def brier_terms(pmap: ProbabilityMap, gt: LabelMap) -> tuple[float, int]:
    """(sum of per-pixel squared distances to the one-hot truth, valid count)."""
    data = pmap.data
    require_same_shape(data[0], gt.labels, "probability map vs label map")
    valid = gt.valid
    n = int(valid.sum())
    if n == 0:
        return 0.0, 0
    sq = np.zeros(data.shape[1:], dtype=np.float64)
    for k in range(data.shape[0]):
        plane = data[k].astype(np.float64)
        sq += plane * plane
    rows, cols = np.nonzero(valid)
    p_gt = data[gt.labels[rows, cols], rows, cols].astype(np.float64)
    total = float((sq[rows, cols] - 2.0 * p_gt + 1.0).sum())
    return total, n


def brier(pmap: ProbabilityMap, gt: LabelMap) -> float:
    """Mean squared distance between the distribution and the one-hot truth; in [0, 2]."""
    total, n = brier_terms(pmap, gt)
    if n == 0:
        raise UndefinedMetricError("Brier score undefined: no valid pixels")
    return total / n


@dataclass(frozen=True)
class CumulativeCurves:
    """Fractions read off the cumulative histograms at thresholds i/bins."""

    thresholds: np.ndarray  # (bins + 1,)
    correct: np.ndarray | None  # fraction of correct pixels with u <= t
    misclassified: np.ndarray | None  # fraction of misclassified pixels with u > t


def cumulative_counts(
    umap: UncertaintyMap, target: DetectionTarget, bins: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int, int]:
    """Raw counts behind :func:`cumulative_histograms`; additive across images."""
    if bins < 1:
        raise InvariantError(f"need at least 1 bin, got {bins}")
    if umap.valid.shape != target.valid.shape or not np.array_equal(umap.valid, target.valid):
        raise InvariantError("uncertainty map and target must share the same validity mask")
    vals = umap.values[target.valid]
    if vals.size and (float(vals.min()) < 0.0 or float(vals.max()) > 1.0):
        raise InvariantError("cumulative histograms expect values in [0, 1]; normalize first")
    mis = target.misclassified[target.valid]
    thresholds = np.arange(bins + 1, dtype=np.float64) / bins
    cor_sorted = np.sort(vals[~mis])
    mis_sorted = np.sort(vals[mis])
    cor_le = np.searchsorted(cor_sorted, thresholds, side="right")
    mis_gt = mis_sorted.size - np.searchsorted(mis_sorted, thresholds, side="right")
    return thresholds, cor_le, mis_gt, int(cor_sorted.size), int(mis_sorted.size)


def curves_from_counts(
    thresholds: np.ndarray, cor_le: np.ndarray, mis_gt: np.ndarray, n_cor: int, n_mis: int
) -> CumulativeCurves:
    return CumulativeCurves(
        thresholds=thresholds,
        correct=cor_le / n_cor if n_cor > 0 else None,
        misclassified=mis_gt / n_mis if n_mis > 0 else None,
    )


def cumulative_histograms(
    umap: UncertaintyMap, target: DetectionTarget, bins: int
) -> CumulativeCurves:
    """Correct pixels accumulate upward in u, misclassified downward."""
    return curves_from_counts(*cumulative_counts(umap, target, bins))


# ---------------------------------------------------------------------------
# Aggregation over a dataset
# ---------------------------------------------------------------------------


@dataclass
class PixelPool:
    """Per-pixel data pooled for micro-averaged AUROC and classwise AUROC."""

    values: np.ndarray  # float32
    positives: np.ndarray  # bool
    labels: np.ndarray  # int32


@dataclass
class ImageEvalResult:
    """Everything measured on one image, plus the payloads micro pooling needs."""

    image_id: str
    metrics: dict[str, float | None]
    threshold: float
    n_valid: int
    n_misclassified: int
    pr: PRStats
    confusion: np.ndarray
    ece_bins: tuple[np.ndarray, np.ndarray, np.ndarray]
    brier_sum: float
    pool: PixelPool


def evaluate_image(
    image_id: str,
    umap: UncertaintyMap,
    mask: DetectionMask,
    target: DetectionTarget,
    pmap_for_quality: ProbabilityMap,
    gt: LabelMap,
    ece_bins: int = DEFAULT_ECE_BINS,
) -> ImageEvalResult:
    """Compute the full per-image metric set from already-built artifacts."""
    pr = precision_recall(mask, target)
    pred = argmax_labels(pmap_for_quality)
    cm = accumulate_confusion(pred, gt)
    bins = ece_bin_stats(pmap_for_quality, gt, ece_bins)
    brier_sum, brier_n = brier_terms(pmap_for_quality, gt)

    metrics: dict[str, float | None] = {}
    try:
        metrics["auroc"] = auroc(umap, target)
    except UndefinedAurocError:
        metrics["auroc"] = None
    metrics["precision"] = pr.precision
    metrics["recall"] = pr.recall
    metrics["pixel_fraction"] = pr.pixel_fraction
    try:
        metrics["miou"] = miou(cm)
    except UndefinedMetricError:
        metrics["miou"] = None
    try:
        metrics["ece"] = ece_from_bins(*bins)
    except UndefinedMetricError:
        metrics["ece"] = None
    metrics["brier"] = brier_sum / brier_n if brier_n > 0 else None

    valid = target.valid
    pool = PixelPool(
        values=umap.values[valid],
        positives=target.misclassified[valid],
        labels=gt.labels[valid].astype(np.int32),
    )
    return ImageEvalResult(
        image_id=image_id,
        metrics=metrics,
        threshold=mask.threshold_used,
        n_valid=pr.n_valid,
        n_misclassified=int(target.misclassified.sum()),
        pr=pr,
        confusion=cm,
        ece_bins=bins,
        brier_sum=brier_sum,
        pool=pool,
    )


def macro_aggregate(
    results: list[ImageEvalResult],
) -> tuple[dict[str, float | None], dict[str, int]]:
    """Unweighted mean of defined per-image values, plus skip counts."""
    if not results:
        raise UndefinedMetricError("cannot aggregate zero images")
    macro: dict[str, float | None] = {}
    skipped: dict[str, int] = {}
    for key in METRIC_KEYS:
        defined = [r.metrics[key] for r in results if r.metrics[key] is not None]
        skipped[key] = len(results) - len(defined)
        macro[key] = float(np.mean(defined)) if defined else None
    return macro, skipped


def micro_aggregate(results: list[ImageEvalResult]) -> dict[str, float | None]:
    """Recompute each metric on the pooled pixel data of all images."""
    if not results:
        raise UndefinedMetricError("cannot aggregate zero images")
    micro: dict[str, float | None] = {}

    pooled_pr = results[0].pr
    for r in results[1:]:
        pooled_pr = pooled_pr.merged(r.pr)
    micro["precision"] = pooled_pr.precision
    micro["recall"] = pooled_pr.recall
    micro["pixel_fraction"] = pooled_pr.pixel_fraction

    values = np.concatenate([r.pool.values for r in results])
    positives = np.concatenate([r.pool.positives for r in results])
    try:
        micro["auroc"] = _rank_auroc(values, positives)
    except UndefinedAurocError:
        micro["auroc"] = None

    cm = sum(r.confusion for r in results)
    try:
        micro["miou"] = miou(cm)
    except UndefinedMetricError:
        micro["miou"] = None

    counts = sum(r.ece_bins[0] for r in results)
    conf_sum = sum(r.ece_bins[1] for r in results)
    correct_sum = sum(r.ece_bins[2] for r in results)
    try:
        micro["ece"] = ece_from_bins(counts, conf_sum, correct_sum)
    except UndefinedMetricError:
        micro["ece"] = None

    total_valid = sum(r.n_valid for r in results)
    total_brier = sum(r.brier_sum for r in results)
    micro["brier"] = total_brier / total_valid if total_valid > 0 else None
    return micro


def pooled_classwise_auroc(results: list[ImageEvalResult]) -> dict[int, float]:
    """Classwise AUROC over the pooled pixels of the whole dataset."""
    values = np.concatenate([r.pool.values for r in results])
    positives = np.concatenate([r.pool.positives for r in results])
    labels = np.concatenate([r.pool.labels for r in results])
    out: dict[int, float] = {}
    for c in np.unique(labels):
        sel = labels == c
        pos = positives[sel]
        n_pos = int(pos.sum())
        if n_pos == 0 or n_pos == pos.size:
            continue
        out[int(c)] = _rank_auroc(values[sel], pos)
    return out


@dataclass
class EvalReport:
    """Per-image and aggregated results, serializable to JSON and CSV."""

    config: dict
    per_image: dict[str, dict]
    micro: dict[str, float | None]
    macro: dict[str, float | None]
    macro_skipped: dict[str, int]
    classwise: dict[str, dict[str, float]]
    totals: dict = field(default_factory=dict)

    CSV_COLUMNS = (
        "image_id",
        "n_valid",
        "n_misclassified",
        "threshold",
        "precision",
        "recall",
        "pixel_fraction",
        "auroc",
        "miou",
        "ece",
        "brier",
    )

    def to_json_dict(self) -> dict:
        return {
            "schema_version": 1,
            "config": self.config,
            "totals": self.totals,
            "per_image": self.per_image,
            "micro": self.micro,
            "macro": self.macro,
            "macro_skipped": self.macro_skipped,
            "classwise": self.classwise,
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv(self, path) -> None:
        def cell(value):
            if value is None:
                return ""
            if isinstance(value, float):
                return repr(value)
            return str(value)

        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            for image_id, row in self.per_image.items():
                writer.writerow(
                    [cell(image_id)] + [cell(row.get(col)) for col in self.CSV_COLUMNS[1:]]
                )
            for name, agg in (("MICRO", self.micro), ("MACRO", self.macro)):
                writer.writerow(
                    [name, "", "", ""] + [cell(agg.get(col)) for col in self.CSV_COLUMNS[4:]]
                )


def build_report(
    results: list[ImageEvalResult],
    class_names: tuple[str, ...],
    config: dict,
) -> EvalReport:
    macro, skipped = macro_aggregate(results)
    micro = micro_aggregate(results)
    classwise = {
        class_names[c]: {"auroc": v} for c, v in pooled_classwise_auroc(results).items()
    }
    per_image = {}
    for r in results:
        row = dict(r.metrics)
        row["threshold"] = r.threshold
        row["n_valid"] = r.n_valid
        row["n_misclassified"] = r.n_misclassified
        per_image[r.image_id] = row
    totals = {
        "images": len(results),
        "n_valid": sum(r.n_valid for r in results),
        "n_misclassified": sum(r.n_misclassified for r in results),
    }
    return EvalReport(
        config=config,
        per_image=per_image,
        micro=micro,
        macro=macro,
        macro_skipped=skipped,
        classwise=classwise,
        totals=totals,
    )
