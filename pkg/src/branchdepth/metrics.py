"""Quantitative evaluation: RMSE, bad-pixel rate, mask IoU, mAP, histograms."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from branchdepth.errors import ConfigurationError, MetricUndefinedError
from branchdepth.localize import mad_filter
from branchdepth.refine import DisparityMap

_COCO_THRESHOLDS = tuple((50 + 5 * i) / 100 for i in range(10))
AP_INTERPOLATIONS = ("coco101", "trapezoid")


@dataclass(frozen=True)
class MapEvalParams:
    """IoU thresholds for mAP: 0.50 to 0.95 in steps of 0.05."""

    iou_thresholds: tuple[float, ...] = _COCO_THRESHOLDS

    def __post_init__(self) -> None:
        if len(self.iou_thresholds) != 10:
            raise ConfigurationError(
                f"expected exactly 10 IoU thresholds, got {len(self.iou_thresholds)}"
            )
        if list(self.iou_thresholds) != sorted(self.iou_thresholds):
            raise ConfigurationError("IoU thresholds must be ascending")


@dataclass(frozen=True)
class MaskInstance:
    """A predicted instance mask with its confidence score."""

    mask: np.ndarray
    score: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        if self.mask.ndim != 2:
            raise ConfigurationError(f"mask must be 2-D, got shape {self.mask.shape}")
        if not np.isfinite(self.score):
            raise ConfigurationError(f"instance score must be finite, got {self.score}")


@dataclass(frozen=True)
class DepthHistogram:
    """Binned depth samples plus robust summary statistics."""

    bin_edges: np.ndarray
    counts: np.ndarray
    median_m: float
    mad_m: float
    mean_retained_m: float

    def rows(self) -> list[tuple[float, float, int]]:
        """(bin_lo, bin_hi, count) triples, e.g. for CSV export."""
        return [
            (float(self.bin_edges[i]), float(self.bin_edges[i + 1]), int(self.counts[i]))
            for i in range(len(self.counts))
        ]


def rmse(actual, predicted) -> float:
    """Root mean squared error over pairs where both sides are finite.

    Raises:
        ConfigurationError: on length mismatch.
        MetricUndefinedError: if no finite pair remains.
    """
    actual = np.asarray(actual, dtype=np.float64).ravel()
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    if actual.shape != predicted.shape:
        raise ConfigurationError(f"length mismatch: {actual.shape} vs {predicted.shape}")
    include = np.isfinite(actual) & np.isfinite(predicted)
    if not include.any():
        raise MetricUndefinedError("no mutually valid pairs to evaluate RMSE on")
    diff = actual[include] - predicted[include]
    return float(np.sqrt(np.mean(diff * diff)))


def bad_pixel_rate(pred: DisparityMap, gt: DisparityMap, tau: float) -> float:
    """Fraction of mutually valid pixels with |pred - gt| > tau."""
    if pred.values.shape != gt.values.shape:
        raise ConfigurationError(
            f"map sizes differ: {pred.values.shape} vs {gt.values.shape}"
        )
    both = pred.valid & gt.valid
    if not both.any():
        raise MetricUndefinedError("no mutually valid pixels to evaluate bad-pixel rate on")
    bad = np.abs(pred.values[both] - gt.values[both]) > tau
    return float(np.mean(bad))


def mask_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Intersection over union of two binary masks; two empty masks give 1.0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ConfigurationError(f"mask sizes differ: {a.shape} vs {b.shape}")
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def average_precision(
    predictions: list[MaskInstance],
    ground_truth: list[np.ndarray],
    iou_threshold: float,
    interpolation: str = "coco101",
) -> float:
    """AP at one IoU threshold with greedy score-ordered matching.

    Predictions are visited in descending score order; each one matches the
    unmatched ground-truth mask of highest IoU, and counts as a true
    positive iff that IoU reaches the threshold.  ``coco101`` evaluates the
    precision envelope at 101 recall levels; ``trapezoid`` integrates the
    raw precision-recall curve (diagnostic only).
    """
    if interpolation not in AP_INTERPOLATIONS:
        raise ConfigurationError(
            f"unknown interpolation {interpolation!r}, expected one of {AP_INTERPOLATIONS}"
        )
    if not ground_truth:
        raise MetricUndefinedError("average precision needs at least one ground-truth mask")
    if not predictions:
        return 0.0

    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].score)
    gt_masks = [np.asarray(g, dtype=bool) for g in ground_truth]
    matched = [False] * len(gt_masks)
    tp = np.zeros(len(predictions))
    for rank, idx in enumerate(order):
        pred = predictions[idx]
        best_iou, best_gt = 0.0, -1
        for g, gt_mask in enumerate(gt_masks):
            if matched[g]:
                continue
            iou = mask_iou(pred.mask, gt_mask)
            if iou > best_iou:
                best_iou, best_gt = iou, g
        if best_gt >= 0 and best_iou >= iou_threshold:
            matched[best_gt] = True
            tp[rank] = 1.0

    cum_tp = np.cumsum(tp)
    precision = cum_tp / np.arange(1, len(predictions) + 1)
    recall = cum_tp / len(gt_masks)

    if interpolation == "trapezoid":
        curve_p = np.concatenate([[precision[0]], precision])
        curve_r = np.concatenate([[0.0], recall])
        return float(np.sum(np.diff(curve_r) * (curve_p[1:] + curve_p[:-1]) / 2.0))

    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    levels = np.linspace(0.0, 1.0, 101)
    first_reaching = np.searchsorted(recall, levels, side="left")
    interp = np.where(first_reaching < len(recall), envelope[np.minimum(first_reaching, len(recall) - 1)], 0.0)
    return float(np.mean(interp))


def map_50_95(
    predictions: list[MaskInstance],
    ground_truth: list[np.ndarray],
    params: MapEvalParams | None = None,
    interpolation: str = "coco101",
) -> float:
    """Mean AP over the ten IoU thresholds 0.50 to 0.95.

    An empty ground truth against non-empty predictions yields 0.0 with a
    warning; empty against empty is defined as 1.0 (agreement on absence,
    consistent with :func:`mask_iou`).
    """
    params = params or MapEvalParams()
    if not ground_truth:
        if predictions:
            warnings.warn(
                "mAP evaluated with empty ground truth and non-empty predictions: 0.0",
                RuntimeWarning,
                stacklevel=2,
            )
            return 0.0
        return 1.0
    aps = [average_precision(predictions, ground_truth, t, interpolation) for t in params.iou_thresholds]
    return float(np.mean(aps))


def depth_histogram(samples, bins: int = 10, k: float = 3.0) -> DepthHistogram:
    """Histogram of depth samples plus median/MAD/mean-of-retained stats."""
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size == 0:
        raise MetricUndefinedError("cannot histogram an empty sample")
    if not np.all(np.isfinite(samples)):
        raise ConfigurationError("depth samples must be finite")
    counts, edges = np.histogram(samples, bins=bins)
    stats = mad_filter(samples, k)
    return DepthHistogram(
        bin_edges=edges,
        counts=counts,
        median_m=stats.median,
        mad_m=stats.mad,
        mean_retained_m=float(np.mean(stats.retained)),
    )
