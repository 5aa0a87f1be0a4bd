"""Camera-to-branch distance from a boundary point set and a disparity map.

Two sampling strategies are provided:

* ``centroid`` — group the boundary points into triangles, take the
  triangle centroids as on-branch samples and expand each with a small
  ring of neighbours,
* ``polygon`` — rasterise the closed boundary polygon and sample every
  interior pixel.

Either way the sampled disparities become depths via ``z = w / d``, a
median-absolute-deviation filter rejects outliers, and the distance is the
mean of the retained depths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from branchdepth.errors import ConfigurationError, InsufficientPointsError, NoValidDepthError
from branchdepth.geometry import StereoRig
from branchdepth.refine import DisparityMap

LOCALIZE_METHODS = ("centroid", "polygon")


@dataclass(frozen=True)
class MadFilterResult:
    """Outcome of MAD-based outlier rejection over a depth sample."""

    retained: np.ndarray
    median: float
    mad: float
    rejected: int


@dataclass(frozen=True)
class SampleSet:
    """Centroids plus their ring expansions; ``combined`` is their union."""

    centroids: np.ndarray
    per_centroid: tuple[np.ndarray, ...]
    combined: np.ndarray
    m: int
    dropped: int


@dataclass(frozen=True)
class DistanceEstimate:
    """Distance statistics plus audit counts of the sampling pipeline."""

    distance_m: float
    median_m: float
    mad_m: float
    k: float
    method: str
    retained_count: int
    rejected_count: int
    skipped_invalid: int

    def as_dict(self) -> dict:
        return {
            "distance_m": self.distance_m,
            "median_m": self.median_m,
            "mad_m": self.mad_m,
            "k": self.k,
            "method": self.method,
            "retained": self.retained_count,
            "rejected": self.rejected_count,
            "skipped_invalid": self.skipped_invalid,
        }


def _as_points(points: np.ndarray, minimum: int = 3) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ConfigurationError(f"points must have shape (n, 2), got {points.shape}")
    if len(points) < minimum:
        raise InsufficientPointsError(f"need at least {minimum} points, got {len(points)}")
    if not np.all(np.isfinite(points)):
        raise ConfigurationError("points must be finite")
    return points


def group_triangles(points: np.ndarray) -> list[np.ndarray]:
    """Greedily group the points into floor(n/3) disjoint triples.

    Repeatedly the unused point with the smallest index is taken and paired
    with its two nearest unused neighbours (Euclidean distance, ties broken
    by index).  One or two leftover points stay ungrouped.  The grouping is
    deterministic for a given input order.
    """
    points = _as_points(points)
    unused = list(range(len(points)))
    triples: list[np.ndarray] = []
    while len(unused) >= 3:
        anchor = unused.pop(0)
        d2 = np.sum((points[unused] - points[anchor]) ** 2, axis=1)
        order = sorted(range(len(unused)), key=lambda i: (d2[i], unused[i]))
        chosen = sorted(order[:2], reverse=True)
        partners = [unused.pop(i) for i in chosen][::-1]
        triples.append(points[[anchor, *partners]].copy())
    return triples


def centroids_of(triples: list[np.ndarray]) -> np.ndarray:
    """Arithmetic mean of each triple, shape (k, 2)."""
    if not triples:
        raise InsufficientPointsError("no triples to take centroids of")
    return np.array([np.mean(np.asarray(t, dtype=np.float64), axis=0) for t in triples])


def expand_samples(
    centroids: np.ndarray, m: int, pattern_radius: float, image_size: tuple[int, int]
) -> SampleSet:
    """Add ``m`` ring samples around every centroid.

    Samples sit at angles ``2*pi*j/m`` on a circle of ``pattern_radius``
    pixels; samples falling outside the image are dropped (and counted),
    never clamped.  ``image_size`` is (width, height).
    """
    centroids = np.asarray(centroids, dtype=np.float64)
    if centroids.ndim != 2 or centroids.shape[1] != 2:
        raise ConfigurationError(f"centroids must have shape (k, 2), got {centroids.shape}")
    if m < 0:
        raise ConfigurationError(f"expansion count must be >= 0, got {m}")
    width, height = image_size
    angles = 2.0 * math.pi * np.arange(m) / max(m, 1)
    ring = pattern_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    per_centroid: list[np.ndarray] = []
    dropped = 0
    for centroid in centroids:
        samples = centroid[None, :] + ring
        inside = (
            (samples[:, 0] >= 0)
            & (samples[:, 0] <= width - 1)
            & (samples[:, 1] >= 0)
            & (samples[:, 1] <= height - 1)
        )
        dropped += int(m - inside.sum())
        per_centroid.append(samples[inside])
    expanded = np.concatenate(per_centroid, axis=0) if per_centroid else np.empty((0, 2))
    combined = np.concatenate([expanded, centroids], axis=0)
    return SampleSet(
        centroids=centroids,
        per_centroid=tuple(per_centroid),
        combined=combined,
        m=m,
        dropped=dropped,
    )


def mad_filter(depths: np.ndarray, k: float) -> MadFilterResult:
    """Keep depths within ``k`` median absolute deviations of the median.

    With MAD zero (at least half the values identical) only values exactly
    equal to the median survive; an infinite ``k`` disables rejection.
    """
    depths = np.asarray(depths, dtype=np.float64).ravel()
    if depths.size == 0:
        raise NoValidDepthError("cannot filter an empty depth sample")
    if k < 0:
        raise ConfigurationError(f"rejection threshold k must be >= 0, got {k}")
    median = float(np.median(depths))
    deviations = np.abs(depths - median)
    mad = float(np.median(deviations))
    if math.isinf(k):
        retained = depths.copy()
    else:
        retained = depths[deviations <= k * mad]
    return MadFilterResult(
        retained=retained, median=median, mad=mad, rejected=int(depths.size - retained.size)
    )


def polygon_interior_mask(points: np.ndarray, image_size: tuple[int, int]) -> np.ndarray:
    """Even-odd rasterisation of the closed polygon through the points.

    A pixel belongs to the interior iff its centre (integer coordinates)
    has an odd crossing number against the closed polyline taken in input
    order.  ``image_size`` is (width, height); the mask is (height, width).
    """
    points = _as_points(points)
    width, height = image_size
    mask = np.zeros((height, width), dtype=bool)

    x_lo = max(0, int(math.floor(points[:, 0].min())))
    x_hi = min(width - 1, int(math.ceil(points[:, 0].max())))
    y_lo = max(0, int(math.floor(points[:, 1].min())))
    y_hi = min(height - 1, int(math.ceil(points[:, 1].max())))
    if x_lo > x_hi or y_lo > y_hi:
        return mask

    px = np.arange(x_lo, x_hi + 1, dtype=np.float64)[None, :]
    py = np.arange(y_lo, y_hi + 1, dtype=np.float64)[:, None]
    crossings = np.zeros((y_hi - y_lo + 1, x_hi - x_lo + 1), dtype=np.int64)
    closed = np.vstack([points, points[:1]])
    for (x1, y1), (x2, y2) in zip(closed[:-1], closed[1:]):
        if y1 == y2:
            continue
        straddles = (y1 > py) != (y2 > py)
        x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        crossings += (straddles & (px < x_at)).astype(np.int64)
    mask[y_lo : y_hi + 1, x_lo : x_hi + 1] = crossings % 2 == 1
    return mask


def _lookup_depths(
    disp: DisparityMap, rig: StereoRig, samples: np.ndarray
) -> tuple[np.ndarray, int]:
    """Depths at the sample points, skipping invalid/non-positive pixels."""
    if samples.size == 0:
        return np.empty(0), 0
    xs = np.rint(samples[:, 0]).astype(np.int64)
    ys = np.rint(samples[:, 1]).astype(np.int64)
    in_bounds = (xs >= 0) & (xs < disp.width) & (ys >= 0) & (ys < disp.height)
    xs_safe = np.clip(xs, 0, disp.width - 1)
    ys_safe = np.clip(ys, 0, disp.height - 1)
    with np.errstate(invalid="ignore"):
        usable = in_bounds & disp.valid[ys_safe, xs_safe] & (disp.values[ys_safe, xs_safe] > 0)
    depths = rig.w / disp.values[ys_safe[usable], xs_safe[usable]]
    return depths, int(samples.shape[0] - usable.sum())


def estimate_distance(
    disp: DisparityMap,
    rig: StereoRig,
    points: np.ndarray,
    method: str = "centroid",
    m: int = 4,
    k: float = 3.0,
    pattern_radius: float = 2.0,
    filter_outliers: bool = True,
) -> DistanceEstimate:
    """Full localisation: sample depths around the branch and average them.

    ``method`` selects centroid-triangle sampling or polygon-fill sampling;
    ``filter_outliers=False`` skips MAD rejection (every valid depth is
    retained), which exists mainly to demonstrate why the filter matters.
    """
    if method not in LOCALIZE_METHODS:
        raise ConfigurationError(f"unknown method {method!r}, expected one of {LOCALIZE_METHODS}")
    points = _as_points(points)
    if (
        points[:, 0].min() < 0
        or points[:, 0].max() > disp.width - 1
        or points[:, 1].min() < 0
        or points[:, 1].max() > disp.height - 1
    ):
        raise ConfigurationError("branch points must lie inside the image bounds")

    if method == "centroid":
        triples = group_triangles(points)
        if not triples:
            raise InsufficientPointsError(f"need at least 3 points, got {len(points)}")
        centroids = centroids_of(triples)
        samples = expand_samples(centroids, m, pattern_radius, (disp.width, disp.height)).combined
    else:
        ys, xs = np.nonzero(polygon_interior_mask(points, (disp.width, disp.height)))
        samples = np.stack([xs, ys], axis=1).astype(np.float64)

    depths, skipped = _lookup_depths(disp, rig, samples)
    if depths.size == 0:
        raise NoValidDepthError(f"no valid depth under any of the {len(samples)} samples")

    result = mad_filter(depths, k if filter_outliers else math.inf)
    if result.retained.size == 0:
        raise NoValidDepthError(
            f"MAD filtering (k={k}) rejected all {depths.size} depth samples"
        )
    return DistanceEstimate(
        distance_m=float(np.mean(result.retained)),
        median_m=result.median,
        mad_m=result.mad,
        k=k,
        method=method,
        retained_count=int(result.retained.size),
        rejected_count=result.rejected,
        skipped_invalid=skipped,
    )
