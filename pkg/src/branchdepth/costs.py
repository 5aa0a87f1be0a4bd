"""Matching costs and cost-volume construction.

A cost volume ``C(x, y, d)`` holds, for every left-image pixel and every
candidate disparity ``d`` in ``[d_min, d_max]``, the cost of matching the
left pixel ``(x, y)`` against the right pixel ``(x - d, y)``.  Cells whose
required samples or windows fall outside either image carry the sentinel
``COST_INVALID`` (+inf) so they can never win a minimisation.

Three costs are supported:

* ``ad``  — absolute intensity difference (pointwise),
* ``sd``  — squared intensity difference (pointwise),
* ``ncc`` — normalised cross-correlation over a square window; volumes
  store ``1 - NCC`` so that lower is uniformly better downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from branchdepth._integral import box_sum_full
from branchdepth.errors import ConfigurationError

COST_INVALID = math.inf

# Patch variances below this are treated as zero (undefined correlation).
# On 8-bit-valued images the smallest real nonzero sum of squared deviations
# is ~1, far above the float64 cancellation noise this absorbs.
_VARIANCE_EPS = 1e-6

COST_KINDS = ("ad", "sd", "ncc")


@dataclass(frozen=True)
class MatchWindow:
    """Matching window radius plus the scanline disparity search range."""

    radius: int
    d_min: int
    d_max: int

    def __post_init__(self) -> None:
        if self.radius < 0:
            raise ConfigurationError(f"window radius must be >= 0, got {self.radius}")
        if not 0 <= self.d_min < self.d_max:
            raise ConfigurationError(
                f"need 0 <= d_min < d_max, got d_min={self.d_min}, d_max={self.d_max}"
            )

    @property
    def num_disparities(self) -> int:
        return self.d_max - self.d_min + 1


@dataclass(frozen=True)
class WindowStats:
    """Mean intensities of the two patches compared by NCC."""

    mu_left: float
    mu_right: float


@dataclass
class CostVolume:
    """H x W x D grid of matching costs, lower-is-better unless flagged."""

    costs: np.ndarray
    d_min: int
    d_max: int
    polarity: str = "lower"

    def __post_init__(self) -> None:
        if self.costs.ndim != 3:
            raise ConfigurationError(f"cost volume must be 3-D, got shape {self.costs.shape}")
        if self.costs.shape[2] != self.d_max - self.d_min + 1:
            raise ConfigurationError(
                f"volume depth {self.costs.shape[2]} does not match disparity range "
                f"[{self.d_min}, {self.d_max}]"
            )
        if self.polarity not in ("lower", "higher"):
            raise ConfigurationError(f"unknown polarity {self.polarity!r}")

    @property
    def height(self) -> int:
        return self.costs.shape[0]

    @property
    def width(self) -> int:
        return self.costs.shape[1]

    @property
    def num_disparities(self) -> int:
        return self.costs.shape[2]

    @property
    def disparities(self) -> np.ndarray:
        return np.arange(self.d_min, self.d_max + 1)

    def plane(self, d: int) -> np.ndarray:
        """Cost slice for one disparity candidate."""
        if not self.d_min <= d <= self.d_max:
            raise ConfigurationError(f"disparity {d} outside [{self.d_min}, {self.d_max}]")
        return self.costs[:, :, d - self.d_min]


def validate_image_pair(left: np.ndarray, right: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Check a rectified pair and return both images as float64 arrays."""
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)
    for name, img in (("left", left), ("right", right)):
        if img.ndim != 2 or img.size == 0:
            raise ConfigurationError(f"{name} image must be a non-empty 2-D array, got shape {img.shape}")
        if not np.all(np.isfinite(img)):
            raise ConfigurationError(f"{name} image contains non-finite intensities")
        if img.min() < 0.0 or img.max() > 255.0:
            raise ConfigurationError(f"{name} image intensities must lie in [0, 255]")
    if left.shape != right.shape:
        raise ConfigurationError(f"image sizes differ: left {left.shape} vs right {right.shape}")
    return left, right


def _in_bounds(img: np.ndarray, x: int, y: int) -> bool:
    return 0 <= y < img.shape[0] and 0 <= x < img.shape[1]


def cost_ad(left: np.ndarray, right: np.ndarray, x: int, y: int, d: int) -> float:
    """Absolute intensity difference |left(x,y) - right(x-d,y)|.

    Out-of-bounds samples yield ``COST_INVALID`` rather than raising.
    """
    if not (_in_bounds(left, x, y) and _in_bounds(right, x - d, y)):
        return COST_INVALID
    return abs(float(left[y, x]) - float(right[y, x - d]))


def cost_sd(left: np.ndarray, right: np.ndarray, x: int, y: int, d: int) -> float:
    """Squared intensity difference (left(x,y) - right(x-d,y))^2."""
    if not (_in_bounds(left, x, y) and _in_bounds(right, x - d, y)):
        return COST_INVALID
    diff = float(left[y, x]) - float(right[y, x - d])
    return diff * diff


def _patches(
    left: np.ndarray, right: np.ndarray, radius: int, x: int, y: int, d: int
) -> tuple[np.ndarray, np.ndarray] | None:
    h, w = left.shape
    xr = x - d
    if not (radius <= y < h - radius and radius <= x < w - radius and radius <= xr < w - radius):
        return None
    lp = left[y - radius : y + radius + 1, x - radius : x + radius + 1]
    rp = right[y - radius : y + radius + 1, xr - radius : xr + radius + 1]
    return np.asarray(lp, dtype=np.float64), np.asarray(rp, dtype=np.float64)


def window_stats(
    left: np.ndarray, right: np.ndarray, window: MatchWindow, x: int, y: int, d: int
) -> WindowStats | None:
    """Patch mean intensities used by NCC, or None if a window exits the image."""
    patches = _patches(left, right, window.radius, x, y, d)
    if patches is None:
        return None
    lp, rp = patches
    return WindowStats(mu_left=float(lp.mean()), mu_right=float(rp.mean()))


def cost_ncc(
    left: np.ndarray, right: np.ndarray, window: MatchWindow, x: int, y: int, d: int
) -> float:
    """Normalised cross-correlation of the two patches, in [-1, 1].

    Returns ``COST_INVALID`` when either window exits an image or either
    patch has zero variance (undefined correlation).  Note this is the raw
    correlation; ``build_cost_volume`` converts it to ``1 - NCC``.
    """
    patches = _patches(left, right, window.radius, x, y, d)
    if patches is None:
        return COST_INVALID
    lp, rp = patches
    lc = lp - lp.mean()
    rc = rp - rp.mean()
    var_l = float(np.sum(lc * lc))
    var_r = float(np.sum(rc * rc))
    if var_l <= _VARIANCE_EPS or var_r <= _VARIANCE_EPS:
        return COST_INVALID
    value = float(np.sum(lc * rc)) / math.sqrt(var_l * var_r)
    return min(1.0, max(-1.0, value))


def build_cost_volume(
    left: np.ndarray, right: np.ndarray, window: MatchWindow, cost_kind: str = "ad"
) -> CostVolume:
    """Fill the full H x W x D volume for the chosen matching cost.

    The result is always lower-is-better: NCC planes store ``1 - NCC``.
    Construction is vectorised per disparity plane and deterministic.
    """
    if cost_kind not in COST_KINDS:
        raise ConfigurationError(f"unknown cost kind {cost_kind!r}, expected one of {COST_KINDS}")
    left, right = validate_image_pair(left, right)
    h, w = left.shape
    if window.d_max >= w:
        raise ConfigurationError(f"d_max={window.d_max} must be smaller than image width {w}")

    num_d = window.num_disparities
    costs = np.full((h, w, num_d), COST_INVALID, dtype=np.float64)

    if cost_kind == "ncc":
        _fill_ncc(costs, left, right, window)
    else:
        for i, d in enumerate(range(window.d_min, window.d_max + 1)):
            diff = left[:, d:] - right[:, : w - d]
            if cost_kind == "ad":
                costs[:, d:, i] = np.abs(diff)
            else:
                costs[:, d:, i] = diff * diff
    return CostVolume(costs=costs, d_min=window.d_min, d_max=window.d_max)


def _fill_ncc(costs: np.ndarray, left: np.ndarray, right: np.ndarray, window: MatchWindow) -> None:
    h, w = left.shape
    r = window.radius
    n = float((2 * r + 1) ** 2)

    sum_l = box_sum_full(left, r)
    sum_ll = box_sum_full(left * left, r)
    sum_r = box_sum_full(right, r)
    sum_rr = box_sum_full(right * right, r)
    var_l = sum_ll - sum_l * sum_l / n
    var_r = sum_rr - sum_r * sum_r / n

    for i, d in enumerate(range(window.d_min, window.d_max + 1)):
        # Valid centres: both windows fully inside, i.e. x in [r+d, w-1-r].
        x_lo = r + d
        x_hi = w - r
        if x_lo >= x_hi or 2 * r + 1 > h:
            continue
        sl = np.s_[r : h - r, x_lo:x_hi]
        sr = np.s_[r : h - r, x_lo - d : x_hi - d]
        cross = box_sum_full(left[:, d:] * right[:, : w - d], r)
        # cross is indexed in the shifted frame: centre x maps to column x - d.
        num = cross[r : h - r, x_lo - d : x_hi - d] - sum_l[sl] * sum_r[sr] / n
        ok = (var_l[sl] > _VARIANCE_EPS) & (var_r[sr] > _VARIANCE_EPS)
        ncc = num / np.sqrt(np.where(ok, var_l[sl] * var_r[sr], 1.0))
        ncc = np.minimum(1.0, np.maximum(-1.0, ncc))
        costs[r : h - r, x_lo:x_hi, i] = np.where(ok, 1.0 - ncc, COST_INVALID)
