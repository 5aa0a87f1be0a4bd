"""Disparity selection and refinement.

The stages here follow the classical post-processing chain: winner-take-all
selection, left-right consistency, median filtering, parabolic sub-pixel
interpolation, and edge-preserving weighted-least-squares smoothing.  Each
stage consumes and produces a :class:`DisparityMap`, whose invalid pixels
are excluded from every computation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from branchdepth.costs import CostVolume
from branchdepth.errors import ConfigurationError

_SUBPIXEL_DENOM_EPS = 1e-12


@dataclass
class DisparityMap:
    """Per-pixel real-valued disparity with an explicit validity mask.

    Invalid pixels store NaN; ``values`` is normalised to that convention
    on construction.
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.ndim != 2 or self.values.shape != self.valid.shape:
            raise ConfigurationError(
                f"values {self.values.shape} and mask {self.valid.shape} must be equal 2-D shapes"
            )
        self.values = np.where(self.valid, self.values, np.nan)
        if not np.all(np.isfinite(self.values[self.valid])):
            raise ConfigurationError("valid pixels must hold finite disparities")

    @classmethod
    def from_values(cls, values: np.ndarray) -> "DisparityMap":
        """Treat every finite entry as valid."""
        values = np.asarray(values, dtype=np.float64)
        return cls(values=values, valid=np.isfinite(values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def finite_values(self) -> np.ndarray:
        """Disparities of the valid pixels, flattened."""
        return self.values[self.valid]

    def copy(self) -> "DisparityMap":
        return DisparityMap(values=self.values.copy(), valid=self.valid.copy())


@dataclass(frozen=True)
class WlsParams:
    """Weighted-least-squares smoothing parameters.

    ``lam`` balances the smoothness term against the data term and ``sigma``
    scales the intensity-similarity weights.  ``data_weights`` optionally
    gives per-pixel data confidences; by default valid pixels weigh 1 and
    invalid pixels are excluded entirely.
    """

    lam: float
    sigma: float
    iterations: int = 200
    tol: float = 1e-6
    data_weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ConfigurationError(f"lam must be >= 0, got {self.lam}")
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.tol < 0:
            raise ConfigurationError(f"tol must be >= 0, got {self.tol}")


def select_wta(cv: CostVolume) -> DisparityMap:
    """Pick, per pixel, the disparity with minimum aggregated cost.

    Ties break toward the smaller disparity.  Pixels whose cost column is
    entirely invalid become invalid rather than raising.
    """
    if cv.polarity != "lower":
        raise ConfigurationError("winner-take-all requires a lower-is-better volume")
    best = cv.costs.min(axis=2)
    valid = np.isfinite(best)
    values = cv.d_min + np.argmin(cv.costs, axis=2).astype(np.float64)
    return DisparityMap(values=np.where(valid, values, np.nan), valid=valid)


def lr_consistency(d_left: DisparityMap, d_right: DisparityMap, tau: float = 1.0) -> DisparityMap:
    """Invalidate left pixels whose right-image counterpart disagrees.

    Pixel (x, y) survives iff ``|d_left(x, y) - d_right(x - round(d_left), y)|
    <= tau``; lookups outside the right map or onto invalid pixels fail the
    check.
    """
    if d_left.values.shape != d_right.values.shape:
        raise ConfigurationError(
            f"map sizes differ: {d_left.values.shape} vs {d_right.values.shape}"
        )
    h, w = d_left.values.shape
    xs = np.arange(w)[None, :].repeat(h, axis=0)
    lookup = xs - np.rint(np.where(d_left.valid, d_left.values, 0.0)).astype(np.int64)
    in_bounds = d_left.valid & (lookup >= 0) & (lookup < w)
    lookup_safe = np.clip(lookup, 0, w - 1)
    ys = np.arange(h)[:, None].repeat(w, axis=1)
    right_vals = d_right.values[ys, lookup_safe]
    right_ok = d_right.valid[ys, lookup_safe]
    with np.errstate(invalid="ignore"):
        consistent = np.abs(d_left.values - right_vals) <= tau
    keep = in_bounds & right_ok & consistent
    return DisparityMap(values=np.where(keep, d_left.values, np.nan), valid=keep)


def subpixel_refine(disp: DisparityMap, cv: CostVolume) -> DisparityMap:
    """Parabolic sub-pixel interpolation around each integer winner.

    Only pixels holding an integer disparity strictly inside the search
    range, with finite costs at d-1, d, d+1 and a non-degenerate curvature,
    are adjusted; everything else passes through unchanged.  The correction
    is clamped to +/- 0.5 px.
    """
    if disp.values.shape != cv.costs.shape[:2]:
        raise ConfigurationError(
            f"disparity map {disp.values.shape} does not match volume {cv.costs.shape[:2]}"
        )
    values = disp.values.copy()
    with np.errstate(invalid="ignore"):
        integral = disp.valid & (np.rint(disp.values) == disp.values)
        inside = integral & (disp.values >= cv.d_min + 1) & (disp.values <= cv.d_max - 1)
    if not inside.any():
        return DisparityMap(values=values, valid=disp.valid.copy())

    ys, xs = np.nonzero(inside)
    idx = disp.values[ys, xs].astype(np.int64) - cv.d_min
    c_minus = cv.costs[ys, xs, idx - 1]
    c_zero = cv.costs[ys, xs, idx]
    c_plus = cv.costs[ys, xs, idx + 1]
    # Median filling can hand us pixels whose cost column is invalid here,
    # so inf - inf is possible and must be masked, not computed.
    with np.errstate(invalid="ignore"):
        denom = 2.0 * (c_plus + c_minus - 2.0 * c_zero)
        usable = (
            np.isfinite(c_minus)
            & np.isfinite(c_zero)
            & np.isfinite(c_plus)
            & (np.abs(denom) >= _SUBPIXEL_DENOM_EPS)
        )
        offset = np.zeros(denom.shape)
        np.divide(c_plus - c_minus, denom, out=offset, where=usable)
    offset = np.clip(-offset, -0.5, 0.5)
    values[ys, xs] = disp.values[ys, xs] + np.where(usable, offset, 0.0)
    return DisparityMap(values=values, valid=disp.valid.copy())


def median_filter(disp: DisparityMap, radius: int = 1) -> DisparityMap:
    """Per-pixel median over the valid neighbours of a (2r+1)^2 window.

    A pixel with no valid neighbour in its window stays invalid; a pixel
    that is invalid but has valid neighbours takes their median.
    """
    if radius < 1:
        raise ConfigurationError(f"median radius must be >= 1, got {radius}")
    padded = np.pad(disp.values, radius, mode="constant", constant_values=np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (2 * radius + 1, 2 * radius + 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN windows are expected
        values = np.nanmedian(windows, axis=(2, 3))
    return DisparityMap(values=values, valid=np.isfinite(values))


def _neighbour_weights(guide: np.ndarray, sigma: float) -> tuple[np.ndarray, np.ndarray]:
    """Intensity-similarity weights for right and down neighbour pairs."""
    diff_right = guide[:, :-1] - guide[:, 1:]
    diff_down = guide[:-1, :] - guide[1:, :]
    scale = 2.0 * sigma * sigma
    return np.exp(-(diff_right**2) / scale), np.exp(-(diff_down**2) / scale)


def _objective_arrays(
    candidate: np.ndarray,
    initial: np.ndarray,
    valid: np.ndarray,
    data_w: np.ndarray,
    w_right: np.ndarray,
    w_down: np.ndarray,
    lam: float,
) -> float:
    diff = np.where(valid, candidate - initial, 0.0)
    data = float(np.sum(data_w * diff * diff))
    cand = np.where(valid, candidate, 0.0)
    pair_right = valid[:, :-1] & valid[:, 1:]
    pair_down = valid[:-1, :] & valid[1:, :]
    dr = np.where(pair_right, cand[:, :-1] - cand[:, 1:], 0.0)
    dd = np.where(pair_down, cand[:-1, :] - cand[1:, :], 0.0)
    smooth = float(np.sum(w_right * dr * dr) + np.sum(w_down * dd * dd))
    return data + lam * smooth


def wls_objective(
    candidate: DisparityMap, initial: DisparityMap, guide: np.ndarray, params: WlsParams
) -> float:
    """Exact value of the WLS objective for a candidate map.

    Sums the weighted squared data residual over pixels valid in both maps
    plus ``lam`` times the intensity-weighted squared differences over
    4-neighbour pairs of mutually valid pixels.
    """
    guide = np.asarray(guide, dtype=np.float64)
    if candidate.values.shape != initial.values.shape or candidate.values.shape != guide.shape:
        raise ConfigurationError("candidate, initial and guide shapes must match")
    valid = candidate.valid & initial.valid
    data_w = _data_weights(params, valid)
    w_right, w_down = _neighbour_weights(guide, params.sigma)
    return _objective_arrays(
        candidate.values, np.where(valid, initial.values, 0.0), valid, data_w, w_right, w_down, params.lam
    )


def _data_weights(params: WlsParams, valid: np.ndarray) -> np.ndarray:
    if params.data_weights is None:
        return valid.astype(np.float64)
    weights = np.asarray(params.data_weights, dtype=np.float64)
    if weights.shape != valid.shape:
        raise ConfigurationError(
            f"data_weights shape {weights.shape} does not match map shape {valid.shape}"
        )
    if weights.min() < 0 or not np.all(np.isfinite(weights)):
        raise ConfigurationError("data_weights must be finite and >= 0")
    return np.where(valid, weights, 0.0)


def wls_smooth(disp: DisparityMap, guide: np.ndarray, params: WlsParams) -> DisparityMap:
    """Minimise the WLS objective by red-black Gauss-Seidel sweeps.

    Valid pixels are the optimisation variables; invalid pixels take no
    part (no inpainting) and pass through untouched.  Every sweep performs
    exact per-pixel minimisation, so the objective is non-increasing; the
    solver stops once its relative change drops below ``params.tol`` or
    after ``params.iterations`` sweeps, warning if the cap is hit first.
    """
    guide = np.asarray(guide, dtype=np.float64)
    if guide.shape != disp.values.shape:
        raise ConfigurationError(
            f"guide image {guide.shape} does not match disparity map {disp.values.shape}"
        )
    if params.lam == 0.0:
        return disp.copy()

    valid = disp.valid
    if not valid.any():
        return disp.copy()
    h, w = disp.values.shape
    d0 = np.where(valid, disp.values, 0.0)
    data_w = _data_weights(params, valid)

    w_right, w_down = _neighbour_weights(guide, params.sigma)
    pair_right = valid[:, :-1] & valid[:, 1:]
    pair_down = valid[:-1, :] & valid[1:, :]
    w_right = np.where(pair_right, w_right, 0.0)
    w_down = np.where(pair_down, w_down, 0.0)

    # Per-pixel weights toward each of the four neighbours.
    wl = np.zeros((h, w))
    wr = np.zeros((h, w))
    wu = np.zeros((h, w))
    wd = np.zeros((h, w))
    wr[:, :-1] = w_right
    wl[:, 1:] = w_right
    wd[:-1, :] = w_down
    wu[1:, :] = w_down
    denom = data_w + params.lam * (wl + wr + wu + wd)

    ys, xs = np.mgrid[0:h, 0:w]
    red = (ys + xs) % 2 == 0
    masks = (red & valid & (denom > 0), ~red & valid & (denom > 0))

    current = d0.copy()
    objective = _objective_arrays(current, d0, valid, data_w, w_right, w_down, params.lam)
    converged = False
    for _ in range(params.iterations):
        for mask in masks:
            padded = np.pad(current, 1, mode="constant")
            gathered = (
                wl * padded[1:-1, :-2]
                + wr * padded[1:-1, 2:]
                + wu * padded[:-2, 1:-1]
                + wd * padded[2:, 1:-1]
            )
            update = (data_w * d0 + params.lam * gathered) / np.where(denom > 0, denom, 1.0)
            current[mask] = update[mask]
        new_objective = _objective_arrays(current, d0, valid, data_w, w_right, w_down, params.lam)
        if objective == 0.0 or (objective - new_objective) <= params.tol * objective:
            objective = new_objective
            converged = True
            break
        objective = new_objective
    if not converged:
        warnings.warn(
            f"WLS solver hit the {params.iterations}-sweep cap before reaching "
            f"relative tolerance {params.tol}",
            RuntimeWarning,
            stacklevel=2,
        )
    return DisparityMap(values=np.where(valid, current, np.nan), valid=valid.copy())
