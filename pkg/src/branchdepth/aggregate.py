"""Cost aggregation: fixed window, multi-window, diffusion, semi-global.

All aggregators consume and produce lower-is-better cost volumes.  Cells
that are ``COST_INVALID`` in the input stay invalid in the output; valid
cells never read invalid neighbours (they are excluded and the window sum
renormalised).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from branchdepth._integral import box_sum_clipped
from branchdepth.costs import COST_INVALID, CostVolume
from branchdepth.errors import ConfigurationError
from branchdepth.refine import DisparityMap

_DIRECTIONS_4 = ((1, 0), (-1, 0), (0, 1), (0, -1))
_DIRECTIONS_8 = _DIRECTIONS_4 + ((1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass(frozen=True)
class MultiWindowParams:
    """Window-centre offsets (dx, dy) and the shared window radius."""

    offsets: tuple[tuple[int, int], ...]
    radius: int

    def __post_init__(self) -> None:
        if len(self.offsets) < 1:
            raise ConfigurationError("multi-window aggregation needs at least one offset")
        if len(set(self.offsets)) != len(self.offsets):
            raise ConfigurationError(f"window offsets must be distinct, got {self.offsets}")
        if self.radius < 0:
            raise ConfigurationError(f"window radius must be >= 0, got {self.radius}")


@dataclass(frozen=True)
class DiffusionParams:
    """Iteration count, per-round weights, and stencil for cost diffusion."""

    iterations: int
    weights: tuple[float, ...] | None = None
    neighbors: int = 4

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigurationError(f"diffusion needs >= 1 iteration, got {self.iterations}")
        if self.neighbors not in (4, 8):
            raise ConfigurationError(f"diffusion stencil must be 4- or 8-neighbour, got {self.neighbors}")
        if self.weights is not None:
            if len(self.weights) != self.iterations:
                raise ConfigurationError(
                    f"{len(self.weights)} weights given for {self.iterations} iterations"
                )
            if any(not np.isfinite(w) or w < 0 for w in self.weights):
                raise ConfigurationError(f"diffusion weights must be finite and >= 0, got {self.weights}")

    def round_weights(self) -> tuple[float, ...]:
        return self.weights if self.weights is not None else (1.0,) * self.iterations


@dataclass(frozen=True)
class EnergyParams:
    """Smoothness penalties of the scanline energy model.

    ``p1`` penalises unit disparity jumps between neighbours, ``p2`` larger
    jumps, and ``lam`` weights the whole smoothness term against the data
    term.  The semi-global recurrence therefore applies effective penalties
    ``lam * p1`` and ``lam * p2``.
    """

    p1: float
    p2: float
    lam: float = 1.0
    paths: int = 4

    def __post_init__(self) -> None:
        if not 0 <= self.p1 <= self.p2 or not np.isfinite(self.p2):
            raise ConfigurationError(f"need 0 <= p1 <= p2 finite, got p1={self.p1}, p2={self.p2}")
        if self.lam < 0:
            raise ConfigurationError(f"smoothness weight must be >= 0, got {self.lam}")
        if self.paths not in (4, 8):
            raise ConfigurationError(f"paths must be 4 or 8, got {self.paths}")


def _masked_window_sum(costs: np.ndarray, radius: int) -> np.ndarray:
    """Per-plane window sums over valid cells, renormalised to the full area."""
    num_d = costs.shape[2]
    area = float((2 * radius + 1) ** 2)
    sums = np.full_like(costs, COST_INVALID)
    for i in range(num_d):
        plane = costs[:, :, i]
        valid = np.isfinite(plane)
        total = box_sum_clipped(np.where(valid, plane, 0.0), radius)
        count = box_sum_clipped(valid.astype(np.float64), radius)
        np.divide(total * area, count, out=sums[:, :, i], where=count > 0)
    return sums


def aggregate_fixed(cv: CostVolume, radius: int) -> CostVolume:
    """Sum costs over a (2r+1)^2 window at the same disparity.

    Invalid cells are excluded from the sum and the result is rescaled to
    the full window area, so a constant plane aggregates to area * cost
    everywhere.  A cell that is itself invalid stays invalid.
    """
    if radius < 0:
        raise ConfigurationError(f"window radius must be >= 0, got {radius}")
    if radius == 0:
        return CostVolume(costs=cv.costs.copy(), d_min=cv.d_min, d_max=cv.d_max)
    sums = _masked_window_sum(cv.costs, radius)
    out = np.where(np.isfinite(cv.costs), sums, COST_INVALID)
    return CostVolume(costs=out, d_min=cv.d_min, d_max=cv.d_max)


def aggregate_multi(cv: CostVolume, params: MultiWindowParams) -> CostVolume:
    """Sum the window sums of several offset windows per cell.

    Each offset window contributes its renormalised fixed-window sum taken
    at the shifted centre; windows whose shifted centre leaves the image or
    covers no valid cell contribute nothing.  With a single zero offset this
    reduces exactly to :func:`aggregate_fixed`.
    """
    h, w, num_d = cv.costs.shape
    sums = _masked_window_sum(cv.costs, params.radius)
    acc = np.zeros_like(cv.costs)
    contributed = np.zeros(cv.costs.shape, dtype=bool)
    for dx, dy in params.offsets:
        src_y = np.arange(h) + dy
        src_x = np.arange(w) + dx
        ok_y = (src_y >= 0) & (src_y < h)
        ok_x = (src_x >= 0) & (src_x < w)
        shifted = sums[np.clip(src_y, 0, h - 1)[:, None], np.clip(src_x, 0, w - 1)[None, :], :]
        in_image = (ok_y[:, None] & ok_x[None, :])[:, :, None] & np.isfinite(shifted)
        acc += np.where(in_image, shifted, 0.0)
        contributed |= in_image
    out = np.where(np.isfinite(cv.costs) & contributed, acc, COST_INVALID)
    return CostVolume(costs=out, d_min=cv.d_min, d_max=cv.d_max)


def _shift_plane(plane: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Shift with clamp-to-edge, so every tap stays inside the image."""
    h, w = plane.shape
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return plane[ys[:, None], xs[None, :]]


def aggregate_diffuse(cv: CostVolume, params: DiffusionParams) -> CostVolume:
    """Iteratively average each cell with its neighbourhood.

    One round replaces each valid cell by the normalised average of the
    in-stencil taps (centre plus 4 or 8 neighbours, clamped at the image
    edge), scaled by that round's weight.  With unit weights the total cost
    per disparity plane is conserved and a uniform plane is a fixed point.
    """
    if params.neighbors == 4:
        taps = ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1))
    else:
        taps = ((0, 0),) + _DIRECTIONS_8
    out = cv.costs.copy()
    num_d = out.shape[2]
    for weight in params.round_weights():
        for i in range(num_d):
            plane = out[:, :, i]
            valid = np.isfinite(plane)
            if not valid.any():
                continue
            num = np.zeros(plane.shape)
            den = np.zeros(plane.shape)
            vals = np.where(valid, plane, 0.0)
            flags = valid.astype(np.float64)
            for dx, dy in taps:
                num += _shift_plane(vals, dx, dy)
                den += _shift_plane(flags, dx, dy)
            averaged = np.full(plane.shape, COST_INVALID)
            np.divide(weight * num, den, out=averaged, where=valid & (den > 0))
            out[:, :, i] = np.where(valid, averaged, COST_INVALID)
    return CostVolume(costs=out, d_min=cv.d_min, d_max=cv.d_max)


def _scanline_pass(costs: np.ndarray, out: np.ndarray, dx: int, dy: int, p1: float, p2: float) -> None:
    """Accumulate one direction's scanline costs into ``out``.

    The recurrence at pixel p with predecessor q = p - (dx, dy) is

        L(p, d) = C(p, d) + min(L(q, d), L(q, d -/+ 1) + p1, min_k L(q, k) + p2)
                - min_k L(q, k)

    and L(p, d) = C(p, d) where q is outside the image or entirely invalid.
    """
    h, w, num_d = costs.shape

    def step(cost_slab: np.ndarray, prev: np.ndarray) -> np.ndarray:
        min_prev = prev.min(axis=1)
        has_prev = np.isfinite(min_prev)
        safe_min = np.where(has_prev, min_prev, 0.0)[:, None]
        inf_col = np.full((prev.shape[0], 1), COST_INVALID)
        down = np.concatenate([inf_col, prev[:, :-1]], axis=1)  # L(q, d-1)
        up = np.concatenate([prev[:, 1:], inf_col], axis=1)  # L(q, d+1)
        # The p2 candidate keeps `best` finite even in lanes whose direct
        # predecessors are invalid, so no inf - inf can arise below.
        best = np.minimum(prev, np.minimum(down, up) + p1)
        best = np.minimum(best, safe_min + p2)
        return np.where(has_prev[:, None], cost_slab + best - safe_min, cost_slab)

    if dx == 0:
        rows = range(h) if dy > 0 else range(h - 1, -1, -1)
        prev = np.full((w, num_d), COST_INVALID)
        for y in rows:
            current = step(costs[y], prev)
            out[y] += current
            prev = current
    else:
        cols = range(w) if dx > 0 else range(w - 1, -1, -1)
        prev = np.full((h, num_d), COST_INVALID)
        for x in cols:
            if dy > 0:
                shifted = np.concatenate([np.full((1, num_d), COST_INVALID), prev[:-1]], axis=0)
            elif dy < 0:
                shifted = np.concatenate([prev[1:], np.full((1, num_d), COST_INVALID)], axis=0)
            else:
                shifted = prev
            current = step(costs[:, x, :], shifted)
            out[:, x, :] += current
            prev = current


def aggregate_semiglobal(cv: CostVolume, params: EnergyParams) -> CostVolume:
    """Sum scanline dynamic-programme costs over 4 or 8 directions.

    Along a single path the recurrence is the exact minimiser of the 1-D
    energy ``sum C + lam * sum rho`` with the two-level p1/p2 penalty, up
    to a per-pixel normalisation that leaves the argmin unchanged.
    Directions are accumulated in a fixed order, so the result is
    deterministic.
    """
    p1 = params.lam * params.p1
    p2 = params.lam * params.p2
    directions = _DIRECTIONS_4 if params.paths == 4 else _DIRECTIONS_8
    out = np.zeros_like(cv.costs)
    for dx, dy in directions:
        _scanline_pass(cv.costs, out, dx, dy, p1, p2)
    return CostVolume(costs=out, d_min=cv.d_min, d_max=cv.d_max)


def energy_of(disp: DisparityMap, cv: CostVolume, params: EnergyParams) -> float:
    """Evaluate the global energy E_data + lam * E_smooth of a labelling.

    Disparities are treated as integer labels (values are rounded); the
    smoothness term runs over right and down neighbour pairs where both
    pixels are valid, with rho = 0 / p1 / p2 for jumps of 0 / 1 / more.
    Invalid pixels contribute nothing.
    """
    if disp.values.shape != cv.costs.shape[:2]:
        raise ConfigurationError(
            f"disparity map {disp.values.shape} does not match volume {cv.costs.shape[:2]}"
        )
    valid = disp.valid
    labels = np.zeros(disp.values.shape, dtype=np.int64)
    if valid.any():
        rounded = np.rint(disp.values[valid]).astype(np.int64)
        if rounded.min() < cv.d_min or rounded.max() > cv.d_max:
            raise ConfigurationError(
                f"disparity values outside volume range [{cv.d_min}, {cv.d_max}]"
            )
        labels[valid] = rounded

    ys, xs = np.nonzero(valid)
    e_data = float(np.sum(cv.costs[ys, xs, labels[valid] - cv.d_min]))

    def smooth_term(a_valid, b_valid, a_lab, b_lab) -> float:
        both = a_valid & b_valid
        jump = np.abs(a_lab[both] - b_lab[both])
        return float(np.sum(np.where(jump == 0, 0.0, np.where(jump == 1, params.p1, params.p2))))

    e_smooth = smooth_term(valid[:, :-1], valid[:, 1:], labels[:, :-1], labels[:, 1:])
    e_smooth += smooth_term(valid[:-1, :], valid[1:, :], labels[:-1, :], labels[1:, :])
    return e_data + params.lam * e_smooth
