"""Rectified pinhole stereo geometry: projection, triangulation, depth.

Conventions used throughout the package:

* the left camera frame is the world frame; the right camera sits at
  ``(+baseline, 0, 0)``,
* disparity is ``d = u_l - u_r`` and is non-negative for points in front
  of the rig,
* "depth" ``z`` is the distance along the optical axis (not the Euclidean
  ray length), and ``z = w / d`` with ``w = baseline * fx``.

All computations are double precision.
"""

from __future__ import annotations

from dataclasses import dataclass

from branchdepth.errors import (
    ConfigurationError,
    DepthRangeError,
    DisparityRangeError,
    RectificationError,
)

# Tolerance (pixels) for accepting externally supplied pixel pairs whose
# rows do not match exactly.  Rendered/projected pairs always have v_l == v_r.
EPSILON_RECT = 0.5


@dataclass(frozen=True)
class StereoRig:
    """Calibration of a rectified stereo pair.

    Focal lengths and principal point are in pixels, the baseline in
    metres.  The depth constant ``w = baseline_m * fx`` is always derived,
    never stored, so it cannot drift out of sync.
    """

    fx: float
    fy: float
    ox: float
    oy: float
    baseline_m: float

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ConfigurationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not self.baseline_m > 0:
            raise ConfigurationError(f"baseline must be positive, got {self.baseline_m}")

    @property
    def w(self) -> float:
        """Depth constant ``baseline * fx`` (metre-pixels)."""
        return self.baseline_m * self.fx


@dataclass(frozen=True)
class WorldPoint:
    """Point in the left-camera frame, metres."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class PixelPair:
    """Corresponding pixel coordinates of one scene point in both images."""

    ul: float
    vl: float
    ur: float
    vr: float

    @property
    def disparity(self) -> float:
        return self.ul - self.ur


def project(rig: StereoRig, point: WorldPoint) -> PixelPair:
    """Project a world point into both rectified images.

    Raises:
        DepthRangeError: if ``point.z <= 0``.
    """
    if not point.z > 0:
        raise DepthRangeError(f"cannot project point with non-positive depth z={point.z}")
    ul = rig.fx * point.x / point.z + rig.ox
    vl = rig.fy * point.y / point.z + rig.oy
    ur = rig.fx * (point.x - rig.baseline_m) / point.z + rig.ox
    return PixelPair(ul=ul, vl=vl, ur=ur, vr=vl)


def triangulate(rig: StereoRig, pair: PixelPair) -> WorldPoint:
    """Recover the world point observed at a pixel pair.

    Raises:
        RectificationError: if the pair's rows differ by more than
            ``EPSILON_RECT`` pixels.
        DisparityRangeError: if the disparity is zero or negative (point
            at or beyond infinity).
    """
    if abs(pair.vl - pair.vr) > EPSILON_RECT:
        raise RectificationError(
            f"pixel pair violates rectification: |vl - vr| = {abs(pair.vl - pair.vr):.3f} px "
            f"exceeds {EPSILON_RECT} px"
        )
    d = pair.ul - pair.ur
    if not d > 0:
        raise DisparityRangeError(f"disparity {d} is not positive: point at or beyond infinity")
    x = rig.baseline_m * (pair.ul - rig.ox) / d
    y = rig.baseline_m * rig.fx * (pair.vl - rig.oy) / (rig.fy * d)
    z = rig.baseline_m * rig.fx / d
    return WorldPoint(x=x, y=y, z=z)


def disparity_to_depth(rig: StereoRig, disparity: float) -> float:
    """Convert a disparity (pixels) to axial depth (metres): ``z = w / d``.

    Raises:
        DisparityRangeError: if ``disparity <= 0``.
    """
    if not disparity > 0:
        raise DisparityRangeError(f"disparity {disparity} is not positive")
    return rig.w / disparity
