"""Synthetic rectified stereo pairs with exact ground-truth disparity.

Scenes are built from fronto-parallel textured planes and finite cylinders
("branches").  Both views are rendered independently by intersecting each
pixel ray with the front-most primitive and shading the hit point with a
procedural texture attached to world coordinates, so corresponding pixels
in the two views sample the texture at exactly the same surface point --
no image-space resampling is involved.  Ground truth is ``d = w / z`` of
the front-most surface, and a left pixel counts as occluded when its
reprojection into the right view is covered by a nearer surface (or falls
outside the right image).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from branchdepth.errors import ConfigurationError
from branchdepth.geometry import StereoRig
from branchdepth.refine import DisparityMap

# A left pixel is occluded when the surface seen at its right-image
# reprojection is nearer by more than this, measured in disparity pixels.
_OCCLUSION_DISPARITY_STEP = 0.5

CYLINDER_PROFILES = ("round", "flat")


@dataclass(frozen=True)
class TextureParams:
    """Seeded value-noise texture: intensity = base + amplitude * noise.

    ``scale_m`` is the lattice spacing of the noise in world metres; an
    amplitude of at least ~40 intensity levels keeps windows matchable,
    and lowering it deliberately starves the matcher of texture.
    """

    seed: int = 0
    scale_m: float = 0.05
    base: float = 128.0
    amplitude: float = 80.0

    def __post_init__(self) -> None:
        if not self.scale_m > 0:
            raise ConfigurationError(f"texture scale must be > 0, got {self.scale_m}")
        if not 0 <= self.base <= 255:
            raise ConfigurationError(f"texture base must lie in [0, 255], got {self.base}")
        if self.amplitude < 0:
            raise ConfigurationError(f"texture amplitude must be >= 0, got {self.amplitude}")


@dataclass(frozen=True)
class PlanePrimitive:
    """Fronto-parallel plane at a fixed depth, optionally of finite extent.

    ``extent`` is (x0, x1, y0, y1) in world metres at the plane's depth;
    None covers everything the camera sees.
    """

    depth_m: float
    extent: tuple[float, float, float, float] | None = None
    texture: TextureParams = field(default_factory=TextureParams)

    def __post_init__(self) -> None:
        if not self.depth_m > 0:
            raise ConfigurationError(f"plane depth must be > 0, got {self.depth_m}")
        if self.extent is not None:
            x0, x1, y0, y1 = self.extent
            if not (x0 < x1 and y0 < y1):
                raise ConfigurationError(f"degenerate plane extent {self.extent}")


@dataclass(frozen=True)
class CylinderPrimitive:
    """Finite cylinder between two axis endpoints (world metres).

    ``profile`` selects the depth model: ``round`` ray-traces the curved
    surface, ``flat`` keeps the round silhouette but assigns the depth of
    the axis (a billboard, handy for exactly-constant-disparity branches).
    """

    p0: tuple[float, float, float]
    p1: tuple[float, float, float]
    radius_m: float
    profile: str = "round"
    texture: TextureParams = field(default_factory=TextureParams)

    def __post_init__(self) -> None:
        if not self.radius_m > 0:
            raise ConfigurationError(f"cylinder radius must be > 0, got {self.radius_m}")
        if self.profile not in CYLINDER_PROFILES:
            raise ConfigurationError(
                f"unknown profile {self.profile!r}, expected one of {CYLINDER_PROFILES}"
            )
        if min(self.p0[2], self.p1[2]) - self.radius_m <= 0:
            raise ConfigurationError("cylinder reaches behind the camera plane")


Primitive = PlanePrimitive | CylinderPrimitive


@dataclass(frozen=True)
class SceneSpec:
    """Image size, global texture seed, rig, and front-to-back primitives."""

    width: int
    height: int
    rig: StereoRig
    primitives: tuple[Primitive, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ConfigurationError(f"image size must be positive, got {self.width}x{self.height}")
        if not self.primitives:
            raise ConfigurationError("scene needs at least one primitive")


@dataclass
class RenderResult:
    """Rendered pair plus exact ground truth.

    ``gt`` and ``occlusion`` describe the left view; ``gt_right`` is the
    right view's own disparity map (right pixel x matches left pixel x+d),
    which left-right consistency checks need.
    """

    left: np.ndarray
    right: np.ndarray
    gt: DisparityMap
    occlusion: np.ndarray
    gt_right: DisparityMap


def _hash01(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic lattice hash to [0, 1), stable across platforms."""
    h = ix.astype(np.uint64) * np.uint64(0x9E3779B97F4A7C15)
    h ^= iy.astype(np.uint64) * np.uint64(0xC2B2AE3D27D4EB4F)
    h ^= np.uint64((seed * 0x165667B19E3779F9) % (1 << 64))
    h ^= h >> np.uint64(29)
    h *= np.uint64(0xBF58476D1CE4E5B9)
    h ^= h >> np.uint64(32)
    h *= np.uint64(0x94D049BB133111EB)
    h ^= h >> np.uint64(32)
    return h.astype(np.float64) / float(1 << 64)


def _value_noise(x: np.ndarray, y: np.ndarray, scale: float, seed: int) -> np.ndarray:
    """Smoothstep-interpolated lattice noise in [0, 1)."""
    gx = x / scale
    gy = y / scale
    ix = np.floor(gx).astype(np.int64)
    iy = np.floor(gy).astype(np.int64)
    fx = gx - ix
    fy = gy - iy
    ux = fx * fx * (3.0 - 2.0 * fx)
    uy = fy * fy * (3.0 - 2.0 * fy)
    v00 = _hash01(ix, iy, seed)
    v10 = _hash01(ix + 1, iy, seed)
    v01 = _hash01(ix, iy + 1, seed)
    v11 = _hash01(ix + 1, iy + 1, seed)
    top = v00 + (v10 - v00) * ux
    bottom = v01 + (v11 - v01) * ux
    return top + (bottom - top) * uy


def _texture(params: TextureParams, x: np.ndarray, y: np.ndarray, scene_seed: int) -> np.ndarray:
    seed = scene_seed * 7919 + params.seed
    noise = (2.0 / 3.0) * _value_noise(x, y, params.scale_m, seed)
    noise += (1.0 / 3.0) * _value_noise(x, y, params.scale_m / 3.0, seed + 1)
    return np.clip(params.base + params.amplitude * (2.0 * noise - 1.0), 0.0, 255.0)


def _plane_depth(
    prim: PlanePrimitive, dir_x: np.ndarray, dir_y: np.ndarray, camera_x: float
) -> np.ndarray:
    depth = np.full(dir_x.shape, np.inf)
    z = prim.depth_m
    if prim.extent is None:
        depth[:] = z
        return depth
    x0, x1, y0, y1 = prim.extent
    wx = camera_x + dir_x * z
    wy = dir_y * z
    covered = (wx >= x0) & (wx <= x1) & (wy >= y0) & (wy <= y1)
    depth[covered] = z
    return depth


def _cylinder_depth(
    prim: CylinderPrimitive, dir_x: np.ndarray, dir_y: np.ndarray, camera_x: float
) -> np.ndarray:
    """Depth of the near ray/cylinder intersection, +inf where it misses."""
    p0 = np.asarray(prim.p0, dtype=np.float64)
    p1 = np.asarray(prim.p1, dtype=np.float64)
    axis = p1 - p0
    length = float(np.linalg.norm(axis))
    if length == 0.0:
        raise ConfigurationError("cylinder axis endpoints coincide")
    u = axis / length

    origin = np.array([camera_x, 0.0, 0.0])
    m = origin - p0
    # Per-pixel ray direction (dir_x, dir_y, 1).
    v_dot_u = dir_x * u[0] + dir_y * u[1] + u[2]
    v_sq = dir_x * dir_x + dir_y * dir_y + 1.0
    m_dot_u = float(m @ u)
    m_dot_v = m[0] * dir_x + m[1] * dir_y + m[2]
    m_sq = float(m @ m)

    a = v_sq - v_dot_u * v_dot_u
    b = 2.0 * (m_dot_v - m_dot_u * v_dot_u)
    c = m_sq - m_dot_u * m_dot_u - prim.radius_m**2

    disc = b * b - 4.0 * a * c
    hit = (disc > 0) & (a > 1e-12)
    t = np.full(dir_x.shape, np.inf)
    np.divide(-b - np.sqrt(np.where(hit, disc, 0.0)), 2.0 * a, out=t, where=hit)
    s = m_dot_u + t * v_dot_u  # axis parameter of the hit point
    on_segment = hit & (t > 0) & (s >= 0) & (s <= length)

    depth = np.full(dir_x.shape, np.inf)
    if prim.profile == "round":
        depth[on_segment] = t[on_segment]
    else:
        axis_z = p0[2] + (s / length) * (p1[2] - p0[2])
        depth[on_segment] = axis_z[on_segment]
    return depth


def _render_view(
    spec: SceneSpec, rig: StereoRig, camera_x: float
) -> tuple[np.ndarray, np.ndarray]:
    """One view's intensity image and per-pixel depth (inf where empty)."""
    xs = (np.arange(spec.width, dtype=np.float64) - rig.ox) / rig.fx
    ys = (np.arange(spec.height, dtype=np.float64) - rig.oy) / rig.fy
    dir_x, dir_y = np.meshgrid(xs, ys)

    depth = np.full((spec.height, spec.width), np.inf)
    owner = np.full((spec.height, spec.width), -1, dtype=np.int64)
    for index, prim in enumerate(spec.primitives):
        if isinstance(prim, PlanePrimitive):
            prim_depth = _plane_depth(prim, dir_x, dir_y, camera_x)
        else:
            prim_depth = _cylinder_depth(prim, dir_x, dir_y, camera_x)
        nearer = prim_depth < depth
        depth[nearer] = prim_depth[nearer]
        owner[nearer] = index

    image = np.zeros((spec.height, spec.width))
    for index, prim in enumerate(spec.primitives):
        mask = owner == index
        if not mask.any():
            continue
        wx = camera_x + dir_x[mask] * depth[mask]
        wy = dir_y[mask] * depth[mask]
        image[mask] = _texture(prim.texture, wx, wy, spec.seed)
    return image, depth


def render_pair(spec: SceneSpec, rig: StereoRig) -> RenderResult:
    """Render both views plus exact disparity and occlusion ground truth."""
    left, left_depth = _render_view(spec, rig, camera_x=0.0)
    right, right_depth = _render_view(spec, rig, camera_x=rig.baseline_m)

    covered = np.isfinite(left_depth)
    with np.errstate(divide="ignore"):
        gt_values = np.where(covered, rig.w / left_depth, np.nan)
    gt = DisparityMap(values=gt_values, valid=covered)

    covered_r = np.isfinite(right_depth)
    with np.errstate(divide="ignore"):
        gt_right = DisparityMap(
            values=np.where(covered_r, rig.w / right_depth, np.nan), valid=covered_r
        )

    h, w = left_depth.shape
    xs = np.arange(w)[None, :]
    reproj = np.rint(xs - np.where(covered, gt_values, 0.0)).astype(np.int64)
    in_bounds = (reproj >= 0) & (reproj < w)
    reproj_safe = np.clip(reproj, 0, w - 1)
    ys = np.arange(h)[:, None].repeat(w, axis=1)
    d_right_seen = gt_right.values[ys, reproj_safe]
    with np.errstate(invalid="ignore"):
        blocked = d_right_seen > gt_values + _OCCLUSION_DISPARITY_STEP
    occlusion = ~covered | ~in_bounds | ~gt_right.valid[ys, reproj_safe] | blocked
    return RenderResult(left=left, right=right, gt=gt, occlusion=occlusion, gt_right=gt_right)


def scene_to_dict(spec: SceneSpec) -> dict:
    """JSON-serialisable form of a scene spec."""
    primitives = []
    for prim in spec.primitives:
        texture = {
            "seed": prim.texture.seed,
            "scale_m": prim.texture.scale_m,
            "base": prim.texture.base,
            "amplitude": prim.texture.amplitude,
        }
        if isinstance(prim, PlanePrimitive):
            primitives.append(
                {
                    "type": "plane",
                    "depth_m": prim.depth_m,
                    "extent": list(prim.extent) if prim.extent is not None else None,
                    "texture": texture,
                }
            )
        else:
            primitives.append(
                {
                    "type": "cylinder",
                    "p0": list(prim.p0),
                    "p1": list(prim.p1),
                    "radius_m": prim.radius_m,
                    "profile": prim.profile,
                    "texture": texture,
                }
            )
    rig = spec.rig
    return {
        "width": spec.width,
        "height": spec.height,
        "seed": spec.seed,
        "rig": {
            "fx": rig.fx,
            "fy": rig.fy,
            "ox": rig.ox,
            "oy": rig.oy,
            "baseline_m": rig.baseline_m,
        },
        "primitives": primitives,
    }


def scene_from_dict(data: dict) -> SceneSpec:
    """Inverse of :func:`scene_to_dict`, validating as it builds."""
    try:
        rig = StereoRig(**{key: float(data["rig"][key]) for key in ("fx", "fy", "ox", "oy", "baseline_m")})
        primitives: list[Primitive] = []
        for entry in data["primitives"]:
            texture = TextureParams(**entry.get("texture", {}))
            if entry["type"] == "plane":
                extent = entry.get("extent")
                primitives.append(
                    PlanePrimitive(
                        depth_m=float(entry["depth_m"]),
                        extent=tuple(float(v) for v in extent) if extent is not None else None,
                        texture=texture,
                    )
                )
            elif entry["type"] == "cylinder":
                primitives.append(
                    CylinderPrimitive(
                        p0=tuple(float(v) for v in entry["p0"]),
                        p1=tuple(float(v) for v in entry["p1"]),
                        radius_m=float(entry["radius_m"]),
                        profile=entry.get("profile", "round"),
                        texture=texture,
                    )
                )
            else:
                raise ConfigurationError(f"unknown primitive type {entry['type']!r}")
        return SceneSpec(
            width=int(data["width"]),
            height=int(data["height"]),
            rig=rig,
            primitives=tuple(primitives),
            seed=int(data.get("seed", 0)),
        )
    except (KeyError, TypeError) as exc:
        raise ConfigurationError(f"malformed scene description: {exc}") from exc


def branch_scene(
    distance_m: float,
    rig: StereoRig,
    width: int = 640,
    height: int = 480,
    n_points: int = 24,
    seed: int = 0,
) -> tuple[SceneSpec, np.ndarray]:
    """Background plane plus a 10 mm horizontal branch at the given distance.

    The cylinder axis runs parallel to the image rows at the principal-point
    height, with its front surface exactly ``distance_m`` from the camera
    along the centre row.  Also returns an outline point set tracing the
    branch silhouette (top edge left-to-right, bottom edge back), the shape
    an upstream segmentation stage would deliver.
    """
    if not distance_m > 0:
        raise ConfigurationError(f"branch distance must be > 0, got {distance_m}")
    if n_points < 3:
        raise ConfigurationError(f"need at least 3 outline points, got {n_points}")
    radius = 0.010
    axis_z = distance_m + radius
    x_left = (0.2 * width - rig.ox) * axis_z / rig.fx
    x_right = (0.8 * width - rig.ox) * axis_z / rig.fx

    background = PlanePrimitive(
        depth_m=distance_m + 1.0,
        texture=TextureParams(seed=1, scale_m=0.08, base=110.0, amplitude=60.0),
    )
    branch = CylinderPrimitive(
        p0=(x_left, 0.0, axis_z),
        p1=(x_right, 0.0, axis_z),
        radius_m=radius,
        profile="round",
        texture=TextureParams(seed=2, scale_m=0.02, base=170.0, amplitude=60.0),
    )
    spec = SceneSpec(
        width=width, height=height, rig=rig, primitives=(branch, background), seed=seed
    )

    # Silhouette rows: tangent rays to the cylinder cross-section circle.
    slope = radius / math.sqrt(axis_z**2 - radius**2)
    v_top = rig.oy - rig.fy * slope
    v_bottom = rig.oy + rig.fy * slope
    u0 = 0.2 * width
    u1 = 0.8 * width
    span = u1 - u0
    n_top = (n_points + 1) // 2
    n_bottom = n_points - n_top
    u_top = np.linspace(u0 + 0.05 * span, u1 - 0.05 * span, n_top)
    u_bottom = np.linspace(u1 - 0.05 * span, u0 + 0.05 * span, n_bottom)
    points = np.concatenate(
        [
            np.stack([u_top, np.full(n_top, v_top)], axis=1),
            np.stack([u_bottom, np.full(n_bottom, v_bottom)], axis=1),
        ]
    )
    return spec, points
