"""Classical stereo matching and camera-to-branch distance estimation."""

from branchdepth.aggregate import (
    DiffusionParams,
    EnergyParams,
    MultiWindowParams,
    aggregate_diffuse,
    aggregate_fixed,
    aggregate_multi,
    aggregate_semiglobal,
    energy_of,
)
from branchdepth.costs import (
    COST_INVALID,
    CostVolume,
    MatchWindow,
    WindowStats,
    build_cost_volume,
    cost_ad,
    cost_ncc,
    cost_sd,
    window_stats,
)
from branchdepth.geometry import (
    EPSILON_RECT,
    PixelPair,
    StereoRig,
    WorldPoint,
    disparity_to_depth,
    project,
    triangulate,
)
from branchdepth.localize import (
    DistanceEstimate,
    SampleSet,
    centroids_of,
    estimate_distance,
    expand_samples,
    group_triangles,
    mad_filter,
    polygon_interior_mask,
)
from branchdepth.metrics import (
    DepthHistogram,
    MapEvalParams,
    MaskInstance,
    average_precision,
    bad_pixel_rate,
    depth_histogram,
    map_50_95,
    mask_iou,
    rmse,
)
from branchdepth.pipeline import PipelineConfig, compute_disparity, compute_right_disparity
from branchdepth.refine import (
    DisparityMap,
    WlsParams,
    lr_consistency,
    median_filter,
    select_wta,
    subpixel_refine,
    wls_objective,
    wls_smooth,
)
from branchdepth.synth import (
    CylinderPrimitive,
    PlanePrimitive,
    RenderResult,
    SceneSpec,
    TextureParams,
    branch_scene,
    render_pair,
    scene_from_dict,
    scene_to_dict,
)

__version__ = "0.1.0"
