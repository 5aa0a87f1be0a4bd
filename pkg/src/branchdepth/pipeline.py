"""End-to-end disparity pipeline: costs -> aggregation -> WTA -> refinement.

The stage order is fixed (winner-take-all, left-right consistency, median,
sub-pixel, WLS) but every refinement stage can be toggled via
:class:`PipelineConfig`.  The right-reference disparity map needed by the
consistency check is computed by mirroring both images, running the same
matching pass, and mirroring the result back.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

from branchdepth.aggregate import (
    DiffusionParams,
    EnergyParams,
    MultiWindowParams,
    aggregate_diffuse,
    aggregate_fixed,
    aggregate_multi,
    aggregate_semiglobal,
)
from branchdepth.costs import COST_KINDS, CostVolume, MatchWindow, build_cost_volume
from branchdepth.errors import ConfigurationError
from branchdepth.refine import (
    DisparityMap,
    WlsParams,
    lr_consistency,
    median_filter,
    select_wta,
    subpixel_refine,
    wls_smooth,
)

AGGREGATIONS = ("none", "fixed", "multi", "diffusion", "semiglobal")


@dataclass
class PipelineConfig:
    """Every knob of the disparity pipeline, JSON-round-trippable."""

    cost_kind: str = "ad"
    window_radius: int = 4
    d_min: int = 0
    d_max: int = 64
    aggregation: str = "semiglobal"
    fixed_radius: int = 3
    multi_offsets: tuple[tuple[int, int], ...] = ((0, 0),)
    multi_radius: int = 3
    diffusion_iterations: int = 3
    diffusion_weights: tuple[float, ...] | None = None
    diffusion_neighbors: int = 4
    p1: float = 8.0
    p2: float = 32.0
    energy_lam: float = 1.0
    paths: int = 4
    lrc_enabled: bool = True
    lrc_tau: float = 1.0
    median_enabled: bool = True
    median_radius: int = 1
    subpixel_enabled: bool = True
    wls_enabled: bool = True
    wls_lam: float = 0.25
    wls_sigma: float = 16.0
    wls_iterations: int = 200
    wls_tol: float = 1e-6
    localize_method: str = "centroid"
    localize_k: float = 3.0
    localize_m: int = 4
    localize_pattern_radius: float = 2.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.cost_kind not in COST_KINDS:
            raise ConfigurationError(f"unknown cost kind {self.cost_kind!r}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigurationError(
                f"unknown aggregation {self.aggregation!r}, expected one of {AGGREGATIONS}"
            )
        self.multi_offsets = tuple(tuple(int(v) for v in off) for off in self.multi_offsets)
        if self.diffusion_weights is not None:
            self.diffusion_weights = tuple(float(w) for w in self.diffusion_weights)
        # Instantiating the stage parameter objects runs their validation.
        MatchWindow(self.window_radius, self.d_min, self.d_max)
        self.energy_params()
        self.multi_params()
        self.diffusion_params()
        self.wls_params()

    def energy_params(self) -> EnergyParams:
        return EnergyParams(p1=self.p1, p2=self.p2, lam=self.energy_lam, paths=self.paths)

    def multi_params(self) -> MultiWindowParams:
        return MultiWindowParams(offsets=self.multi_offsets, radius=self.multi_radius)

    def diffusion_params(self) -> DiffusionParams:
        return DiffusionParams(
            iterations=self.diffusion_iterations,
            weights=self.diffusion_weights,
            neighbors=self.diffusion_neighbors,
        )

    def wls_params(self) -> WlsParams:
        return WlsParams(
            lam=self.wls_lam,
            sigma=self.wls_sigma,
            iterations=self.wls_iterations,
            tol=self.wls_tol,
        )

    def to_dict(self) -> dict:
        out = asdict(self)
        out["multi_offsets"] = [list(off) for off in self.multi_offsets]
        if self.diffusion_weights is not None:
            out["diffusion_weights"] = list(self.diffusion_weights)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)


def _aggregate(cv: CostVolume, config: PipelineConfig) -> CostVolume:
    if config.aggregation == "none":
        return cv
    if config.aggregation == "fixed":
        return aggregate_fixed(cv, config.fixed_radius)
    if config.aggregation == "multi":
        return aggregate_multi(cv, config.multi_params())
    if config.aggregation == "diffusion":
        return aggregate_diffuse(cv, config.diffusion_params())
    return aggregate_semiglobal(cv, config.energy_params())


def _matching_pass(left: np.ndarray, right: np.ndarray, config: PipelineConfig) -> CostVolume:
    window = MatchWindow(config.window_radius, config.d_min, config.d_max)
    cv = build_cost_volume(left, right, window, config.cost_kind)
    return _aggregate(cv, config)


def compute_right_disparity(
    left: np.ndarray, right: np.ndarray, config: PipelineConfig
) -> DisparityMap:
    """Right-referenced WTA disparity via the mirrored matching pass."""
    mirrored = _matching_pass(np.fliplr(right), np.fliplr(left), config)
    flipped = select_wta(mirrored)
    return DisparityMap(values=np.fliplr(flipped.values), valid=np.fliplr(flipped.valid))


def compute_disparity(left: np.ndarray, right: np.ndarray, config: PipelineConfig) -> DisparityMap:
    """Run the configured pipeline on a rectified pair."""
    aggregated = _matching_pass(left, right, config)
    disp = select_wta(aggregated)
    if config.lrc_enabled:
        right_disp = compute_right_disparity(left, right, config)
        disp = lr_consistency(disp, right_disp, tau=config.lrc_tau)
    if config.median_enabled:
        disp = median_filter(disp, radius=config.median_radius)
    if config.subpixel_enabled:
        disp = subpixel_refine(disp, aggregated)
    if config.wls_enabled:
        disp = wls_smooth(disp, np.asarray(left, dtype=np.float64), config.wls_params())
    return disp
