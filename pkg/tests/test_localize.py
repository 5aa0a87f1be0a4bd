"""Tests for branch localisation: grouping, expansion, MAD, distance."""

import itertools
import math

import numpy as np
import pytest
from shapely.geometry import Point, Polygon

from branchdepth.errors import (
    ConfigurationError,
    InsufficientPointsError,
    NoValidDepthError,
)
from branchdepth.geometry import StereoRig
from branchdepth.localize import (
    centroids_of,
    estimate_distance,
    expand_samples,
    group_triangles,
    mad_filter,
    polygon_interior_mask,
)
from branchdepth.refine import DisparityMap


class TestGroupTriangles:
    def test_three_points_single_triple(self):
        points = np.array([[0.0, 0.0], [4.0, 1.0], [2.0, 5.0]])
        triples = group_triangles(points)
        assert len(triples) == 1
        np.testing.assert_array_equal(np.sort(triples[0], axis=0), np.sort(points, axis=0))

    def test_two_tight_clusters_match_min_perimeter_partition(self):
        cluster_a = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        cluster_b = np.array([[50.0, 50.0], [51.0, 50.0], [50.0, 51.0]])
        points = np.vstack([cluster_a[:1], cluster_b[:1], cluster_a[1:], cluster_b[1:]])

        def perimeter(triple):
            return sum(
                np.linalg.norm(triple[i] - triple[(i + 1) % 3]) for i in range(3)
            )

        best = None
        indices = range(6)
        for first in itertools.combinations(indices, 3):
            second = tuple(i for i in indices if i not in first)
            total = perimeter(points[list(first)]) + perimeter(points[list(second)])
            if best is None or total < best[0]:
                best = (total, {frozenset(first), frozenset(second)})

        triples = group_triangles(points)
        got = {
            frozenset(int(np.flatnonzero((points == pt).all(axis=1))[0]) for pt in triple)
            for triple in triples
        }
        assert got == best[1]

    def test_seven_points_two_triples_one_leftover(self):
        rng = np.random.default_rng(0)
        points = rng.uniform(0, 100, (7, 2))
        triples = group_triangles(points)
        assert len(triples) == 2

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        points = rng.uniform(0, 100, (12, 2))
        a = group_triangles(points)
        b = group_triangles(points)
        for ta, tb in zip(a, b):
            np.testing.assert_array_equal(ta, tb)

    def test_too_few_points_rejected(self):
        with pytest.raises(InsufficientPointsError):
            group_triangles(np.array([[0.0, 0.0], [1.0, 1.0]]))


class TestCentroids:
    def test_textbook_centroid(self):
        triples = [np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 3.0]])]
        np.testing.assert_array_equal(centroids_of(triples), [[1.0, 1.0]])

    def test_degenerate_triple(self):
        q = np.array([[2.5, 7.5]] * 3)
        np.testing.assert_array_equal(centroids_of([q]), [[2.5, 7.5]])

    def test_centroid_inside_bounding_box(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            triple = rng.uniform(-50, 50, (3, 2))
            centroid = centroids_of([triple])[0]
            assert triple[:, 0].min() <= centroid[0] <= triple[:, 0].max()
            assert triple[:, 1].min() <= centroid[1] <= triple[:, 1].max()


class TestExpandSamples:
    def test_no_expansion(self):
        centroids = np.array([[5.0, 5.0], [7.0, 7.0]])
        out = expand_samples(centroids, m=0, pattern_radius=2.0, image_size=(20, 20))
        np.testing.assert_array_equal(out.combined, centroids)
        assert out.dropped == 0

    def test_documented_ring_pattern(self):
        out = expand_samples(np.array([[10.0, 10.0]]), m=4, pattern_radius=2.0, image_size=(20, 20))
        expected = np.array([[12.0, 10.0], [10.0, 12.0], [8.0, 10.0], [10.0, 8.0]])
        np.testing.assert_allclose(out.per_centroid[0], expected, atol=1e-12)
        assert len(out.combined) == 5

    def test_corner_centroid_drops_outside_samples(self):
        out = expand_samples(np.array([[0.0, 0.0]]), m=4, pattern_radius=2.0, image_size=(20, 20))
        assert out.dropped == 2  # (-2, 0) and (0, -2) fall outside
        assert len(out.per_centroid[0]) == 2
        assert len(out.combined) == 3

    def test_negative_m_rejected(self):
        with pytest.raises(ConfigurationError):
            expand_samples(np.array([[1.0, 1.0]]), m=-1, pattern_radius=1.0, image_size=(5, 5))


class TestMadFilter:
    def test_hand_case(self):
        result = mad_filter(np.array([2.0, 2.1, 1.9, 2.05, 8.0]), k=3.0)
        assert result.median == pytest.approx(2.05, abs=1e-12)
        assert result.mad == pytest.approx(0.05, abs=1e-12)
        assert sorted(result.retained.tolist()) == pytest.approx([1.9, 2.0, 2.05, 2.1])
        assert result.rejected == 1
        assert float(np.mean(result.retained)) == pytest.approx(2.0125, abs=1e-12)

    def test_all_equal_all_retained(self):
        result = mad_filter(np.full(9, 3.3), k=3.0)
        assert result.mad == 0.0
        assert result.retained.size == 9

    def test_zero_mad_keeps_only_median_values(self):
        result = mad_filter(np.array([1.0, 1.0, 1.0, 1.0, 10.0]), k=3.0)
        assert result.mad == 0.0
        assert result.retained.tolist() == [1.0, 1.0, 1.0, 1.0]

    def test_k_zero_keeps_exact_median_only(self):
        result = mad_filter(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), k=0.0)
        assert result.retained.tolist() == [3.0]

    def test_infinite_k_disables_rejection(self):
        result = mad_filter(np.array([1.0, 1.0, 1.0, 50.0]), k=math.inf)
        assert result.retained.size == 4

    def test_retention_monotone_in_k(self):
        rng = np.random.default_rng(3)
        depths = rng.normal(2.0, 0.3, 40)
        sizes = [mad_filter(depths, k).retained.size for k in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0)]
        assert sizes == sorted(sizes)

    def test_empty_rejected(self):
        with pytest.raises(NoValidDepthError):
            mad_filter(np.array([]), k=3.0)
        with pytest.raises(ConfigurationError):
            mad_filter(np.array([1.0]), k=-1.0)


class TestPolygonInterior:
    def test_square_patch_count(self):
        # Square with pixel centres 1..4 strictly inside: 16 interior pixels.
        points = np.array([[0.6, 0.6], [4.4, 0.6], [4.4, 4.4], [0.6, 4.4]])
        mask = polygon_interior_mask(points, image_size=(6, 6))
        assert mask.sum() == 16
        assert mask[1:5, 1:5].all()

    def test_matches_shapely_on_random_star_polygons(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            n = int(rng.integers(4, 9))
            angles = np.sort(rng.uniform(0, 2 * math.pi, n))
            radii = rng.uniform(3.0, 9.0, n)
            centre = rng.uniform(10, 14, 2) + 0.3  # keep centres off pixel grid
            points = np.stack(
                [centre[0] + radii * np.cos(angles), centre[1] + radii * np.sin(angles)], axis=1
            )
            mask = polygon_interior_mask(points, image_size=(25, 25))
            poly = Polygon(points)
            for y in range(25):
                for x in range(25):
                    # Skip centres within a hair of the boundary, where the
                    # two implementations may legitimately disagree.
                    if poly.exterior.distance(Point(x, y)) < 1e-6:
                        continue
                    assert mask[y, x] == poly.contains(Point(x, y))

    def test_degenerate_offscreen_polygon_empty(self):
        points = np.array([[-10.0, -10.0], [-5.0, -10.0], [-7.0, -5.0]])
        mask = polygon_interior_mask(points, image_size=(8, 8))
        assert not mask.any()


def constant_disparity_map(shape, value) -> DisparityMap:
    return DisparityMap.from_values(np.full(shape, float(value)))


class TestEstimateDistance:
    def setup_method(self):
        self.rig = StereoRig(fx=500.0, fy=500.0, ox=320.0, oy=240.0, baseline_m=0.1)
        self.points = np.array([[10.0, 10.0], [30.0, 10.0], [30.0, 25.0], [10.0, 25.0], [20.0, 8.0], [20.0, 27.0]])

    def test_constant_field_gives_exact_distance_both_methods(self):
        disp = constant_disparity_map((40, 40), self.rig.w / 2.0)
        for method in ("centroid", "polygon"):
            estimate = estimate_distance(disp, self.rig, self.points, method=method)
            assert estimate.distance_m == pytest.approx(2.0, abs=1e-12)
            assert estimate.method == method
            assert estimate.rejected_count == 0

    def test_polygon_sample_count_is_interior_pixel_count(self):
        disp = constant_disparity_map((40, 40), 10.0)
        square = np.array([[5.6, 5.6], [10.4, 5.6], [10.4, 10.4], [5.6, 10.4]])
        estimate = estimate_distance(disp, self.rig, square, method="polygon")
        assert estimate.retained_count + estimate.rejected_count == 25

    def test_polygon_invariant_under_permutation_on_constant_field(self):
        rng = np.random.default_rng(5)
        disp = constant_disparity_map((40, 40), 25.0)
        base = estimate_distance(disp, self.rig, self.points, method="polygon")
        for _ in range(5):
            shuffled = self.points[rng.permutation(len(self.points))]
            other = estimate_distance(disp, self.rig, shuffled, method="polygon")
            assert other.distance_m == pytest.approx(base.distance_m, abs=1e-12)

    def test_centroid_invariant_under_permutation_within_triples(self):
        # Two tight, well-separated clusters: the greedy grouping recovers
        # the same triples whatever the within-triple input order, so the
        # estimate cannot change.
        rng = np.random.default_rng(6)
        cluster_a = np.array([[10.0, 10.0], [11.0, 10.0], [10.0, 11.0]])
        cluster_b = np.array([[30.0, 30.0], [31.0, 30.0], [30.0, 31.0]])
        points = np.vstack([cluster_a, cluster_b])
        values = rng.uniform(10.0, 30.0, (40, 40))
        disp = DisparityMap.from_values(values)
        base = estimate_distance(disp, self.rig, points, method="centroid")
        for _ in range(5):
            permuted = np.vstack(
                [cluster_a[rng.permutation(3)], cluster_b[rng.permutation(3)]]
            )
            other = estimate_distance(disp, self.rig, permuted, method="centroid")
            assert other.distance_m == pytest.approx(base.distance_m, abs=1e-12)

    def test_retained_bounds_and_monotone_k(self):
        rng = np.random.default_rng(7)
        values = rng.uniform(10.0, 12.0, (40, 40))
        values[12:14, 12:30] = 30.0  # a band of outliers under the polygon
        disp = DisparityMap.from_values(values)
        previous = -1
        for k in (1.0, 2.0, 4.0, 1e9):
            estimate = estimate_distance(disp, self.rig, self.points, method="polygon", k=k)
            assert estimate.retained_count >= previous
            previous = estimate.retained_count

    def test_skips_invalid_pixels_with_count(self):
        values = np.full((40, 40), 20.0)
        values[9:12, 9:32] = np.nan  # kill the pixels under the top edge samples
        disp = DisparityMap.from_values(values)
        estimate = estimate_distance(disp, self.rig, self.points, method="polygon")
        assert estimate.skipped_invalid > 0
        assert estimate.distance_m == pytest.approx(self.rig.w / 20.0)

    def test_no_valid_depth_raises(self):
        disp = DisparityMap.from_values(np.full((40, 40), np.nan))
        with pytest.raises(NoValidDepthError):
            estimate_distance(disp, self.rig, self.points, method="polygon")

    def test_validation_errors(self):
        disp = constant_disparity_map((40, 40), 10.0)
        with pytest.raises(InsufficientPointsError):
            estimate_distance(disp, self.rig, self.points[:2], method="centroid")
        with pytest.raises(ConfigurationError):
            estimate_distance(disp, self.rig, self.points, method="voxel")
        outside = self.points.copy()
        outside[0] = [100.0, 10.0]
        with pytest.raises(ConfigurationError):
            estimate_distance(disp, self.rig, outside, method="centroid")

    def test_methods_agree_on_exact_scene_within_quantisation_step(self):
        from branchdepth.synth import branch_scene, render_pair

        rig = StereoRig(fx=400.0, fy=400.0, ox=63.5, oy=47.5, baseline_m=0.15)
        for distance in (1.0, 1.5):
            spec, points = branch_scene(distance, rig, width=128, height=96)
            result = render_pair(spec, rig)
            centroid = estimate_distance(result.gt, rig, points, method="centroid")
            polygon = estimate_distance(result.gt, rig, points, method="polygon")
            # One disparity step at this depth changes z by about z^2 / w.
            step = distance**2 / rig.w
            assert abs(centroid.distance_m - polygon.distance_m) <= step

    def test_disabling_filter_keeps_every_valid_depth(self):
        rng = np.random.default_rng(8)
        values = rng.uniform(10.0, 12.0, (40, 40))
        values[12:14, 12:30] = 30.0
        disp = DisparityMap.from_values(values)
        unfiltered = estimate_distance(
            disp, self.rig, self.points, method="polygon", filter_outliers=False
        )
        assert unfiltered.rejected_count == 0
        filtered = estimate_distance(disp, self.rig, self.points, method="polygon")
        assert filtered.rejected_count > 0
        # The high-disparity outliers are nearer, so they drag the raw mean down.
        assert filtered.distance_m > unfiltered.distance_m
