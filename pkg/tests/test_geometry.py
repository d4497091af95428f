import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from binpick.geometry import (
    DegenerateGeometryError,
    Polygon,
    Segment,
    area_and_centroid,
    distance_to_contour,
    point_in_polygon,
    pole_of_inaccessibility,
    polyline_min_distance,
    segment_min_distance,
    surface_normal,
)
from binpick.model import SceneMaps

from oracles import grid_max_inscribed, random_star_polygon, sampled_polyline_min_distance

UNIT_SQUARE = Polygon(((0, 0), (1, 0), (1, 1), (0, 1)))
RECT_4X2 = Polygon(((0, 0), (4, 0), (4, 2), (0, 2)))
# L-shape: decomposes into a 3x1 bar (area 3, centroid (1.5, 0.5)) and a
# 1x2 column (area 2, centroid (0.5, 2)); weighted centroid = (1.1, 1.1)
L_SHAPE = Polygon(((0, 0), (3, 0), (3, 1), (1, 1), (1, 3), (0, 3)))


def polygons(min_extent=50.0):
    """Random simple (star-shaped) polygons for property tests."""

    def build(seed):
        return Polygon(random_star_polygon(random.Random(seed)))

    return st.integers(min_value=0, max_value=10**9).map(build)


class TestAreaAndCentroid:
    def test_unit_square(self):
        area, centroid = area_and_centroid(UNIT_SQUARE)
        assert area == pytest.approx(1.0)
        assert centroid == pytest.approx((0.5, 0.5))

    def test_rectangle(self):
        area, centroid = area_and_centroid(RECT_4X2)
        assert area == pytest.approx(8.0)
        assert centroid == pytest.approx((2.0, 1.0))

    def test_l_shape_hand_decomposition(self):
        area, centroid = area_and_centroid(L_SHAPE)
        assert area == pytest.approx(5.0)
        assert centroid == pytest.approx((1.1, 1.1))

    def test_orientation_normalized(self):
        clockwise = Polygon(((0, 1), (1, 1), (1, 0), (0, 0)))
        area, _ = area_and_centroid(clockwise)
        assert area == pytest.approx(1.0)

    def test_degenerate_rejected(self):
        sliver = Polygon(((0, 0), (10, 0), (10, 0.05)))
        with pytest.raises(DegenerateGeometryError):
            area_and_centroid(sliver)

    def test_too_few_vertices(self):
        with pytest.raises(DegenerateGeometryError):
            Polygon(((0, 0), (1, 1)))

    def test_self_intersection_rejected(self):
        with pytest.raises(DegenerateGeometryError):
            Polygon(((0, 0), (2, 2), (2, 0), (0, 2)))

    @given(polygons(), st.floats(-500, 500), st.floats(-500, 500))
    @settings(max_examples=60, deadline=None)
    def test_translation_equivariance(self, poly, dx, dy):
        area0, c0 = area_and_centroid(poly)
        area1, c1 = area_and_centroid(poly.translated(dx, dy))
        assert area1 == pytest.approx(area0, rel=1e-9)
        assert c1[0] == pytest.approx(c0[0] + dx, abs=1e-6)
        assert c1[1] == pytest.approx(c0[1] + dy, abs=1e-6)


class TestDistanceToContour:
    def test_center_of_unit_square(self):
        assert distance_to_contour((0.5, 0.5), UNIT_SQUARE) == pytest.approx(0.5)

    def test_vertex_is_zero(self):
        assert distance_to_contour((0.0, 0.0), UNIT_SQUARE) == pytest.approx(0.0, abs=1e-12)

    def test_l_shape_centroid_outside(self):
        # (1.1, 1.1) lies in the notch: nearest contour points are (1.1, 1.0)
        # on the bar's top edge and (1.0, 1.1) on the column's side, both at
        # distance 0.1 (the corner (1, 1) is farther, at 0.1*sqrt(2))
        d = distance_to_contour((1.1, 1.1), L_SHAPE)
        assert d == pytest.approx(-0.1)

    def test_sign_convention(self):
        assert distance_to_contour((0.5, 0.5), UNIT_SQUARE) > 0
        assert distance_to_contour((2.0, 0.5), UNIT_SQUARE) < 0


class TestPoleOfInaccessibility:
    def test_unit_square(self):
        pole, d = pole_of_inaccessibility(UNIT_SQUARE, 0.001)
        assert pole == pytest.approx((0.5, 0.5), abs=0.001)
        assert d == pytest.approx(0.5, abs=0.001)

    def test_rectangle_radius_is_half_short_side(self):
        pole, d = pole_of_inaccessibility(RECT_4X2, 0.01)
        assert d == pytest.approx(1.0, abs=0.01)
        assert 1.0 - 0.01 <= pole[1] <= 1.0 + 0.01

    def test_rectangle_tie_break_is_deterministic(self):
        results = {pole_of_inaccessibility(RECT_4X2, 0.01) for _ in range(3)}
        assert len(results) == 1

    def test_l_shape_matches_grid_oracle(self):
        _, d = pole_of_inaccessibility(L_SHAPE, 0.005)
        oracle = grid_max_inscribed(L_SHAPE.vertices, 0.01)
        assert d == pytest.approx(oracle, abs=0.02)

    def test_pole_strictly_inside(self):
        rng = random.Random(7)
        for _ in range(20):
            poly = Polygon(random_star_polygon(rng))
            pole, d = pole_of_inaccessibility(poly, 1.0)
            assert d > 0
            assert distance_to_contour(pole, poly) > 0

    @given(polygons())
    @settings(max_examples=40, deadline=None)
    def test_pole_beats_interior_centroid(self, poly):
        _, centroid = area_and_centroid(poly)
        centroid_d = distance_to_contour(centroid, poly)
        _, d = pole_of_inaccessibility(poly, 0.5)
        if centroid_d > 0:
            assert d >= centroid_d - 0.5

    def test_bad_precision(self):
        with pytest.raises(ValueError):
            pole_of_inaccessibility(UNIT_SQUARE, 0.0)


class TestSegmentMinDistance:
    def test_parallel(self):
        assert segment_min_distance(Segment((0, 0), (1, 0)), Segment((0, 1), (1, 1))) == pytest.approx(1.0)

    def test_crossing(self):
        assert segment_min_distance(Segment((0, 0), (1, 1)), Segment((0, 1), (1, 0))) == 0.0

    def test_endpoint_to_endpoint(self):
        d = segment_min_distance(Segment((0, 0), (1, 0)), Segment((2, 1), (3, 1)))
        assert d == pytest.approx(math.sqrt(2.0))

    def test_degenerate_segments(self):
        assert segment_min_distance(Segment((0, 0), (0, 0)), Segment((3, 4), (3, 4))) == pytest.approx(5.0)

    @given(st.lists(st.floats(-100, 100), min_size=8, max_size=8))
    @settings(max_examples=100, deadline=None)
    def test_symmetry_and_nonnegativity(self, coords):
        s1 = Segment((coords[0], coords[1]), (coords[2], coords[3]))
        s2 = Segment((coords[4], coords[5]), (coords[6], coords[7]))
        d12 = segment_min_distance(s1, s2)
        d21 = segment_min_distance(s2, s1)
        assert d12 == pytest.approx(d21, abs=1e-9)
        assert d12 >= 0.0

    @given(
        st.lists(st.floats(-100, 100), min_size=8, max_size=8),
        st.floats(-50, 50),
        st.floats(-50, 50),
    )
    @settings(max_examples=100, deadline=None)
    def test_translation_changes_distance_by_at_most_shift(self, coords, dx, dy):
        s1 = Segment((coords[0], coords[1]), (coords[2], coords[3]))
        s2 = Segment((coords[4], coords[5]), (coords[6], coords[7]))
        moved = Segment((coords[4] + dx, coords[5] + dy), (coords[6] + dx, coords[7] + dy))
        d0 = segment_min_distance(s1, s2)
        d1 = segment_min_distance(s1, moved)
        assert abs(d1 - d0) <= math.hypot(dx, dy) + 1e-9


class TestPolylineMinDistance:
    def test_two_points(self):
        assert polyline_min_distance([(0, 0)], [(3, 4)]) == pytest.approx(5.0)

    def test_identical_polylines(self):
        path = [(0, 0), (1, 1), (2, 0)]
        assert polyline_min_distance(path, path) == 0.0

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            polyline_min_distance([], [(0, 0)])

    def test_matches_sampling_oracle_on_random_polylines(self):
        rng = random.Random(42)
        for _ in range(5):
            # disjoint boxes so the minimizer generically sits on a vertex
            a = [(rng.uniform(0, 40), rng.uniform(0, 40)) for _ in range(4)]
            b = [(rng.uniform(60, 100), rng.uniform(60, 100)) for _ in range(4)]
            mine = polyline_min_distance(a, b)
            oracle = sampled_polyline_min_distance(a, b, samples_per_segment=10_000)
            assert mine == pytest.approx(oracle, rel=1e-6)


def _flat_maps(width=30, height=30, depth_value=100.0, res=1.0):
    label = np.zeros((height, width), dtype=np.int32)
    depth = np.full((height, width), depth_value)
    return SceneMaps(res, width, height, ("item",), label, depth)


class TestSurfaceNormal:
    def test_flat_surface(self):
        normal, degenerate = surface_normal(_flat_maps(), (15, 15))
        assert not degenerate
        assert normal == pytest.approx((0.0, 0.0, 1.0), abs=1e-9)

    def test_analytic_ramp(self):
        res = 1.0
        width = height = 41
        label = np.zeros((height, width), dtype=np.int32)
        xs = np.arange(width) * res
        depth = np.tile(xs * math.tan(math.radians(30.0)), (height, 1))
        maps = SceneMaps(res, width, height, ("ramp",), label, depth)
        normal, degenerate = surface_normal(maps, (20, 20))
        assert not degenerate
        expected = (-math.sin(math.radians(30.0)), 0.0, math.cos(math.radians(30.0)))
        assert normal == pytest.approx(expected, abs=1e-6)

    def test_noisy_ramp_within_two_degrees(self):
        res = 1.0
        width = height = 41
        rng = np.random.default_rng(1234)
        label = np.zeros((height, width), dtype=np.int32)
        xs = np.arange(width) * res
        depth = np.tile(50.0 + xs * math.tan(math.radians(30.0)), (height, 1))
        depth = depth + rng.uniform(-1.0, 1.0, size=depth.shape)
        maps = SceneMaps(res, width, height, ("ramp",), label, depth)
        normal, degenerate = surface_normal(maps, (20, 20), window_px=11)
        assert not degenerate
        expected = np.array([-math.sin(math.radians(30.0)), 0.0, math.cos(math.radians(30.0))])
        angle = math.degrees(math.acos(float(np.clip(np.dot(normal, expected), -1, 1))))
        assert angle < 2.0

    def test_too_few_samples_degenerate(self):
        label = np.full((9, 9), -1, dtype=np.int32)
        label[4, 4] = 0
        label[4, 5] = 0
        maps = SceneMaps(1.0, 9, 9, ("lonely",), label, np.zeros((9, 9)))
        normal, degenerate = surface_normal(maps, (4, 4), window_px=5)
        assert degenerate
        assert normal == (0.0, 0.0, 1.0)

    def test_collinear_samples_degenerate(self):
        label = np.full((9, 9), -1, dtype=np.int32)
        label[4, :] = 0  # a single row of samples cannot pin a plane
        maps = SceneMaps(1.0, 9, 9, ("line",), label, np.zeros((9, 9)))
        normal, degenerate = surface_normal(maps, (4, 4), window_px=5)
        assert degenerate
        assert normal == (0.0, 0.0, 1.0)

    def test_out_of_bounds_pixel(self):
        with pytest.raises(ValueError):
            surface_normal(_flat_maps(), (99, 0))
