import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from binpick.geometry import Polygon, area_and_centroid, distance_to_contour
from binpick.grasping import (
    GraspAnchor,
    GraspKind,
    GraspPointError,
    GraspPose,
    choose_grasp_kind,
    lift_to_pose,
    perturb_grasp,
    select_grasp_point,
    verify_weight,
)
from binpick.model import Item, SceneMaps

from oracles import grid_max_inscribed, random_star_polygon

UNIT_SQUARE = Polygon(((0, 0), (100, 0), (100, 100), (0, 100)))
L_SHAPE = Polygon(((0, 0), (300, 0), (300, 100), (100, 100), (100, 300), (0, 300)))

# asymmetric T found by perturbation search; d_m/d_p ~= 0.642 (grid-checked)
T_FIXTURE = Polygon(
    ((0, 0), (208.2, 0), (208.2, 44.5), (140.6, 44.5), (140.6, 121.1), (95.0, 121.1), (95.0, 44.5))
)


def _item(mass=100.0, suction=0.5):
    return Item("it", "thing", mass, (80.0, 60.0, 40.0), suction)


class TestSelectGraspPoint:
    def test_square_prefers_center_of_mass(self):
        point, anchor = select_grasp_point(UNIT_SQUARE, 100.0)
        assert anchor == GraspAnchor.CENTER_OF_MASS
        assert point == pytest.approx((50.0, 50.0))

    def test_l_shape_centroid_outside_falls_back_to_pole(self):
        _, centroid = area_and_centroid(L_SHAPE)
        assert distance_to_contour(centroid, L_SHAPE) < 0
        point, anchor = select_grasp_point(L_SHAPE, 200.0)
        assert anchor == GraspAnchor.POLE
        assert distance_to_contour(point, L_SHAPE) > 0

    def test_t_fixture_ratio_sits_between_thresholds(self):
        _, centroid = area_and_centroid(T_FIXTURE)
        d_m = distance_to_contour(centroid, T_FIXTURE)
        oracle_d_p = grid_max_inscribed(T_FIXTURE.vertices, 0.25)
        assert 0.5 < d_m / oracle_d_p < 0.7

    def test_t_fixture_heavy_takes_centroid_light_takes_pole(self):
        point_heavy, anchor_heavy = select_grasp_point(T_FIXTURE, 1000.0)
        assert anchor_heavy == GraspAnchor.CENTER_OF_MASS
        _, centroid = area_and_centroid(T_FIXTURE)
        assert point_heavy == pytest.approx(centroid)

        point_light, anchor_light = select_grasp_point(T_FIXTURE, 200.0)
        assert anchor_light == GraspAnchor.POLE
        assert point_light != pytest.approx(centroid)

    def test_mass_boundary_is_strict(self):
        # exactly 800 g still counts as lightweight (threshold is mass > 800)
        _, anchor_at = select_grasp_point(T_FIXTURE, 800.0)
        _, anchor_above = select_grasp_point(T_FIXTURE, 800.0001)
        assert anchor_at == GraspAnchor.POLE
        assert anchor_above == GraspAnchor.CENTER_OF_MASS

    @given(st.integers(0, 10**9), st.floats(10.0, 5000.0), st.floats(0.2, 5.0))
    @settings(max_examples=150, deadline=None)
    def test_anchor_decision_scale_invariant(self, seed, mass, scale):
        poly = Polygon(random_star_polygon(random.Random(seed)))
        scaled = Polygon(tuple((x * scale, y * scale) for x, y in poly.vertices))
        p0, a0 = select_grasp_point(poly, mass)
        p1, a1 = select_grasp_point(scaled, mass)
        assert a0 == a1
        if a0 == GraspAnchor.CENTER_OF_MASS:
            assert p1[0] == pytest.approx(p0[0] * scale, rel=1e-6, abs=1e-6)

    @given(st.integers(0, 10**9), st.floats(10.0, 5000.0))
    @settings(max_examples=150, deadline=None)
    def test_pole_anchor_point_strictly_inside(self, seed, mass):
        poly = Polygon(random_star_polygon(random.Random(seed)))
        point, anchor = select_grasp_point(poly, mass)
        if anchor == GraspAnchor.POLE:
            assert distance_to_contour(point, poly) > 0


def _maps_flat(height_mm=100.0):
    label = np.zeros((50, 50), dtype=np.int32)
    depth = np.full((50, 50), height_mm)
    return SceneMaps(1.0, 50, 50, ("it",), label, depth)


class TestLiftToPose:
    def test_flat_suction_pose(self):
        maps = _maps_flat(100.0)
        pose = lift_to_pose((25.0, 25.0), GraspKind.SUCTION, maps, (0.0, 0.0))
        assert pose.point_mm == pytest.approx((25.0, 25.0, 100.0))
        assert pose.normal == pytest.approx((0.0, 0.0, 1.0))
        assert pose.pinch_yaw_rad is None

    def test_pinch_yaw_points_to_bin_center(self):
        maps = _maps_flat()
        pose = lift_to_pose((100.0 - 60.0, 10.0), GraspKind.PINCH, maps, (0.0, 10.0))
        # bin center due -x of the grasp point
        assert pose.pinch_yaw_rad == pytest.approx(math.pi)

    def test_ramp_normal_matches_surface(self):
        res = 1.0
        xs = np.arange(50) * res
        depth = np.tile(50.0 + xs * math.tan(math.radians(20.0)), (50, 1))
        maps = SceneMaps(res, 50, 50, ("it",), np.zeros((50, 50), dtype=np.int32), depth)
        pose = lift_to_pose((25.0, 25.0), GraspKind.SUCTION, maps, (0.0, 0.0))
        expected = (-math.sin(math.radians(20.0)), 0.0, math.cos(math.radians(20.0)))
        assert pose.normal == pytest.approx(expected, abs=1e-6)

    def test_unlabeled_pixel_is_an_error(self):
        label = np.full((50, 50), -1, dtype=np.int32)
        maps = SceneMaps(1.0, 50, 50, (), label, np.zeros((50, 50)))
        with pytest.raises(GraspPointError):
            lift_to_pose((25.0, 25.0), GraspKind.SUCTION, maps, (0.0, 0.0))

    def test_off_map_point_is_an_error(self):
        with pytest.raises(GraspPointError):
            lift_to_pose((999.0, 0.0), GraspKind.SUCTION, _maps_flat(), (0.0, 0.0))


def _pose(kind=GraspKind.SUCTION, yaw=None):
    return GraspPose(kind, (10.0, 20.0, 30.0), (0.0, 0.0, 1.0), yaw, GraspAnchor.POLE)


class TestPerturbGrasp:
    def test_zero_sigma_is_identity(self):
        pose = _pose(GraspKind.PINCH, yaw=1.0)
        out = perturb_grasp(pose, random.Random(1), sigma_translation_mm=0.0, sigma_yaw_rad=0.0)
        assert out == pose

    def test_fixed_seed_reproducible(self):
        pose = _pose(GraspKind.PINCH, yaw=0.5)
        a = perturb_grasp(pose, random.Random(42))
        b = perturb_grasp(pose, random.Random(42))
        assert a == b
        c = perturb_grasp(pose, random.Random(43))
        assert c != a

    def test_translation_sigma_statistics(self):
        rng = random.Random(7)
        pose = _pose()
        offsets = []
        for _ in range(10_000):
            out = perturb_grasp(pose, rng)
            offsets.append(out.point_mm[0] - pose.point_mm[0])
            offsets.append(out.point_mm[1] - pose.point_mm[1])
        std = float(np.std(offsets))
        assert abs(std - 15.0) / 15.0 < 0.05

    def test_suction_keeps_yaw_untouched(self):
        out = perturb_grasp(_pose(GraspKind.SUCTION), random.Random(3))
        assert out.pinch_yaw_rad is None
        assert out.kind == GraspKind.SUCTION

    def test_pinch_yaw_gets_rotation_noise(self):
        pose = _pose(GraspKind.PINCH, yaw=0.0)
        out = perturb_grasp(pose, random.Random(11))
        assert out.pinch_yaw_rad != 0.0

    def test_z_not_perturbed(self):
        out = perturb_grasp(_pose(), random.Random(5))
        assert out.point_mm[2] == 30.0


class TestChooseGraspKind:
    def test_probability_one_is_suction(self):
        for seed in range(20):
            assert choose_grasp_kind(_item(suction=1.0), random.Random(seed)) == GraspKind.SUCTION

    def test_probability_zero_is_pinch(self):
        for seed in range(20):
            assert choose_grasp_kind(_item(suction=0.0), random.Random(seed)) == GraspKind.PINCH

    def test_half_probability_statistics(self):
        rng = random.Random(7)
        item = _item(suction=0.5)
        draws = sum(choose_grasp_kind(item, rng) == GraspKind.SUCTION for _ in range(10_000))
        assert abs(draws / 10_000 - 0.5) < 0.02


class TestVerifyWeight:
    def test_small_diff_accepts(self):
        assert verify_weight(100.0, 104.0)  # diff 4 < 5

    def test_ten_percent_rejects(self):
        assert not verify_weight(100.0, 112.0)  # diff 12 >= 10

    def test_five_gram_floor_dominates(self):
        assert verify_weight(30.0, 34.5)  # diff 4.5 < 5 even though 10% = 3

    def test_boundaries_reject(self):
        assert not verify_weight(100.0, 110.0)  # diff exactly 10% rejects
        assert not verify_weight(30.0, 35.0)  # diff exactly 5 g rejects

    @given(st.floats(1.0, 5000.0), st.floats(-600.0, 600.0))
    @settings(max_examples=300, deadline=None)
    def test_acceptance_region_is_open_interval(self, expected, delta):
        threshold = max(5.0, expected / 10.0)
        assert verify_weight(expected, expected + delta) == (abs(delta) < threshold)


class TestGraspPoseInvariants:
    def test_normal_must_point_up(self):
        with pytest.raises(ValueError):
            GraspPose(GraspKind.SUCTION, (0, 0, 0), (0.0, 0.0, -1.0), None, GraspAnchor.POLE)

    def test_normal_must_be_unit(self):
        with pytest.raises(ValueError):
            GraspPose(GraspKind.SUCTION, (0, 0, 0), (0.0, 0.0, 0.9), None, GraspAnchor.POLE)
