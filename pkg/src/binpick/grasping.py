"""Grasp point selection, 5D pose lifting, attempt noise and weight checks."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, replace
from enum import Enum
from typing import Optional

from .geometry import (
    Point,
    Polygon,
    area_and_centroid,
    distance_to_contour,
    pole_of_inaccessibility,
    surface_normal,
)
from .model import Item, SceneMaps

HEAVY_MASS_G = 800.0
TAU_LIGHT = 0.8
TAU_HEAVY = 0.4

SIGMA_TRANSLATION_MM = 15.0
SIGMA_YAW_RAD = math.radians(60.0)

NORMAL_WINDOW_PX = 11

# the acceptance band floor: below 5 g the scales cannot discriminate
WEIGHT_FLOOR_G = 5.0


class GraspKind(str, Enum):
    SUCTION = "suction"
    PINCH = "pinch"


class GraspAnchor(str, Enum):
    POLE = "pole"
    CENTER_OF_MASS = "center_of_mass"


class GraspPointError(ValueError):
    """Requested grasp point is off the item; indicates a caller bug."""


@dataclass(frozen=True)
class GraspPose:
    kind: GraspKind
    point_mm: tuple[float, float, float]
    normal: tuple[float, float, float]
    pinch_yaw_rad: Optional[float]
    anchor: GraspAnchor

    def __post_init__(self) -> None:
        nx, ny, nz = self.normal
        if nz <= 0:
            raise ValueError("grasp normal must point upward")
        if abs(math.sqrt(nx * nx + ny * ny + nz * nz) - 1.0) > 1e-9:
            raise ValueError("grasp normal must be unit length")


def select_grasp_point(contour: Polygon, mass_g: float) -> tuple[Point, GraspAnchor]:
    """Pole of inaccessibility vs. center of mass, decided by the d_m/d_p
    ratio against a mass-dependent threshold.

    Lightweight items prefer the safe pole; for heavy items (> 800 g) the
    threshold drops so the center of mass wins more often. A centroid lying
    outside the contour clamps d_m to zero, which always selects the pole.
    """
    if mass_g <= 0:
        raise ValueError("mass_g must be positive")
    _, centroid = area_and_centroid(contour)
    min_x, min_y, max_x, max_y = contour.bounds()
    # precision relative to the contour scale keeps the decision scale-free
    precision = max(max(max_x - min_x, max_y - min_y) * 5e-4, 1e-6)
    pole, d_p = pole_of_inaccessibility(contour, precision)
    d_m = max(0.0, distance_to_contour(centroid, contour))
    tau = TAU_HEAVY if mass_g > HEAVY_MASS_G else TAU_LIGHT
    if d_p > 0 and d_m / d_p > tau:
        return centroid, GraspAnchor.CENTER_OF_MASS
    return pole, GraspAnchor.POLE


def lift_to_pose(
    point: Point,
    kind: GraspKind,
    maps: SceneMaps,
    bin_center: Point,
    anchor: GraspAnchor = GraspAnchor.POLE,
) -> GraspPose:
    """Lift a 2D grasp point to a full pose using the depth map.

    Suction poses take the local surface normal; pinch poses additionally get
    a yaw that points the second finger towards the bin center to keep it
    clear of the bin walls.
    """
    px = maps.px_of(point)
    if not maps.in_bounds(px):
        raise GraspPointError(f"grasp point {point} is outside the scene maps")
    if maps.label_id_at(px) is None:
        raise GraspPointError(f"grasp point {point} is not on any item")
    z = maps.depth_at(px)
    normal, _ = surface_normal(maps, px, NORMAL_WINDOW_PX)
    yaw = None
    if kind == GraspKind.PINCH:
        yaw = math.atan2(bin_center[1] - point[1], bin_center[0] - point[0])
    return GraspPose(kind=kind, point_mm=(point[0], point[1], z), normal=normal, pinch_yaw_rad=yaw, anchor=anchor)


def perturb_grasp(
    g: GraspPose,
    rng: random.Random,
    sigma_translation_mm: float = SIGMA_TRANSLATION_MM,
    sigma_yaw_rad: float = SIGMA_YAW_RAD,
) -> GraspPose:
    """Gaussian attempt noise: translation on both horizontal axes, yaw only
    for pinch grasps (suction is rotation-free). The depth and normal are not
    updated here; the caller re-queries them at the new point."""
    x, y, z = g.point_mm
    x += rng.gauss(0.0, sigma_translation_mm)
    y += rng.gauss(0.0, sigma_translation_mm)
    yaw = g.pinch_yaw_rad
    if g.kind == GraspKind.PINCH and yaw is not None:
        yaw += rng.gauss(0.0, sigma_yaw_rad)
    return replace(g, point_mm=(x, y, z), pinch_yaw_rad=yaw)


def choose_grasp_kind(item: Item, rng: random.Random) -> GraspKind:
    """Bernoulli draw on the item's per-object suction probability."""
    return GraspKind.SUCTION if rng.random() < item.suction_probability else GraspKind.PINCH


def verify_weight(expected_g: float, measured_delta_g: float) -> bool:
    """Accept a grasp iff the measured weight change matches the expected
    item weight within max(5 g, 10 %); the boundary itself rejects."""
    if expected_g <= 0:
        raise ValueError("expected_g must be positive")
    return abs(measured_delta_g - expected_g) < max(WEIGHT_FLOOR_G, expected_g / 10.0)
