"""2D polygon and segment kernels used by grasp selection, clutter analysis
and arm-path compatibility checks.

All coordinates are millimeters in the workspace plane. Polygons are stored
counter-clockwise and implicitly closed.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

Point = tuple[float, float]

# polygons with less area than this are rejected as degenerate
EPS_AREA_MM2 = 1.0

DEFAULT_POLE_PRECISION_MM = 1.0


class DegenerateGeometryError(ValueError):
    """Polygon is too small or malformed to compute geometry on."""


@dataclass(frozen=True)
class Polygon:
    """Simple polygon, normalized to counter-clockwise orientation."""

    vertices: tuple[Point, ...]

    def __post_init__(self) -> None:
        verts = tuple((float(x), float(y)) for x, y in self.vertices)
        if len(verts) < 3:
            raise DegenerateGeometryError(f"polygon needs >= 3 vertices, got {len(verts)}")
        if _signed_area(verts) < 0.0:
            verts = tuple(reversed(verts))
        object.__setattr__(self, "vertices", verts)
        if _has_proper_self_intersection(verts):
            raise DegenerateGeometryError("polygon is self-intersecting")

    def edges(self) -> Iterable[tuple[Point, Point]]:
        vs = self.vertices
        for i, a in enumerate(vs):
            yield a, vs[(i + 1) % len(vs)]

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [v[0] for v in self.vertices]
        ys = [v[1] for v in self.vertices]
        return min(xs), min(ys), max(xs), max(ys)

    def translated(self, dx: float, dy: float) -> "Polygon":
        return Polygon(tuple((x + dx, y + dy) for x, y in self.vertices))


class Segment(NamedTuple):
    a: Point
    b: Point


def _signed_area(verts: Sequence[Point]) -> float:
    acc = 0.0
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return 0.5 * acc


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _segments_cross_properly(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _has_proper_self_intersection(verts: Sequence[Point]) -> bool:
    n = len(verts)
    for i in range(n):
        a1, a2 = verts[i], verts[(i + 1) % n]
        for j in range(i + 1, n):
            # skip adjacent edges (they share an endpoint)
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            b1, b2 = verts[j], verts[(j + 1) % n]
            if _segments_cross_properly(a1, a2, b1, b2):
                return True
    return False


def area_and_centroid(p: Polygon) -> tuple[float, Point]:
    """Positive area and area centroid (may lie outside a concave polygon)."""
    verts = p.vertices
    area2 = 0.0
    cx = 0.0
    cy = 0.0
    n = len(verts)
    for i in range(n):
        x0, y0 = verts[i]
        x1, y1 = verts[(i + 1) % n]
        f = x0 * y1 - x1 * y0
        area2 += f
        cx += (x0 + x1) * f
        cy += (y0 + y1) * f
    area = 0.5 * area2
    if area < EPS_AREA_MM2:
        raise DegenerateGeometryError(f"polygon area {area:.6g} mm^2 below {EPS_AREA_MM2} mm^2")
    return area, (cx / (6.0 * area), cy / (6.0 * area))


def _point_segment_distance(px: float, py: float, ax: float, ay: float, bx: float, by: float) -> float:
    dx = bx - ax
    dy = by - ay
    denom = dx * dx + dy * dy
    if denom > 0.0:
        t = ((px - ax) * dx + (py - ay) * dy) / denom
        if t > 1.0:
            ax, ay = bx, by
        elif t > 0.0:
            ax += dx * t
            ay += dy * t
    return math.hypot(px - ax, py - ay)


def point_in_polygon(pt: Point, p: Polygon) -> bool:
    """Even-odd rule; points exactly on the boundary may land on either side."""
    x, y = pt
    inside = False
    bx, by = p.vertices[-1]
    for ax, ay in p.vertices:
        if (ay > y) != (by > y) and x < (bx - ax) * (y - ay) / (by - ay) + ax:
            inside = not inside
        bx, by = ax, ay
    return inside


def distance_to_contour(pt: Point, p: Polygon) -> float:
    """Signed distance from pt to the polygon outline: positive inside,
    negative outside, zero on the boundary."""
    x, y = pt
    best = math.inf
    bx, by = p.vertices[-1]
    for ax, ay in p.vertices:
        best = min(best, _point_segment_distance(x, y, ax, ay, bx, by))
        bx, by = ax, ay
    return best if point_in_polygon(pt, p) else -best


class _Cell:
    __slots__ = ("x", "y", "h", "d", "max")

    def __init__(self, x: float, y: float, h: float, poly: Polygon):
        self.x = x
        self.y = y
        self.h = h
        self.d = distance_to_contour((x, y), poly)
        self.max = self.d + h * math.sqrt(2.0)


def pole_of_inaccessibility(p: Polygon, precision_mm: float = DEFAULT_POLE_PRECISION_MM) -> tuple[Point, float]:
    """Interior point farthest from the outline and that distance.

    Quadtree refinement over the bounding box: cells are prioritized by
    center distance + cell radius and split until no cell can beat the
    best-known distance by more than precision_mm. Seed cells are pushed in
    row-major order and ties keep the earlier cell, so results are
    deterministic even when the pole is not unique.
    """
    if precision_mm <= 0.0:
        raise ValueError("precision_mm must be > 0")
    area, centroid = area_and_centroid(p)  # raises on degenerate input

    min_x, min_y, max_x, max_y = p.bounds()
    width = max_x - min_x
    height = max_y - min_y
    cell_size = min(width, height)
    if cell_size == 0.0:
        raise DegenerateGeometryError("polygon has zero extent")
    h = cell_size / 2.0

    counter = 0
    queue: list[tuple[float, int, _Cell]] = []

    def push(cell: _Cell) -> None:
        nonlocal counter
        heapq.heappush(queue, (-cell.max, counter, cell))
        counter += 1

    y = min_y
    while y < max_y:
        x = min_x
        while x < max_x:
            push(_Cell(x + h, y + h, h, p))
            x += cell_size
        y += cell_size

    best = _Cell(centroid[0], centroid[1], 0.0, p)
    bbox_cell = _Cell(min_x + width / 2.0, min_y + height / 2.0, 0.0, p)
    if bbox_cell.d > best.d:
        best = bbox_cell

    # hard stop against pathological inputs; never reached for sane polygons
    for _ in range(1_000_000):
        if not queue:
            break
        _, _, cell = heapq.heappop(queue)
        if cell.d > best.d:
            best = cell
        # keep refining until an interior point is found, then until converged
        if cell.max - best.d <= precision_mm and best.d > 0.0:
            continue
        ch = cell.h / 2.0
        if ch <= 0.0:
            continue
        push(_Cell(cell.x - ch, cell.y - ch, ch, p))
        push(_Cell(cell.x + ch, cell.y - ch, ch, p))
        push(_Cell(cell.x - ch, cell.y + ch, ch, p))
        push(_Cell(cell.x + ch, cell.y + ch, ch, p))

    return (best.x, best.y), best.d


def segment_min_distance(s1: Segment, s2: Segment) -> float:
    """Exact minimum distance between two closed segments (0 iff they touch)."""
    (p1, p2), (q1, q2) = s1, s2
    if _segments_cross_properly(p1, p2, q1, q2):
        return 0.0
    return min(
        _point_segment_distance(*p1, *q1, *q2),
        _point_segment_distance(*p2, *q1, *q2),
        _point_segment_distance(*q1, *p1, *p2),
        _point_segment_distance(*q2, *p1, *p2),
    )


def polyline_min_distance(a: Sequence[Point], b: Sequence[Point]) -> float:
    """Minimum distance between two polylines; single points are allowed."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("polylines must contain at least one point")
    segs_a = list(zip(a, a[1:])) or [(a[0], a[0])]
    segs_b = list(zip(b, b[1:])) or [(b[0], b[0])]
    best = math.inf
    for sa in segs_a:
        for sb in segs_b:
            d = segment_min_distance(Segment(*sa), Segment(*sb))
            if d < best:
                best = d
                if best == 0.0:
                    return 0.0
    return best


class NormalEstimate(NamedTuple):
    normal: tuple[float, float, float]
    degenerate: bool


def surface_normal(maps, px: tuple[int, int], window_px: int = 11) -> NormalEstimate:
    """Least-squares plane normal from the depth samples around px that share
    its label. Falls back to straight-up (0, 0, 1) when fewer than 3 samples
    exist or the samples are rank-deficient (e.g. collinear).
    """
    if window_px < 1 or window_px % 2 == 0:
        raise ValueError("window_px must be odd and positive")
    ix, iy = px
    if not (0 <= ix < maps.width_px and 0 <= iy < maps.height_px):
        raise ValueError(f"pixel {px} outside {maps.width_px}x{maps.height_px} map")
    half = window_px // 2
    x0 = max(0, ix - half)
    x1 = min(maps.width_px, ix + half + 1)
    y0 = max(0, iy - half)
    y1 = min(maps.height_px, iy + half + 1)

    label = maps.label[y0:y1, x0:x1]
    target = maps.label[iy, ix]
    mask = label == target
    count = int(mask.sum())
    if target < 0 or count < 3:
        return NormalEstimate((0.0, 0.0, 1.0), True)

    yy, xx = np.nonzero(mask)
    res = maps.resolution_mm_per_px
    xs = (xx + x0) * res
    ys = (yy + y0) * res
    zs = maps.depth[y0:y1, x0:x1][mask]
    a = np.column_stack([xs, ys, np.ones(count)])
    sol, _, rank, _ = np.linalg.lstsq(a, zs, rcond=None)
    if rank < 3:
        return NormalEstimate((0.0, 0.0, 1.0), True)
    nx, ny, nz = -sol[0], -sol[1], 1.0
    norm = math.sqrt(nx * nx + ny * ny + nz * nz)
    return NormalEstimate((nx / norm, ny / norm, nz / norm), False)
