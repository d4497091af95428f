"""Brute-force 3D stacking of item bounding boxes inside a cardboard box.

Boxes are axis-aligned; positions are the minimum corner of the footprint.
Gravity is simplified: a box rests at the maximum top height among the
already placed boxes its footprint overlaps (no tilt or partial support).
Stacks may exceed the box rim; height only drives the objective.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .model import Item

# |A| + |B| + |C| beyond this is not brute-forceable
MAX_ITEMS = 12

# an item is oblong when clearly elongated
OBLONG_RATIO = 2.0


class InfeasibleItemError(ValueError):
    """An item's footprint does not fit the empty box in any orientation."""

    def __init__(self, item_id: str):
        super().__init__(f"item '{item_id}' does not fit the box footprint in any orientation")
        self.item_id = item_id


@dataclass(frozen=True)
class PlacementPose:
    item_id: str
    position_mm: tuple[float, float, float]  # min corner of the oriented bbox
    rotation_deg: int  # 0 or 90 about the vertical axis
    oriented_dims_mm: tuple[float, float, float]

    def __post_init__(self) -> None:
        if self.rotation_deg not in (0, 90):
            raise ValueError("rotation_deg must be 0 or 90")

    @property
    def top_mm(self) -> float:
        return self.position_mm[2] + self.oriented_dims_mm[2]


@dataclass(frozen=True)
class PlacementProblem:
    box_dims_mm: tuple[float, float, float]
    placed_a: tuple[PlacementPose, ...]
    pending_b: tuple[Item, ...]
    future_c: tuple[Item, ...]

    def __post_init__(self) -> None:
        if any(d <= 0 for d in self.box_dims_mm):
            raise ValueError("box dimensions must be positive")
        total = len(self.placed_a) + len(self.pending_b) + len(self.future_c)
        if total > MAX_ITEMS:
            raise ValueError(f"{total} items exceed the brute-force cap of {MAX_ITEMS}")
        for pose in self.placed_a:
            x, y, _ = pose.position_mm
            l, w, _ = pose.oriented_dims_mm
            if x < -1e-9 or y < -1e-9 or x + l > self.box_dims_mm[0] + 1e-9 or y + w > self.box_dims_mm[1] + 1e-9:
                raise ValueError(f"fixed pose of '{pose.item_id}' leaves the box walls")
        for p, q in itertools.combinations(self.placed_a, 2):
            if _boxes_overlap(p, q):
                raise ValueError(f"fixed poses of '{p.item_id}' and '{q.item_id}' overlap")


def poses_overlap(a: PlacementPose, b: PlacementPose) -> bool:
    """True when two placed bounding boxes intersect in 3D."""
    return _boxes_overlap(a, b)


def _boxes_overlap(a: PlacementPose, b: PlacementPose) -> bool:
    for axis in range(3):
        if a.position_mm[axis] + a.oriented_dims_mm[axis] <= b.position_mm[axis] + 1e-9:
            return False
        if b.position_mm[axis] + b.oriented_dims_mm[axis] <= a.position_mm[axis] + 1e-9:
            return False
    return True


def oriented_candidates(item: Item) -> list[tuple[tuple[float, float, float], int]]:
    """Orientation candidates as ((l, w, h), rotation_deg), deduplicated.

    Oblong items (max dim >= 2x min dim) keep their smallest dimension
    vertical; other items may stand on any face. The two horizontal
    assignments per up-axis map to rotations 0 and 90.
    """
    dims = item.bbox_mm
    lo = min(dims)
    oblong = max(dims) >= OBLONG_RATIO * lo

    up_choices: list[int]
    if oblong:
        up_choices = [dims.index(lo)]
    else:
        up_choices = [0, 1, 2]

    out: list[tuple[tuple[float, float, float], int]] = []
    seen: set[tuple[float, float, float]] = set()
    for up in up_choices:
        rest = [dims[i] for i in range(3) if i != up]
        for rot, (l, w) in ((0, (rest[0], rest[1])), (90, (rest[1], rest[0]))):
            cand = (l, w, dims[up])
            if cand not in seen:
                seen.add(cand)
                out.append((cand, rot))
    return out


def oblong_orientations(item: Item) -> list[tuple[float, float, float]]:
    """Oriented (l, w, h) candidates for an item; see oriented_candidates."""
    return [dims for dims, _ in oriented_candidates(item)]


def _rest_height(x: float, y: float, l: float, w: float, placed: Sequence[PlacementPose]) -> float:
    z = 0.0
    for p in placed:
        px, py, _ = p.position_mm
        pl, pw, _ = p.oriented_dims_mm
        if x < px + pl - 1e-9 and px < x + l - 1e-9 and y < py + pw - 1e-9 and py < y + w - 1e-9:
            z = max(z, p.top_mm)
    return z


def _candidate_positions(box_l: float, box_w: float, l: float, w: float, placed: Sequence[PlacementPose]) -> list[tuple[float, float]]:
    xs = {0.0}
    ys = {0.0}
    for p in placed:
        xs.add(p.position_mm[0])
        xs.add(p.position_mm[0] + p.oriented_dims_mm[0])
        ys.add(p.position_mm[1])
        ys.add(p.position_mm[1] + p.oriented_dims_mm[1])
    out = []
    for x in sorted(xs):
        if x + l > box_l + 1e-9:
            continue
        for y in sorted(ys):
            if y + w > box_w + 1e-9:
                continue
            out.append((x, y))
    return out


def plan_placement(problem: PlacementProblem) -> tuple[tuple[PlacementPose, ...], float]:
    """Minimum-stacking-height placement for the pending items.

    Searches all placement orders (B permutations before C permutations),
    the orientation candidates of each item and corner-point positions, with
    branch-and-bound on (height, summed B corner distance). Returns the B
    poses of the best arrangement, in pending_b order, plus the overall top
    height including fixed and future items.
    """
    box_l, box_w, _ = problem.box_dims_mm

    per_item: dict[str, list[tuple[tuple[float, float, float], int]]] = {}
    for item in (*problem.pending_b, *problem.future_c):
        cands = oriented_candidates(item)
        fitting = [(dims, rot) for dims, rot in cands if dims[0] <= box_l + 1e-9 and dims[1] <= box_w + 1e-9]
        if not fitting:
            raise InfeasibleItemError(item.id)
        # try flat orientations first: good first solutions tighten the bound
        per_item[item.id] = sorted(fitting, key=lambda c: (c[0][2], -c[0][0] * c[0][1]))

    base_height = max((p.top_mm for p in problem.placed_a), default=0.0)
    b_ids = {it.id for it in problem.pending_b}

    best: dict[str, object] = {"key": None, "poses": None}

    def corner_dist(pose: PlacementPose) -> float:
        x, y, _ = pose.position_mm
        return (x * x + y * y) ** 0.5

    def search(
        remaining_b: tuple[Item, ...],
        remaining_c: tuple[Item, ...],
        placed: list[PlacementPose],
        height: float,
        b_dist: float,
    ) -> None:
        best_key = best["key"]
        if best_key is not None and (height, b_dist) > best_key[:2]:
            return
        if not remaining_b and not remaining_c:
            key = (height, b_dist, tuple(sorted((p.item_id, *p.position_mm) for p in placed)))
            if best_key is None or key < best_key:
                best["key"] = key
                best["poses"] = tuple(p for p in placed if p.item_id in b_ids)
            return
        pool = remaining_b if remaining_b else remaining_c
        for i, item in enumerate(pool):
            rest_pool = pool[:i] + pool[i + 1 :]
            for dims, rot in per_item[item.id]:
                l, w, h = dims
                for x, y in _candidate_positions(box_l, box_w, l, w, placed):
                    z = _rest_height(x, y, l, w, placed)
                    pose = PlacementPose(item.id, (x, y, z), rot, dims)
                    placed.append(pose)
                    if remaining_b:
                        search(rest_pool, remaining_c, placed, max(height, pose.top_mm), b_dist + corner_dist(pose))
                    else:
                        search((), rest_pool, placed, max(height, pose.top_mm), b_dist)
                    placed.pop()

    search(problem.pending_b, problem.future_c, list(problem.placed_a), base_height, 0.0)

    if not problem.pending_b and not problem.future_c:
        return (), base_height
    assert best["poses"] is not None
    poses = {p.item_id: p for p in best["poses"]}
    ordered = tuple(poses[it.id] for it in problem.pending_b)
    return ordered, float(best["key"][0])
