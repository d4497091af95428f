"""High-level pick and stow planning: detection ranking, task marking,
parallel-execution gating and arm assignment.

A Task is minted from fresh perception results and later bound to an arm;
binding fills in the waypoint list (current arm pose, pre-grasp, grasp,
post-grasp, place, home). Pre- and post-grasp coincide with the grasp point
in the 2D projection used for collision gating; they still cost settle time
in the simulator's motion model.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Sequence

from .clutter import ClutterGraph, occluder_count
from .geometry import Point, area_and_centroid, distance_to_contour, polyline_min_distance
from .grasping import GraspPose
from .model import FAIL_COUNT_CAP, ContainerKind, Detection, Workspace
from .placement import PlacementPose

from enum import Enum

MIN_STOW_SEPARATION_MM = 250.0

# how many target tasks are marked per bin, and how many move-away tasks are
# generated when targets are unreachable
MAX_MARKED_TASKS = 2
MAX_MOVE_TASKS = 2

# waypoint roles within Task.waypoints after arm binding
WP_CURRENT, WP_PRE, WP_GRASP, WP_POST, WP_PLACE, WP_HOME = range(6)


class TaskKind(str, Enum):
    PICK_TARGET = "pick_target"
    MOVE_AWAY = "move_away"
    STOW = "stow"


@dataclass(frozen=True)
class Task:
    item_id: str
    kind: TaskKind
    grasp: GraspPose
    source_container: ContainerKind
    place_container: ContainerKind
    place_point: Point
    place_pose: Optional[PlacementPose] = None
    arm: Optional[int] = None
    waypoints: tuple[Point, ...] = ()

    def __post_init__(self) -> None:
        if self.waypoints and len(self.waypoints) < 2:
            raise ValueError("a bound task needs at least 2 waypoints")

    @property
    def grasp_point(self) -> Point:
        return (self.grasp.point_mm[0], self.grasp.point_mm[1])


def bind_task(task: Task, arm: int, arm_pos: Point, home: Point) -> Task:
    """Bind a marked task to an arm, fixing the full waypoint sequence."""
    g = task.grasp_point
    waypoints = (arm_pos, g, g, g, task.place_point, home)
    return replace(task, arm=arm, waypoints=waypoints)


@dataclass
class PlannerState:
    fail_counters: dict[str, int] = field(default_factory=dict)
    marked_tasks: dict[ContainerKind, list[Task]] = field(default_factory=dict)
    active_tasks: dict[int, Optional[Task]] = field(default_factory=dict)
    attempts_since_perception: int = 0

    def fail_count(self, item_id: str) -> int:
        return self.fail_counters.get(item_id, 0)

    def record_failure(self, item_id: str) -> None:
        self.fail_counters[item_id] = self.fail_count(item_id) + 1


# --- pick planning -------------------------------------------------------------


def rank_pick_detections(
    dets: Sequence[Detection],
    dag: ClutterGraph,
    fails: Mapping[str, int],
) -> list[Detection]:
    """Ascending fail count, then ascending occluder count, then descending
    confidence; ties resolve by item id."""
    known = dag.vertex_ids()
    for det in dets:
        if det.item_id not in known:
            raise ValueError(f"detection {det.item_id!r} missing from the clutter graph")
    return sorted(
        dets,
        key=lambda d: (fails.get(d.item_id, 0), occluder_count(dag, d.item_id), -d.confidence, d.item_id),
    )


def _ancestor_distances(dag: ClutterGraph, item_id: str) -> dict[str, int]:
    """BFS over predecessors: occluder id -> hop distance to the item."""
    pred = dag.predecessors()
    dist: dict[str, int] = {}
    frontier = [(p, 1) for p in pred[item_id]]
    while frontier:
        node, d = frontier.pop(0)
        if node in dist and dist[node] <= d:
            continue
        dist[node] = d
        frontier.extend((p, d + 1) for p in pred[node])
    return dist


def generate_pick_tasks(
    dets: Sequence[Detection],
    dag: ClutterGraph,
    pending_targets: set[str],
    fails: Mapping[str, int],
    mint: Callable[[Detection, TaskKind], Optional[Task]],
    fail_cap: int = FAIL_COUNT_CAP,
    hidden_spots: Sequence[Point] = (),
) -> list[Task]:
    """Mark tasks for one bin from its fresh perception results.

    The two best ranked pending targets become pick tasks. When no target is
    visible or the best target has failed too often, move-away tasks are
    generated instead: the most exposed items occluding the visible targets,
    or, with no target visible at all, the items nearest to the last known
    target locations in this bin (`hidden_spots`). Falls back to marking
    targets regardless of fail count when no move candidate exists, since
    retrying is the only remaining action.
    """
    target_dets = [d for d in dets if d.item_id in pending_targets]
    ranked = rank_pick_detections(target_dets, dag, fails) if target_dets else []

    if ranked and fails.get(ranked[0].item_id, 0) <= fail_cap:
        tasks = [mint(d, TaskKind.PICK_TARGET) for d in ranked[:MAX_MARKED_TASKS]]
        return [t for t in tasks if t is not None]

    non_targets = [d for d in dets if d.item_id not in pending_targets]
    candidates: list[Detection]
    if ranked:
        # clear the items sitting on the (blocked or repeatedly failed) targets
        dist_to_target: dict[str, int] = {}
        for tdet in ranked:
            for occ, d in _ancestor_distances(dag, tdet.item_id).items():
                if occ not in dist_to_target or d < dist_to_target[occ]:
                    dist_to_target[occ] = d
        candidates = [d for d in non_targets if d.item_id in dist_to_target]
        candidates.sort(key=lambda d: (occluder_count(dag, d.item_id), dist_to_target[d.item_id], d.item_id))
    elif hidden_spots:
        # a wanted item should be under this pile; move what sits on its
        # last known spot first, then whatever is nearest
        def spot_key(det: Detection) -> tuple:
            covering = any(distance_to_contour(s, det.contour) > 0 for s in hidden_spots)
            c = _contour_center(det)
            nearest = min(math.dist(c, s) for s in hidden_spots)
            return (0 if covering else 1, nearest, occluder_count(dag, det.item_id), det.item_id)

        candidates = sorted(non_targets, key=spot_key)
    else:
        candidates = []

    moves = [mint(d, TaskKind.MOVE_AWAY) for d in candidates[:MAX_MOVE_TASKS]]
    moves = [t for t in moves if t is not None]
    if moves:
        return moves
    tasks = [mint(d, TaskKind.PICK_TARGET) for d in ranked[:MAX_MARKED_TASKS]]
    return [t for t in tasks if t is not None]


def paths_compatible(a: Sequence[Point], b: Sequence[Point], threshold_mm: float) -> bool:
    """True when the two 2D waypoint paths stay strictly farther apart than
    the threshold; an empty path (idle arm) is compatible with anything."""
    if not a or not b:
        return True
    return polyline_min_distance(a, b) > threshold_mm


def tasks_compatible(t1: Task, t2: Task, threshold_mm: float) -> bool:
    return paths_compatible(t1.waypoints, t2.waypoints, threshold_mm)


def assign_task(
    workspace: Workspace,
    free_arm: int,
    candidates: Sequence[Task],
    other_arm_path: Sequence[Point],
    arm_pos: Point,
    home: Point,
) -> Optional[Task]:
    """Pick the task the free arm should execute, or None.

    Candidates must be in rank order. Tasks placing into the free arm's own
    corner box are preferred since no other arm can serve them; otherwise the
    best-ranked compatible task wins. Compatibility is checked against the
    other arm's remaining waypoints with the candidate's full bound path.
    """
    threshold = workspace.collision_threshold_mm
    corner = workspace.corner_box_of(free_arm)
    corner_kind = corner.kind if corner is not None else None

    compatible: list[Task] = []
    for task in candidates:
        if free_arm not in workspace.container(task.place_container).reachable_by:
            continue
        if free_arm not in workspace.container(task.source_container).reachable_by:
            continue
        bound = bind_task(task, free_arm, arm_pos, home)
        if paths_compatible(bound.waypoints, other_arm_path, threshold):
            compatible.append(bound)

    for task in compatible:
        if corner_kind is not None and task.place_container == corner_kind:
            return task
    return compatible[0] if compatible else None


# --- stow planning -------------------------------------------------------------


def rank_stow_detections(dets: Sequence[Detection], dag: ClutterGraph) -> list[Detection]:
    """Confidence sort, keep the best 3/4, re-sort those by occluder count
    and keep the best half. Fractional keeps round up so a lone detection
    always survives; the occluder sort order is preserved in the result."""
    if not dets:
        return []
    by_conf = sorted(dets, key=lambda d: (-d.confidence, d.item_id))
    kept = by_conf[: math.ceil(len(by_conf) * 3 / 4)]
    by_occ = sorted(kept, key=lambda d: occluder_count(dag, d.item_id))  # stable: keeps conf order in ties
    return by_occ[: math.ceil(len(by_occ) / 2)]


def _contour_center(det: Detection) -> Point:
    _, centroid = area_and_centroid(det.contour)
    return centroid


def select_stow_pair(
    candidates: Sequence[Detection],
    min_separation_mm: float,
    arms: Sequence[int],
    rng: random.Random,
) -> list[tuple[Detection, int]]:
    """Select one or two stow attempts with arm assignments.

    Searches for a pair that contains one of the two best candidates and
    whose items are farther apart than the separation margin, so the first
    grasp cannot disturb the second. Pairs are assigned to the arms randomly;
    without a pair the single best candidate is stowed.
    """
    if not candidates:
        return []
    if len(candidates) >= 2:
        centers = {d.item_id: _contour_center(d) for d in candidates}
        for x in candidates[:2]:
            for y in candidates:
                if y.item_id == x.item_id:
                    continue
                cx, cy = centers[x.item_id], centers[y.item_id]
                if math.dist(cx, cy) > min_separation_mm:
                    if len(arms) >= 2:
                        first, second = (arms[0], arms[1]) if rng.random() < 0.5 else (arms[1], arms[0])
                    else:
                        first = second = arms[0]
                    return [(x, first), (y, second)]
    return [(candidates[0], arms[rng.randrange(len(arms))])]
