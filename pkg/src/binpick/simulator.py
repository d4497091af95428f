"""Deterministic discrete-event simulation of stow and pick episodes.

Perception is replaced by rendering the scene's item footprints into label
and depth maps after a fixed latency. Arms are end-effector points that
traverse 2D waypoints at constant speed; every waypoint transition also costs
a fixed settle time (approach, alignment, retract), which calibrates action
durations against field timings. Scales gate every lift through a weight
check; the container being picked from is guarded by a mutual-exclusion
token so weight measurements are sequential.

All randomness flows from the config seed through a single random.Random,
consumed in event order, so a fixed seed reproduces an episode exactly.
"""

from __future__ import annotations

import heapq
import json
import logging
import math
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable, Mapping, Optional, Sequence

import numpy as np
from scipy import ndimage
from skimage import measure

from . import coordination as coord
from .clutter import ClutterGraph, build_graph, resolve
from .coordination import Task, TaskKind, PlannerState, bind_task
from .geometry import (
    DegenerateGeometryError,
    Point,
    Polygon,
    Segment,
    area_and_centroid,
    segment_min_distance,
)
from .grasping import (
    GraspAnchor,
    GraspKind,
    choose_grasp_kind,
    lift_to_pose,
    perturb_grasp,
    select_grasp_point,
    verify_weight,
)
from .model import (
    ARMS,
    FAIL_COUNT_CAP,
    Container,
    ContainerKind,
    Detection,
    Item,
    PICK_BOXES,
    Scenario,
    SceneMaps,
    ScenarioError,
    STORAGE_BINS,
    TaskMode,
    Workspace,
    workspace_for_task,
)
from .placement import InfeasibleItemError, PlacementPose, PlacementProblem, plan_placement, poses_overlap

log = logging.getLogger("binpick.sim")

DEFAULT_PERCEPTION_LATENCY_S = {TaskMode.STOW: 11.0, TaskMode.PICK: 13.0}

# keep sampled footprints one pixel clear of container walls so rasterized
# contours stay inside the rendered maps
WALL_MARGIN_MM = 2.0

# replacement spot for the unreachable corner box in single-arm pick runs
SINGLE_ARM_BOX_ORIGIN = (-250.0, -250.0)


class ActionKind(str, Enum):
    PERCEIVE = "perceive"
    GRASP_ATTEMPT = "grasp_attempt"
    GRASP_SUCCESS = "grasp_success"
    GRASP_FAIL = "grasp_fail"
    WEIGHT_REJECT = "weight_reject"
    PLACE = "place"
    MOVE_AWAY = "move_away"
    IDLE = "idle"


@dataclass(frozen=True)
class SimConfig:
    arms: int = 2
    grasp_success_rate: float = 1.0
    perception_latency_s: Mapping[TaskMode, float] = field(
        default_factory=lambda: dict(DEFAULT_PERCEPTION_LATENCY_S)
    )
    ee_speed_mm_per_s: float = 800.0
    grasp_dwell_s: float = 4.0
    release_dwell_s: float = 2.0
    seed: int = 0
    scale_noise_g: float = 1.0
    max_episode_s: float = 1800.0
    move_settle_s: float = 6.0  # per-waypoint approach/align/retract overhead
    map_resolution_mm: float = 2.0
    min_separation_mm: float = coord.MIN_STOW_SEPARATION_MM
    fail_cap: int = FAIL_COUNT_CAP

    def __post_init__(self) -> None:
        if self.arms not in (1, 2):
            raise ValueError("arms must be 1 or 2")
        if not 0.0 <= self.grasp_success_rate <= 1.0:
            raise ValueError("grasp_success_rate must be in [0,1]")
        positives = {
            "ee_speed_mm_per_s": self.ee_speed_mm_per_s,
            "grasp_dwell_s": self.grasp_dwell_s,
            "release_dwell_s": self.release_dwell_s,
            "max_episode_s": self.max_episode_s,
            "map_resolution_mm": self.map_resolution_mm,
        }
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be > 0")
        for mode, latency in self.perception_latency_s.items():
            if latency <= 0:
                raise ValueError(f"perception latency for {mode} must be > 0")
        if self.move_settle_s < 0 or self.scale_noise_g < 0:
            raise ValueError("move_settle_s and scale_noise_g must be >= 0")


@dataclass
class LogRecord:
    time_s: float
    arm: Optional[int]
    kind: ActionKind
    item_id: Optional[str]
    detail: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "time_s": self.time_s,
                "arm": self.arm,
                "kind": self.kind.value,
                "item_id": self.item_id,
                "detail": self.detail,
            },
            sort_keys=True,
        )


@dataclass
class EpisodeLog:
    records: list[LogRecord] = field(default_factory=list)
    outcome: dict = field(default_factory=dict)

    def append(self, record: LogRecord) -> None:
        if self.records and record.time_s < self.records[-1].time_s - 1e-9:
            raise ValueError("log timestamps must be non-decreasing")
        self.records.append(record)

    def by_kind(self, kind: ActionKind) -> list[LogRecord]:
        return [r for r in self.records if r.kind == kind]

    def to_jsonl(self) -> str:
        lines = [r.to_json() for r in self.records]
        lines.append(json.dumps({"outcome": self.outcome}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeLog":
        out = cls()
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"episode log line {lineno} is not valid JSON: {exc.msg}") from exc
            if "outcome" in raw:
                out.outcome = raw["outcome"]
                continue
            out.append(
                LogRecord(
                    time_s=float(raw["time_s"]),
                    arm=raw.get("arm"),
                    kind=ActionKind(raw["kind"]),
                    item_id=raw.get("item_id"),
                    detail=raw.get("detail", {}),
                )
            )
        return out


# --- scene ---------------------------------------------------------------------


@dataclass
class PlacedSim:
    item: Item
    center: Point  # workspace mm
    base_mm: float
    order: int  # insertion counter, breaks top-height ties

    @property
    def top_mm(self) -> float:
        return self.base_mm + self.item.bbox_mm[2]

    def footprint(self) -> tuple[float, float, float, float]:
        l, w, _ = self.item.bbox_mm
        return (
            self.center[0] - l / 2.0,
            self.center[1] - w / 2.0,
            self.center[0] + l / 2.0,
            self.center[1] + w / 2.0,
        )


def _rects_overlap(a: tuple[float, float, float, float], b: tuple[float, float, float, float]) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


class SimScene:
    """Ground-truth item state per container, plus rendering to SceneMaps."""

    def __init__(self, containers: Iterable[Container]):
        self.containers: dict[ContainerKind, Container] = {c.kind: c for c in containers}
        self.placements: dict[ContainerKind, list[PlacedSim]] = {k: [] for k in self.containers}
        self.version: dict[ContainerKind, int] = {k: 0 for k in self.containers}
        self._counter = 0

    def items_in(self, kind: ContainerKind) -> list[Item]:
        return [p.item for p in self.placements[kind]]

    def sample_position(self, kind: ContainerKind, item: Item, rng: random.Random) -> Point:
        container = self.containers[kind]
        x0, y0, x1, y1 = container.footprint()
        l, w, _ = item.bbox_mm
        lo_x, hi_x = x0 + l / 2.0 + WALL_MARGIN_MM, x1 - l / 2.0 - WALL_MARGIN_MM
        lo_y, hi_y = y0 + w / 2.0 + WALL_MARGIN_MM, y1 - w / 2.0 - WALL_MARGIN_MM
        if lo_x > hi_x or lo_y > hi_y:
            raise ScenarioError(
                f"item '{item.id}' footprint {l}x{w} does not fit container {kind.value}"
            )
        return (rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y))

    def add(self, kind: ContainerKind, item: Item, center: Point) -> PlacedSim:
        rect = (
            center[0] - item.bbox_mm[0] / 2.0,
            center[1] - item.bbox_mm[1] / 2.0,
            center[0] + item.bbox_mm[0] / 2.0,
            center[1] + item.bbox_mm[1] / 2.0,
        )
        x0, y0, x1, y1 = self.containers[kind].footprint()
        if rect[0] < x0 - 1e-6 or rect[1] < y0 - 1e-6 or rect[2] > x1 + 1e-6 or rect[3] > y1 + 1e-6:
            raise ScenarioError(f"item '{item.id}' footprint leaves container {kind.value}")
        base = 0.0
        for placed in self.placements[kind]:
            if _rects_overlap(rect, placed.footprint()):
                base = max(base, placed.top_mm)
        self._counter += 1
        entry = PlacedSim(item=item, center=center, base_mm=base, order=self._counter)
        self.placements[kind].append(entry)
        self.version[kind] += 1
        return entry

    def remove(self, kind: ContainerKind, item_id: str) -> PlacedSim:
        entries = self.placements[kind]
        for i, placed in enumerate(entries):
            if placed.item.id == item_id:
                self.version[kind] += 1
                return entries.pop(i)
        raise KeyError(f"item '{item_id}' is not in container {kind.value}")

    def top_item_at(self, kind: ContainerKind, point: Point) -> Optional[PlacedSim]:
        """Highest item whose footprint covers the point (what a descending
        gripper would touch first)."""
        best: Optional[PlacedSim] = None
        for placed in self.placements[kind]:
            x0, y0, x1, y1 = placed.footprint()
            if x0 <= point[0] <= x1 and y0 <= point[1] <= y1:
                if best is None or (placed.top_mm, placed.order) > (best.top_mm, best.order):
                    best = placed
        return best


def sample_scene(items: Sequence[Item], container: Container, rng: random.Random) -> SimScene:
    """Scene with the items dropped at uniform in-bounds positions in the
    container, in the given order (which is also the stacking order)."""
    scene = SimScene([container])
    for item in items:
        scene.add(container.kind, item, scene.sample_position(container.kind, item, rng))
    return scene


# items whose visible patch is smaller than this are treated as undetected
# (the segmentation stand-in cannot produce a usable contour for slivers)
MIN_VISIBLE_PX = 12


def _visible_contour(
    mask: np.ndarray, slice_x0: int, slice_y0: int, origin_mm: Point, res: float
) -> Optional[Polygon]:
    """Trace the outline of the largest visible patch as a workspace-mm
    polygon; None when the patch is too small or degenerate."""
    labels, count = ndimage.label(mask)
    if count == 0:
        return None
    if count > 1:
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, count + 1))
        mask = labels == (int(np.argmax(sizes)) + 1)
    padded = np.pad(mask.astype(np.float64), 1)
    contours = measure.find_contours(padded, 0.5)
    if not contours:
        return None
    boundary = max(contours, key=len)
    if len(boundary) < 4:
        return None
    points = boundary[:-1]  # closing point repeats the first
    # drop collinear runs (marching squares emits a vertex per pixel edge)
    keep = []
    n = len(points)
    for i in range(n):
        prev_pt = points[i - 1]
        cur = points[i]
        nxt = points[(i + 1) % n]
        cross = (cur[0] - prev_pt[0]) * (nxt[1] - cur[1]) - (cur[1] - prev_pt[1]) * (nxt[0] - cur[0])
        if abs(cross) > 1e-12:
            keep.append(cur)
    if len(keep) < 3:
        return None
    verts = tuple(
        (
            origin_mm[0] + (col - 1.0 + slice_x0 + 0.5) * res,
            origin_mm[1] + (row - 1.0 + slice_y0 + 0.5) * res,
        )
        for row, col in keep
    )
    try:
        poly = Polygon(verts)
        area_and_centroid(poly)
    except DegenerateGeometryError:
        return None
    return poly


def render(
    scene: SimScene, kind: ContainerKind, resolution_mm_per_px: float = 2.0
) -> tuple[SceneMaps, list[Detection]]:
    """Rasterize one container into label/depth maps plus detections.

    Items are painted lowest-first so the highest surface wins each pixel.
    Detections mimic a segmentation pipeline: the contour outlines the
    item's visible patch and the confidence is the visible fraction of its
    footprint. Fully hidden (or sliver-thin) items yield no detection.
    """
    container = scene.containers[kind]
    x0, y0, x1, y1 = container.footprint()
    res = resolution_mm_per_px
    width_px = max(1, int(round((x1 - x0) / res)))
    height_px = max(1, int(round((y1 - y0) / res)))
    label = np.full((height_px, width_px), -1, dtype=np.int32)
    depth = np.zeros((height_px, width_px), dtype=np.float64)

    entries = sorted(scene.placements[kind], key=lambda p: (p.top_mm, p.order))
    ids = tuple(p.item.id for p in entries)
    spans: list[tuple[int, int, int, int]] = []
    for idx, placed in enumerate(entries):
        fx0, fy0, fx1, fy1 = placed.footprint()
        px0 = max(0, int(round((fx0 - x0) / res)))
        py0 = max(0, int(round((fy0 - y0) / res)))
        px1 = min(width_px, int(round((fx1 - x0) / res)))
        py1 = min(height_px, int(round((fy1 - y0) / res)))
        label[py0:py1, px0:px1] = idx
        depth[py0:py1, px0:px1] = placed.top_mm
        spans.append((px0, py0, px1, py1))

    maps = SceneMaps(
        resolution_mm_per_px=res,
        width_px=width_px,
        height_px=height_px,
        ids=ids,
        label=label,
        depth=depth,
        origin_mm=(x0, y0),
    )
    detections: list[Detection] = []
    for idx, placed in enumerate(entries):
        px0, py0, px1, py1 = spans[idx]
        footprint_px = max(1, (px1 - px0) * (py1 - py0))
        mask = label[py0:py1, px0:px1] == idx
        visible = int(mask.sum())
        if visible < MIN_VISIBLE_PX:
            continue
        contour = _visible_contour(mask, px0, py0, (x0, y0), res)
        if contour is None:
            continue
        detections.append(
            Detection(
                item_id=placed.item.id,
                contour=contour,
                confidence=min(1.0, visible / footprint_px),
            )
        )
    detections.sort(key=lambda d: d.item_id)
    return maps, detections


# --- episode engine ------------------------------------------------------------


def _segment_intersects_rect(a: Point, b: Point, rect: tuple[float, float, float, float]) -> bool:
    x0, y0, x1, y1 = rect
    for px, py in (a, b):
        if x0 <= px <= x1 and y0 <= py <= y1:
            return True
    edges = (
        ((x0, y0), (x1, y0)),
        ((x1, y0), (x1, y1)),
        ((x1, y1), (x0, y1)),
        ((x0, y1), (x0, y0)),
    )
    seg = Segment(a, b)
    return any(segment_min_distance(seg, Segment(p, q)) == 0.0 for p, q in edges)


def _path_intersects_rect(path: Sequence[Point], rect: tuple[float, float, float, float]) -> bool:
    if not path:
        return False
    if len(path) == 1:
        return _segment_intersects_rect(path[0], path[0], rect)
    return any(_segment_intersects_rect(path[i], path[i + 1], rect) for i in range(len(path) - 1))


@dataclass
class _ArmRuntime:
    arm: int
    pos: Point
    home: Point
    task: Optional[Task] = None
    task_started_s: float = 0.0
    route: list[tuple[Point, str]] = field(default_factory=list)  # remaining (point, role)
    seg_from: Point = (0.0, 0.0)
    seg_to: Point = (0.0, 0.0)
    seg_settle_end: float = 0.0
    seg_arrive: float = 0.0
    moving: bool = False
    waiting_since: Optional[float] = None
    held: Optional[Item] = None

    def position_at(self, t: float) -> Point:
        if not self.moving:
            return self.pos
        if t <= self.seg_settle_end:
            return self.seg_from
        if t >= self.seg_arrive or self.seg_arrive <= self.seg_settle_end:
            return self.seg_to
        f = (t - self.seg_settle_end) / (self.seg_arrive - self.seg_settle_end)
        return (
            self.seg_from[0] + (self.seg_to[0] - self.seg_from[0]) * f,
            self.seg_from[1] + (self.seg_to[1] - self.seg_from[1]) * f,
        )

    def remaining_path(self, t: float) -> list[Point]:
        if self.task is None:
            return []
        return [self.position_at(t)] + [p for p, _ in self.route]


class _Episode:
    def __init__(self, scenario: Scenario, cfg: SimConfig, task: Optional[TaskMode] = None):
        self.cfg = cfg
        self.mode = task if task is not None else scenario.task
        self.scenario = scenario
        self.rng = random.Random(cfg.seed)
        self.ws = self._prepare_workspace(scenario.workspace)
        self.active_arms = list(range(cfg.arms))
        self.scene = SimScene(self.ws.containers)
        self.log = EpisodeLog()
        self.t = 0.0
        self._seq = 0
        self._events: list[tuple[float, int, Callable[[], None]]] = []

        self.planner = PlannerState(active_tasks={a: None for a in self.active_arms})
        self.arms = {
            a: _ArmRuntime(arm=a, pos=self.ws.arm_home_poses[a], home=self.ws.arm_home_poses[a])
            for a in self.active_arms
        }
        self.tokens: dict[ContainerKind, Optional[int]] = {}
        self.token_queue: dict[ContainerKind, list[int]] = {}

        self.camera_free_at = 0.0
        self.perceiving: dict[ContainerKind, float] = {}  # kind -> start time
        self.last_dets: dict[ContainerKind, list[Detection]] = {}
        self.last_maps: dict[ContainerKind, SceneMaps] = {}
        self.last_dag: dict[ContainerKind, ClutterGraph] = {}
        self.barren_version: dict[ContainerKind, int] = {}
        self.attempt_budget: dict[ContainerKind, int] = {}

        self.goal_time: Optional[float] = None
        self.timeout = False
        self._placement_cache: dict = {}
        # the planner's position memory: items are stowed by this system (or
        # their storage layout is given), so last known spots are available
        # even when an item is currently buried
        self.last_seen: dict[str, tuple[ContainerKind, Point]] = {}

        if self.mode == TaskMode.STOW:
            self.sources = [ContainerKind.TOTE]
            self.stow_bin = {0: ContainerKind.STORAGE_BIN_LEFT, 1: ContainerKind.STORAGE_BIN_RIGHT}
            if cfg.arms == 1:
                self.stow_bin = {0: ContainerKind.STORAGE_BIN_LEFT}
            for item in scenario.stowable_items():
                self.scene.add(
                    ContainerKind.TOTE, item, self.scene.sample_position(ContainerKind.TOTE, item, self.rng)
                )
            self.pending_targets: set[str] = set()
            self.target_box: dict[str, ContainerKind] = {}
        else:
            self.sources = list(STORAGE_BINS)
            self.stow_bin = {}
            bins = list(STORAGE_BINS)
            for item in scenario.items:
                kind = bins[self.rng.randrange(2)]
                self.scene.add(kind, item, self.scene.sample_position(kind, item, self.rng))
            self.pending_targets = set(scenario.order)
            for kind in STORAGE_BINS:
                for placed in self.scene.placements[kind]:
                    self.last_seen[placed.item.id] = (kind, placed.center)
            # targets ship to a box on their own side (mostly the adjacent
            # corner box, every third to the shared center box); cross-hall
            # traffic would collide with everything the other arm does
            side_corner = {
                ContainerKind.STORAGE_BIN_LEFT: ContainerKind.BOX_LEFT_CORNER,
                ContainerKind.STORAGE_BIN_RIGHT: ContainerKind.BOX_RIGHT_CORNER,
            }
            self.target_box = {}
            side_counter: dict[ContainerKind, int] = {}
            for item_id in scenario.order:
                bin_kind = self.last_seen[item_id][0]
                slot = side_counter.get(bin_kind, 0)
                side_counter[bin_kind] = slot + 1
                corner = side_corner[bin_kind]
                choice = ContainerKind.BOX_CENTER if slot % 3 == 2 else corner
                if not self.ws.has(choice):
                    choice = ContainerKind.BOX_CENTER
                self.target_box[item_id] = choice
        for kind in self.sources:
            self.tokens[kind] = None
            self.token_queue[kind] = []
        self.box_contents: dict[ContainerKind, list[PlacementPose]] = {
            k: [] for k in PICK_BOXES if self.ws.has(k)
        }

    def _prepare_workspace(self, ws: Workspace) -> Workspace:
        ws = workspace_for_task(ws, self.mode)
        if self.cfg.arms == 1 and self.mode == TaskMode.PICK:
            # the right arm is unused; its corner box moves to a symmetric
            # spot beside the left arm and becomes reachable for it
            containers = []
            for c in ws.containers:
                if c.kind == ContainerKind.BOX_RIGHT_CORNER:
                    c = replace(c, origin_mm=SINGLE_ARM_BOX_ORIGIN, reachable_by=frozenset({0}))
                containers.append(c)
            ws = replace(ws, containers=tuple(containers))
        return ws

    # -- event machinery --

    def _push(self, when: float, fn: Callable[[], None]) -> None:
        self._seq += 1
        heapq.heappush(self._events, (when, self._seq, fn))

    def _emit(self, kind: ActionKind, arm: Optional[int], item_id: Optional[str], **detail) -> None:
        self.log.append(LogRecord(time_s=self.t, arm=arm, kind=kind, item_id=item_id, detail=detail))

    def run(self) -> EpisodeLog:
        self._schedule_all()
        while self._events:
            when, _, fn = heapq.heappop(self._events)
            self.t = when
            fn()
            self._schedule_all()
        total = self.goal_time if self.goal_time is not None else min(self.t, self.cfg.max_episode_s)
        placed = len(self.scenario.order) - len(self.pending_targets) if self.mode == TaskMode.PICK else None
        stowed = (
            sum(len(self.scene.placements[b]) for b in STORAGE_BINS) if self.mode == TaskMode.STOW else None
        )
        self.log.outcome = {
            "task": self.mode.value,
            "arms": self.cfg.arms,
            "grasp_success_rate": self.cfg.grasp_success_rate,
            "seed": self.cfg.seed,
            "completed": self.goal_time is not None,
            "timeout": self.timeout,
            "total_time_s": total,
            "items_placed": placed,
            "items_stowed": stowed,
        }
        return self.log

    # -- goal and scheduling --

    def _goal_met(self) -> bool:
        if self.mode == TaskMode.PICK:
            return not self.pending_targets
        tote_empty = not self.scene.placements[ContainerKind.TOTE]
        carrying = any(a.held is not None for a in self.arms.values())
        return tote_empty and not carrying

    def _halt_new_work(self) -> bool:
        return self.goal_time is not None or self.t >= self.cfg.max_episode_s - 1e-9

    def _schedule_all(self) -> None:
        if self.goal_time is None and self._goal_met():
            self.goal_time = self.t
        if self.goal_time is None and self.t >= self.cfg.max_episode_s - 1e-9:
            self.timeout = True
        if self._halt_new_work():
            return
        self._assign_arms()
        self._start_perceptions()

    def _marked(self, kind: ContainerKind) -> list[Task]:
        return self.planner.marked_tasks.setdefault(kind, [])

    def _assign_arms(self) -> None:
        for arm_id in self.active_arms:
            arm = self.arms[arm_id]
            if arm.task is not None:
                continue
            if self.mode == TaskMode.STOW:
                marked = self._marked(ContainerKind.TOTE)
                mine = [t for t in marked if t.arm == arm_id]
                if not mine:
                    continue
                task = mine[0]
                marked.remove(task)
                bound = bind_task(task, arm_id, arm.pos, arm.home)
                self._start_task(arm, bound)
            else:
                pools = [self._marked(k) for k in self.sources]
                candidates: list[Task] = []
                for i in range(max((len(p) for p in pools), default=0)):
                    for pool in pools:
                        if i < len(pool):
                            candidates.append(pool[i])
                if not candidates:
                    continue
                other = [a for a in self.active_arms if a != arm_id]
                other_path = self.arms[other[0]].remaining_path(self.t) if other else []
                bound = coord.assign_task(self.ws, arm_id, candidates, other_path, arm.pos, arm.home)
                if bound is None:
                    continue
                original = next(
                    t
                    for t in candidates
                    if t.item_id == bound.item_id and t.kind == bound.kind
                )
                for pool in pools:
                    if original in pool:
                        pool.remove(original)
                        break
                self._start_task(arm, bound)

    def _start_task(self, arm: _ArmRuntime, task: Task) -> None:
        arm.task = task
        arm.task_started_s = self.t
        self.planner.active_tasks[arm.arm] = task
        g = task.grasp_point
        arm.route = [(g, "pre"), (g, "grasp"), (g, "post"), (task.place_point, "place"), (arm.home, "home")]
        self._advance(arm)

    def _advance(self, arm: _ArmRuntime) -> None:
        if not arm.route:
            self._finish_task(arm)
            return
        target, role = arm.route.pop(0)
        settle = self.cfg.move_settle_s
        travel = math.dist(arm.pos, target) / self.cfg.ee_speed_mm_per_s
        arm.seg_from = arm.pos
        arm.seg_to = target
        arm.seg_settle_end = self.t + settle
        arm.seg_arrive = self.t + settle + travel
        arm.moving = True
        self._push(arm.seg_arrive, lambda: self._arrived(arm, role))

    def _arrived(self, arm: _ArmRuntime, role: str) -> None:
        arm.moving = False
        arm.pos = arm.seg_to
        task = arm.task
        assert task is not None
        if role == "pre":
            self._acquire_token(arm)
        elif role == "grasp":
            self._emit(
                ActionKind.GRASP_ATTEMPT,
                arm.arm,
                task.item_id,
                task_kind=task.kind.value,
                point=list(task.grasp_point),
                grasp=task.grasp.kind.value,
            )
            self.attempt_budget[task.source_container] = (
                self.attempt_budget.get(task.source_container, 0) + 1
            )
            self.planner.attempts_since_perception += 1
            self._push(self.t + self.cfg.grasp_dwell_s, lambda: self._advance(arm))
        elif role == "post":
            self._resolve_grasp(arm)
        elif role == "place":
            self._push(self.t + self.cfg.release_dwell_s, lambda: self._commit_place(arm))
        elif role == "drop":
            self._push(self.t + self.cfg.release_dwell_s, lambda: self._commit_drop(arm))
        elif role == "home":
            self._finish_task(arm)
        else:  # pragma: no cover
            raise AssertionError(f"unknown waypoint role {role}")

    # -- tote / bin token --

    def _acquire_token(self, arm: _ArmRuntime) -> None:
        source = arm.task.source_container
        holder = self.tokens[source]
        if holder is None:
            self.tokens[source] = arm.arm
            if arm.waiting_since is not None:
                self._emit(
                    ActionKind.IDLE,
                    arm.arm,
                    arm.task.item_id,
                    reason="scale_token",
                    started_s=arm.waiting_since,
                    duration_s=self.t - arm.waiting_since,
                )
                arm.waiting_since = None
            self._advance(arm)  # descend to the grasp point
        else:
            if arm.waiting_since is None:
                arm.waiting_since = self.t
            if arm.arm not in self.token_queue[source]:
                self.token_queue[source].append(arm.arm)

    def _release_token(self, source: ContainerKind, arm_id: int) -> None:
        if self.tokens.get(source) == arm_id:
            self.tokens[source] = None
            if self.token_queue[source]:
                nxt = self.token_queue[source].pop(0)
                self._push(self.t, lambda: self._acquire_token(self.arms[nxt]))

    # -- grasp resolution --

    def _resolve_grasp(self, arm: _ArmRuntime) -> None:
        task = arm.task
        assert task is not None
        source = task.source_container
        point = task.grasp_point
        surface = self.scene.top_item_at(source, point)
        success = self.rng.random() < self.cfg.grasp_success_rate

        if surface is None or not success:
            reason = "missed" if surface is None else "slipped"
            self._emit(ActionKind.GRASP_FAIL, arm.arm, task.item_id, reason=reason, task_kind=task.kind.value)
            self.planner.record_failure(task.item_id)
            self._release_token(source, arm.arm)
            arm.route = [(arm.home, "home")]
            self._advance(arm)
            return

        grasped = self.scene.remove(source, surface.item.id)
        measured = grasped.item.mass_g + self.rng.gauss(0.0, self.cfg.scale_noise_g)
        expected = self.scenario.item(task.item_id).mass_g
        self._emit(
            ActionKind.GRASP_SUCCESS,
            arm.arm,
            grasped.item.id,
            intended=task.item_id,
            measured_g=round(measured, 3),
            expected_g=expected,
        )
        if verify_weight(expected, measured):
            arm.held = grasped.item
            self._release_token(source, arm.arm)
            self._advance(arm)  # onwards to the place waypoint
        else:
            self._emit(
                ActionKind.WEIGHT_REJECT,
                arm.arm,
                grasped.item.id,
                intended=task.item_id,
                measured_g=round(measured, 3),
                expected_g=expected,
            )
            self.planner.record_failure(task.item_id)
            arm.held = grasped.item
            # drop it back into the source container from where we are
            arm.route = [(arm.pos, "drop"), (arm.home, "home")]
            self._advance(arm)

    def _commit_drop(self, arm: _ArmRuntime) -> None:
        task = arm.task
        assert task is not None and arm.held is not None
        source = task.source_container
        pos = self.scene.sample_position(source, arm.held, self.rng)
        self.scene.add(source, arm.held, pos)
        arm.held = None
        self._release_token(source, arm.arm)
        self._advance(arm)

    def _commit_place(self, arm: _ArmRuntime) -> None:
        task = arm.task
        assert task is not None and arm.held is not None
        item = arm.held
        arm.held = None
        duration = self.t - arm.task_started_s
        if task.kind == TaskKind.MOVE_AWAY:
            self.scene.add(task.place_container, item, task.place_point)
            self.last_seen[item.id] = (task.place_container, task.place_point)
            # the pile changed: blocked targets in this bin earn a retry, so
            # move rounds and target attempts alternate instead of looping
            for target_id in self.pending_targets:
                seen = self.last_seen.get(target_id)
                if seen is not None and seen[0] == task.place_container:
                    count = self.planner.fail_counters.get(target_id, 0)
                    if count > self.cfg.fail_cap:
                        self.planner.fail_counters[target_id] = self.cfg.fail_cap
            self._emit(
                ActionKind.MOVE_AWAY,
                arm.arm,
                item.id,
                intended=task.item_id,
                duration_s=round(duration, 6),
                started_s=round(arm.task_started_s, 6),
                waypoints=[list(p) for p in task.waypoints],
                container=task.place_container.value,
            )
        elif task.kind == TaskKind.STOW:
            self.scene.add(task.place_container, item, task.place_point)
            self._emit(
                ActionKind.PLACE,
                arm.arm,
                item.id,
                task_kind=task.kind.value,
                intended=task.item_id,
                duration_s=round(duration, 6),
                started_s=round(arm.task_started_s, 6),
                waypoints=[list(p) for p in task.waypoints],
                container=task.place_container.value,
            )
        else:
            pose = task.place_pose
            contents = self.box_contents[task.place_container]
            stale = pose is None or pose.item_id != item.id or any(poses_overlap(pose, p) for p in contents)
            if stale:
                pose = self._fallback_pose(task.place_container, item)
            self.box_contents[task.place_container].append(pose)
            self.pending_targets.discard(item.id)
            self._emit(
                ActionKind.PLACE,
                arm.arm,
                item.id,
                task_kind=task.kind.value,
                intended=task.item_id,
                duration_s=round(duration, 6),
                started_s=round(arm.task_started_s, 6),
                waypoints=[list(p) for p in task.waypoints],
                container=task.place_container.value,
                pose=[list(pose.position_mm), list(pose.oriented_dims_mm)],
            )
        self._advance(arm)

    def _fallback_pose(self, box_kind: ContainerKind, item: Item) -> PlacementPose:
        """Re-plan a single-item pose when the planned one is stale (e.g. a
        different item passed the weight check)."""
        box = self.ws.container(box_kind)
        try:
            problem = PlacementProblem(
                box_dims_mm=box.inner_dims_mm,
                placed_a=tuple(self.box_contents[box_kind]),
                pending_b=(item,),
                future_c=(),
            )
            poses, _ = plan_placement(problem)
            return poses[0]
        except (InfeasibleItemError, ValueError):
            top = max((p.top_mm for p in self.box_contents[box_kind]), default=0.0)
            return PlacementPose(item.id, (0.0, 0.0, top), 0, item.bbox_mm)

    def _finish_task(self, arm: _ArmRuntime) -> None:
        arm.task = None
        arm.route = []
        self.planner.active_tasks[arm.arm] = None

    # -- perception --

    def _container_quiet(self, kind: ContainerKind) -> bool:
        # re-perceive only when no marked task is left for the container and
        # no arm path still hovers over it; an arm that is busy placing
        # elsewhere does not block the camera
        if self._marked(kind):
            return False
        rect = self.scene.containers[kind].footprint()
        for arm in self.arms.values():
            if _path_intersects_rect(arm.remaining_path(self.t), rect):
                return False
        return True

    def _start_perceptions(self) -> None:
        if self.t < self.camera_free_at - 1e-9:
            return
        for kind in self.sources:
            if kind in self.perceiving:
                continue
            if self.barren_version.get(kind) == self.scene.version[kind]:
                continue
            if not self._container_quiet(kind):
                continue
            latency = self.cfg.perception_latency_s[self.mode]
            self.perceiving[kind] = self.t
            self.camera_free_at = self.t + latency
            self._push(self.t + latency, lambda k=kind: self._perception_done(k))
            return  # one camera: at most one job starts per scheduling pass

    def _perception_done(self, kind: ContainerKind) -> None:
        started = self.perceiving.pop(kind)
        maps, dets = render(self.scene, kind, self.cfg.map_resolution_mm)
        dets = [replace(d, fail_count=self.planner.fail_count(d.item_id)) for d in dets]
        class_names = {it.id: it.class_name for it in self.scenario.items}
        raw = build_graph(maps, dets, class_names=class_names)
        _, dag = resolve(raw)
        self.last_maps[kind] = maps
        self.last_dets[kind] = dets
        self.last_dag[kind] = dag
        self._emit(
            ActionKind.PERCEIVE,
            None,
            None,
            container=kind.value,
            started_s=round(started, 6),
            duration_s=self.cfg.perception_latency_s[self.mode],
            detections=len(dets),
        )
        if self.mode == TaskMode.STOW:
            self._deliver_stow(kind, maps, dets, dag)
        else:
            self._deliver_pick(kind, maps, dets, dag)
        if not self._marked(kind):
            self.barren_version[kind] = self.scene.version[kind]

    def _deliver_stow(self, kind: ContainerKind, maps: SceneMaps, dets: list[Detection], dag: ClutterGraph) -> None:
        self.planner.attempts_since_perception = 0
        self.attempt_budget[kind] = 0
        candidates = coord.rank_stow_detections(dets, dag)
        selected = coord.select_stow_pair(candidates, self.cfg.min_separation_mm, self.active_arms, self.rng)
        tasks = []
        for det, arm_id in selected:
            task = self._mint_stow(det, arm_id, maps)
            if task is not None:
                tasks.append(task)
        self.planner.marked_tasks[kind] = tasks

    def _deliver_pick(self, kind: ContainerKind, maps: SceneMaps, dets: list[Detection], dag: ClutterGraph) -> None:
        for det in dets:
            _, centroid = area_and_centroid(det.contour)
            self.last_seen[det.item_id] = (kind, centroid)
        detected_anywhere: set[str] = set()
        for bin_dets in self.last_dets.values():
            detected_anywhere.update(d.item_id for d in bin_dets)
        hidden = self.pending_targets - detected_anywhere
        hidden_spots = [
            self.last_seen[t][1]
            for t in sorted(hidden)
            if t in self.last_seen and self.last_seen[t][0] == kind
        ]

        def mint(det: Detection, task_kind: TaskKind) -> Optional[Task]:
            return self._mint_pick(det, task_kind, kind, maps)

        tasks = coord.generate_pick_tasks(
            dets,
            dag,
            self.pending_targets,
            self.planner.fail_counters,
            mint,
            fail_cap=self.cfg.fail_cap,
            hidden_spots=hidden_spots,
        )
        self.planner.marked_tasks[kind] = tasks

    # -- task minting --

    def _grasp_for(self, det: Detection, item: Item, maps: SceneMaps, source: Container):
        point, anchor = select_grasp_point(det.contour, item.mass_g)
        kind = choose_grasp_kind(item, self.rng)
        base = lift_to_pose(point, kind, maps, source.origin_mm, anchor)
        # attempt noise, resampled until the point stays on the item's own
        # visible mask (the planner would not suction a pixel it believes
        # belongs to a different item)
        pose = perturb_grasp(base, self.rng)
        for _ in range(10):
            px = maps.px_of((pose.point_mm[0], pose.point_mm[1]))
            if maps.in_bounds(px) and maps.label_id_at(px) == item.id:
                return lift_to_pose((pose.point_mm[0], pose.point_mm[1]), kind, maps, source.origin_mm, anchor)
            pose = perturb_grasp(base, self.rng)
        return base

    def _mint_stow(self, det: Detection, arm_id: int, maps: SceneMaps) -> Optional[Task]:
        item = self.scenario.item(det.item_id)
        source = self.ws.container(ContainerKind.TOTE)
        grasp = self._grasp_for(det, item, maps, source)
        bin_kind = self.stow_bin[arm_id]
        place_point = self.scene.sample_position(bin_kind, item, self.rng)
        return Task(
            item_id=det.item_id,
            kind=TaskKind.STOW,
            grasp=grasp,
            source_container=ContainerKind.TOTE,
            place_container=bin_kind,
            place_point=place_point,
            arm=arm_id,
        )

    def _mint_pick(
        self, det: Detection, task_kind: TaskKind, source_kind: ContainerKind, maps: SceneMaps
    ) -> Optional[Task]:
        item = self.scenario.item(det.item_id)
        source = self.ws.container(source_kind)
        grasp = self._grasp_for(det, item, maps, source)
        if task_kind == TaskKind.MOVE_AWAY:
            place_point = self._move_destination(source_kind, item)
            return Task(
                item_id=det.item_id,
                kind=task_kind,
                grasp=grasp,
                source_container=source_kind,
                place_container=source_kind,
                place_point=place_point,
            )
        box_kind = self.target_box[det.item_id]
        box = self.ws.container(box_kind)
        future = tuple(
            self.scenario.item(t)
            for t in self.scenario.order
            if t in self.pending_targets and t != det.item_id and self.target_box[t] == box_kind
        )[:2]
        pose = self._plan_box_pose(box_kind, box, item, future)
        if pose is None:
            return None
        bx0, by0, _, _ = box.footprint()
        place_point = (
            bx0 + pose.position_mm[0] + pose.oriented_dims_mm[0] / 2.0,
            by0 + pose.position_mm[1] + pose.oriented_dims_mm[1] / 2.0,
        )
        return Task(
            item_id=det.item_id,
            kind=task_kind,
            grasp=grasp,
            source_container=source_kind,
            place_container=box_kind,
            place_point=place_point,
            place_pose=pose,
        )

    def _move_destination(self, bin_kind: ContainerKind, item: Item) -> Point:
        """Spot for a moved item that keeps clear of where pending targets
        are believed to lie ("out of the way")."""
        keep_clear: list[tuple[Point, float]] = []
        for target_id in sorted(self.pending_targets):
            seen = self.last_seen.get(target_id)
            if seen is None or seen[0] != bin_kind:
                continue
            tgt = self.scenario.item(target_id)
            radius = math.hypot(tgt.bbox_mm[0], tgt.bbox_mm[1]) / 2.0
            keep_clear.append((seen[1], radius))
        own_radius = math.hypot(item.bbox_mm[0], item.bbox_mm[1]) / 2.0
        pos = self.scene.sample_position(bin_kind, item, self.rng)
        for _ in range(20):
            if all(math.dist(pos, spot) > radius + own_radius for spot, radius in keep_clear):
                break
            pos = self.scene.sample_position(bin_kind, item, self.rng)
        return pos

    def _plan_box_pose(
        self, box_kind: ContainerKind, box: Container, item: Item, future: tuple[Item, ...]
    ) -> Optional[PlacementPose]:
        placed = tuple(self.box_contents[box_kind])
        key = (
            box_kind,
            tuple((p.item_id, p.position_mm, p.oriented_dims_mm) for p in placed),
            item.id,
            tuple(it.id for it in future),
        )
        if key in self._placement_cache:
            return self._placement_cache[key]
        try:
            problem = PlacementProblem(
                box_dims_mm=box.inner_dims_mm,
                placed_a=placed,
                pending_b=(item,),
                future_c=future,
            )
            poses, _ = plan_placement(problem)
            pose = poses[0]
        except (InfeasibleItemError, ValueError) as exc:
            log.warning("placement for '%s' in %s failed: %s", item.id, box_kind.value, exc)
            pose = None
        self._placement_cache[key] = pose
        return pose


def run_episode(scenario: Scenario, cfg: SimConfig, task: Optional[TaskMode] = None) -> EpisodeLog:
    """Simulate one full episode; deterministic for a fixed config seed."""
    return _Episode(scenario, cfg, task).run()


# --- experiments ----------------------------------------------------------------


@dataclass(frozen=True)
class CellStats:
    task: TaskMode
    arms: int
    success_rate: float
    runs: int
    mean_s: float
    stddev_s: float


@dataclass
class ExperimentResult:
    rows: list[CellStats]
    episodes: dict[tuple[str, int, float, int], EpisodeLog]

    def to_csv(self) -> str:
        lines = ["task,arms,success_rate,runs,mean_s,stddev_s"]
        for r in self.rows:
            lines.append(
                f"{r.task.value},{r.arms},{r.success_rate:g},{r.runs},{r.mean_s:.3f},{r.stddev_s:.3f}"
            )
        return "\n".join(lines) + "\n"

    def cell(self, task: TaskMode, arms: int, rate: float) -> CellStats:
        for r in self.rows:
            if r.task == task and r.arms == arms and abs(r.success_rate - rate) < 1e-12:
                return r
        raise KeyError((task, arms, rate))


def run_experiment(
    scenario: Scenario,
    task: TaskMode,
    success_rates: Sequence[float],
    arm_counts: Sequence[int],
    runs_per_cell: int,
    base_cfg: Optional[SimConfig] = None,
) -> ExperimentResult:
    """Sweep grasp success rates and arm counts; runs_per_cell episodes per
    cell with seeds base_seed + run index (shared across cells, so cells are
    paired)."""
    if runs_per_cell < 1:
        raise ValueError("runs_per_cell must be >= 1")
    base = base_cfg if base_cfg is not None else SimConfig()
    rows: list[CellStats] = []
    episodes: dict[tuple[str, int, float, int], EpisodeLog] = {}
    for arms in arm_counts:
        for rate in success_rates:
            times = []
            for run in range(runs_per_cell):
                cfg = replace(base, arms=arms, grasp_success_rate=rate, seed=base.seed + run)
                episode = run_episode(scenario, cfg, task)
                episodes[(task.value, arms, rate, run)] = episode
                times.append(episode.outcome["total_time_s"])
            mean = sum(times) / len(times)
            if len(times) > 1:
                var = sum((x - mean) ** 2 for x in times) / (len(times) - 1)
                stddev = math.sqrt(var)
            else:
                stddev = 0.0
            rows.append(CellStats(task, arms, rate, runs_per_cell, mean, stddev))
    return ExperimentResult(rows=rows, episodes=episodes)
