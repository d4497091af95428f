"""Shared domain types, units and scenario file handling.

Units are millimeters, grams and seconds everywhere. Arms are identified by
the integers 0 (left) and 1 (right).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .geometry import Polygon

Point = tuple[float, float]

LEFT_ARM = 0
RIGHT_ARM = 1
ARMS = (LEFT_ARM, RIGHT_ARM)

# consecutive failures on the best-ranked target before move-away tasks are
# generated instead
FAIL_COUNT_CAP = 3

DEFAULT_COLLISION_THRESHOLD_MM = 350.0


class ScenarioError(ValueError):
    """A scenario violates a structural invariant."""


class ScenarioParseError(ScenarioError):
    """Scenario text is not well-formed JSON or misses required fields."""


class TaskMode(str, Enum):
    PICK = "pick"
    STOW = "stow"


class ContainerKind(str, Enum):
    STORAGE_BIN_LEFT = "storage_bin_left"
    STORAGE_BIN_RIGHT = "storage_bin_right"
    TOTE = "tote"
    BOX_CENTER = "box_center"
    BOX_LEFT_CORNER = "box_left_corner"
    BOX_RIGHT_CORNER = "box_right_corner"


CORNER_BOXES = (ContainerKind.BOX_LEFT_CORNER, ContainerKind.BOX_RIGHT_CORNER)
STORAGE_BINS = (ContainerKind.STORAGE_BIN_LEFT, ContainerKind.STORAGE_BIN_RIGHT)
PICK_BOXES = (ContainerKind.BOX_LEFT_CORNER, ContainerKind.BOX_CENTER, ContainerKind.BOX_RIGHT_CORNER)


@dataclass(frozen=True)
class Item:
    id: str
    class_name: str
    mass_g: float
    bbox_mm: tuple[float, float, float]  # length, width, height
    suction_probability: float
    is_target: bool = False

    def __post_init__(self) -> None:
        if self.mass_g <= 0:
            raise ScenarioError(f"Item.mass_g must be > 0 (item '{self.id}' has {self.mass_g})")
        if len(self.bbox_mm) != 3 or any(d <= 0 for d in self.bbox_mm):
            raise ScenarioError(f"Item.bbox_mm must have 3 positive components (item '{self.id}')")
        if not 0.0 <= self.suction_probability <= 1.0:
            raise ScenarioError(f"Item.suction_probability must be in [0,1] (item '{self.id}')")
        object.__setattr__(self, "bbox_mm", tuple(float(d) for d in self.bbox_mm))


@dataclass(frozen=True)
class Detection:
    item_id: str
    contour: Polygon  # workspace mm, vertical projection
    confidence: float
    fail_count: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ScenarioError(f"Detection.confidence must be in [0,1] (item '{self.item_id}')")
        if self.fail_count < 0:
            raise ScenarioError(f"Detection.fail_count must be >= 0 (item '{self.item_id}')")


@dataclass(frozen=True, eq=False)
class SceneMaps:
    """Co-registered per-pixel label and top-surface height maps.

    ``label`` holds indices into ``ids`` with -1 for background; ``depth`` is
    the surface height above the container floor in mm (0 for background).
    ``origin_mm`` is the workspace position of the map's (0, 0) pixel corner.
    """

    resolution_mm_per_px: float
    width_px: int
    height_px: int
    ids: tuple[str, ...]
    label: np.ndarray  # int32 (height_px, width_px)
    depth: np.ndarray  # float64 (height_px, width_px)
    origin_mm: Point = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.resolution_mm_per_px <= 0:
            raise ScenarioError("SceneMaps.resolution_mm_per_px must be > 0")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ScenarioError("SceneMaps dimensions must be positive")
        if self.label.shape != (self.height_px, self.width_px) or self.depth.shape != self.label.shape:
            raise ScenarioError("SceneMaps.label and depth must both be (height_px, width_px)")
        if bool((self.depth[self.label >= 0] < 0).any()):
            raise ScenarioError("labeled pixels must have depth >= 0")

    def px_of(self, point: Point) -> tuple[int, int]:
        res = self.resolution_mm_per_px
        return (
            int(math.floor((point[0] - self.origin_mm[0]) / res)),
            int(math.floor((point[1] - self.origin_mm[1]) / res)),
        )

    def in_bounds(self, px: tuple[int, int]) -> bool:
        return 0 <= px[0] < self.width_px and 0 <= px[1] < self.height_px

    def label_id_at(self, px: tuple[int, int]) -> Optional[str]:
        idx = int(self.label[px[1], px[0]])
        return self.ids[idx] if idx >= 0 else None

    def depth_at(self, px: tuple[int, int]) -> float:
        return float(self.depth[px[1], px[0]])


@dataclass(frozen=True)
class Container:
    kind: ContainerKind
    origin_mm: Point  # center of the footprint
    inner_dims_mm: tuple[float, float, float]  # length (x), width (y), height
    reachable_by: frozenset[int]

    def __post_init__(self) -> None:
        if any(d <= 0 for d in self.inner_dims_mm):
            raise ScenarioError(f"Container.inner_dims_mm must be positive ({self.kind.value})")
        reach = frozenset(int(a) for a in self.reachable_by)
        if not reach or not reach <= set(ARMS):
            raise ScenarioError(f"Container.reachable_by must name existing arms ({self.kind.value})")
        if self.kind in CORNER_BOXES and len(reach) != 1:
            raise ScenarioError(f"corner boxes must be reachable by exactly one arm ({self.kind.value})")
        if self.kind not in CORNER_BOXES and len(reach) != 2:
            raise ScenarioError(f"{self.kind.value} must be reachable by both arms")
        object.__setattr__(self, "reachable_by", reach)
        object.__setattr__(self, "origin_mm", (float(self.origin_mm[0]), float(self.origin_mm[1])))
        object.__setattr__(self, "inner_dims_mm", tuple(float(d) for d in self.inner_dims_mm))

    def footprint(self) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of the inner footprint in workspace mm."""
        cx, cy = self.origin_mm
        l, w, _ = self.inner_dims_mm
        return cx - l / 2.0, cy - w / 2.0, cx + l / 2.0, cy + w / 2.0

    def contains_footprint(self, center: Point, dims: tuple[float, float]) -> bool:
        x0, y0, x1, y1 = self.footprint()
        return (
            center[0] - dims[0] / 2.0 >= x0
            and center[0] + dims[0] / 2.0 <= x1
            and center[1] - dims[1] / 2.0 >= y0
            and center[1] + dims[1] / 2.0 <= y1
        )


def _footprints_overlap(a: Container, b: Container) -> bool:
    ax0, ay0, ax1, ay1 = a.footprint()
    bx0, by0, bx1, by1 = b.footprint()
    return ax0 < bx1 and bx0 < ax1 and ay0 < by1 and by0 < ay1


@dataclass(frozen=True)
class Workspace:
    containers: tuple[Container, ...]
    arm_bases: tuple[Point, Point]
    arm_home_poses: tuple[Point, Point]
    collision_threshold_mm: float = DEFAULT_COLLISION_THRESHOLD_MM

    def __post_init__(self) -> None:
        if len(self.arm_bases) != 2 or len(self.arm_home_poses) != 2:
            raise ScenarioError("Workspace requires exactly two arms")
        if self.collision_threshold_mm <= 0:
            raise ScenarioError("Workspace.collision_threshold_mm must be > 0")
        kinds = [c.kind for c in self.containers]
        if len(set(kinds)) != len(kinds):
            raise ScenarioError("duplicate container kinds in workspace")
        for i, a in enumerate(self.containers):
            for b in self.containers[i + 1 :]:
                if _footprints_overlap(a, b):
                    raise ScenarioError(f"container footprints overlap: {a.kind.value} and {b.kind.value}")

    def container(self, kind: ContainerKind) -> Container:
        for c in self.containers:
            if c.kind == kind:
                return c
        raise KeyError(f"workspace has no container of kind {kind.value}")

    def has(self, kind: ContainerKind) -> bool:
        return any(c.kind == kind for c in self.containers)

    def corner_box_of(self, arm: int) -> Optional[Container]:
        for c in self.containers:
            if c.kind in CORNER_BOXES and c.reachable_by == frozenset({arm}):
                return c
        return None


@dataclass(frozen=True)
class Scenario:
    workspace: Workspace
    items: tuple[Item, ...]
    task: TaskMode
    order: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise ScenarioError("duplicate item ids in scenario")
        known = set(ids)
        if len(set(self.order)) != len(self.order):
            raise ScenarioError("duplicate item ids in order")
        for oid in self.order:
            if oid not in known:
                raise ScenarioError(f"order references unknown item '{oid}'")
        if self.task == TaskMode.STOW and self.order:
            raise ScenarioError("stow scenarios must not carry a pick order")
        targets = set(self.order)
        for it in self.items:
            if it.is_target != (it.id in targets):
                raise ScenarioError(f"Item.is_target inconsistent with order for '{it.id}'")

    def item(self, item_id: str) -> Item:
        for it in self.items:
            if it.id == item_id:
                return it
        raise KeyError(item_id)

    def stowable_items(self) -> tuple[Item, ...]:
        """Items handled by a stow episode: everything not reserved as a pick
        target, so a combined final-task scenario drives both experiments."""
        return tuple(it for it in self.items if not it.is_target)


# --- default workspace -------------------------------------------------------
#
# Arm bases sit at (-600, 0) and (+600, 0); the two storage bins are centered
# at (-300, 350) and (+300, 350) with the shared tote slot (tote for stowing,
# center cardboard box for picking) between them at (0, 350). One corner box
# sits next to each arm at (-650, -250) / (+650, -250) and is reachable only
# by that arm.

# bins are kept narrow so that their inner edges sit farther apart than the
# collision threshold: the arms can then work opposite bins concurrently,
# while tasks placing into the shared center slot still conflict
_BIN_DIMS = (240.0, 340.0, 250.0)
# the tote slot only needs x-clearance from the bins, so the tote runs long
# in y; stow pairs then have room to respect the separation margin
_TOTE_DIMS = (220.0, 500.0, 250.0)
_CENTER_BOX_DIMS = (220.0, 300.0, 250.0)
_CORNER_BOX_DIMS = (370.0, 260.0, 300.0)
_HOME_POSES = ((-450.0, 60.0), (450.0, 60.0))
_ARM_BASES = ((-600.0, 0.0), (600.0, 0.0))


def default_workspace(task: TaskMode) -> Workspace:
    both = frozenset(ARMS)
    containers = [
        Container(ContainerKind.STORAGE_BIN_LEFT, (-300.0, 350.0), _BIN_DIMS, both),
        Container(ContainerKind.STORAGE_BIN_RIGHT, (300.0, 350.0), _BIN_DIMS, both),
    ]
    if task == TaskMode.STOW:
        containers.append(Container(ContainerKind.TOTE, (0.0, 350.0), _TOTE_DIMS, both))
    else:
        containers.append(Container(ContainerKind.BOX_CENTER, (0.0, 350.0), _CENTER_BOX_DIMS, both))
        containers.append(
            Container(ContainerKind.BOX_LEFT_CORNER, (-650.0, -250.0), _CORNER_BOX_DIMS, frozenset({LEFT_ARM}))
        )
        containers.append(
            Container(ContainerKind.BOX_RIGHT_CORNER, (650.0, -250.0), _CORNER_BOX_DIMS, frozenset({RIGHT_ARM}))
        )
    return Workspace(tuple(containers), _ARM_BASES, _HOME_POSES)


def workspace_for_task(ws: Workspace, task: TaskMode) -> Workspace:
    """Adapt a workspace to the requested task.

    The tote and the center cardboard box occupy the same physical slot
    between the storage bins, so switching task swaps one vessel for the
    other (keeping the slot position but using the incoming vessel's
    default dimensions). Corner boxes are added from the defaults when a
    pick run needs them.
    """
    containers = {c.kind: c for c in ws.containers}
    if task == TaskMode.STOW:
        if ContainerKind.TOTE not in containers:
            center = containers.pop(ContainerKind.BOX_CENTER, None)
            if center is None:
                raise ScenarioError("workspace lacks both tote and center box; cannot stow")
            containers[ContainerKind.TOTE] = replace(
                center, kind=ContainerKind.TOTE, inner_dims_mm=_TOTE_DIMS
            )
    else:
        if ContainerKind.BOX_CENTER not in containers:
            tote = containers.pop(ContainerKind.TOTE, None)
            if tote is None:
                raise ScenarioError("workspace lacks both center box and tote; cannot pick")
            containers[ContainerKind.BOX_CENTER] = replace(
                tote, kind=ContainerKind.BOX_CENTER, inner_dims_mm=_CENTER_BOX_DIMS
            )
        defaults = default_workspace(TaskMode.PICK)
        for kind in CORNER_BOXES:
            if kind not in containers:
                containers[kind] = defaults.container(kind)
    order = [k for k in ContainerKind if k in containers]
    return replace(ws, containers=tuple(containers[k] for k in order))


# --- scenario file I/O --------------------------------------------------------
#
# UTF-8 JSON with top-level keys `workspace`, `items`, `task` and (pick only)
# `order`. Lengths are mm, masses grams.


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise ScenarioParseError(f"missing field '{key}' in {where}")
    return obj[key]


def _point(value, where: str) -> Point:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioParseError(f"{where} must be a 2-element [x, y] list")
    return float(value[0]), float(value[1])


def load_scenario(text: str) -> Scenario:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ScenarioParseError("scenario root must be a JSON object")

    task_raw = _require(raw, "task", "scenario")
    try:
        task = TaskMode(task_raw)
    except ValueError:
        raise ScenarioParseError(f"task must be 'pick' or 'stow', got {task_raw!r}") from None

    ws_raw = _require(raw, "workspace", "scenario")
    containers = []
    for i, c in enumerate(_require(ws_raw, "containers", "workspace")):
        where = f"containers[{i}]"
        try:
            kind = ContainerKind(_require(c, "kind", where))
        except ValueError:
            raise ScenarioParseError(f"unknown container kind {c.get('kind')!r} in {where}") from None
        dims = _require(c, "inner_dims_mm", where)
        if not isinstance(dims, (list, tuple)) or len(dims) != 3:
            raise ScenarioParseError(f"{where}.inner_dims_mm must be [length, width, height]")
        containers.append(
            Container(
                kind=kind,
                origin_mm=_point(_require(c, "origin_mm", where), f"{where}.origin_mm"),
                inner_dims_mm=tuple(float(d) for d in dims),
                reachable_by=frozenset(int(a) for a in _require(c, "reachable_by", where)),
            )
        )
    workspace = Workspace(
        containers=tuple(containers),
        arm_bases=tuple(_point(p, "arm_bases") for p in _require(ws_raw, "arm_bases", "workspace")),
        arm_home_poses=tuple(_point(p, "arm_home_poses") for p in _require(ws_raw, "arm_home_poses", "workspace")),
        collision_threshold_mm=float(ws_raw.get("collision_threshold_mm", DEFAULT_COLLISION_THRESHOLD_MM)),
    )

    order = tuple(str(i) for i in raw.get("order", []))
    targets = set(order)
    items = []
    for i, it in enumerate(_require(raw, "items", "scenario")):
        where = f"items[{i}]"
        bbox = _require(it, "bbox_mm", where)
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 3:
            raise ScenarioParseError(f"{where}.bbox_mm must be [length, width, height]")
        item_id = str(_require(it, "id", where))
        items.append(
            Item(
                id=item_id,
                class_name=str(_require(it, "class_name", where)),
                mass_g=float(_require(it, "mass_g", where)),
                bbox_mm=tuple(float(d) for d in bbox),
                suction_probability=float(_require(it, "suction_probability", where)),
                is_target=item_id in targets,
            )
        )

    return Scenario(workspace=workspace, items=tuple(items), task=task, order=order)


def save_scenario(scenario: Scenario) -> str:
    ws = scenario.workspace
    doc = {
        "workspace": {
            "containers": [
                {
                    "kind": c.kind.value,
                    "origin_mm": list(c.origin_mm),
                    "inner_dims_mm": list(c.inner_dims_mm),
                    "reachable_by": sorted(c.reachable_by),
                }
                for c in ws.containers
            ],
            "arm_bases": [list(p) for p in ws.arm_bases],
            "arm_home_poses": [list(p) for p in ws.arm_home_poses],
            "collision_threshold_mm": ws.collision_threshold_mm,
        },
        "items": [
            {
                "id": it.id,
                "class_name": it.class_name,
                "mass_g": it.mass_g,
                "bbox_mm": list(it.bbox_mm),
                "suction_probability": it.suction_probability,
            }
            for it in scenario.items
        ],
        "task": scenario.task.value,
    }
    if scenario.task == TaskMode.PICK:
        doc["order"] = list(scenario.order)
    return json.dumps(doc, indent=2) + "\n"


def load_scenario_file(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return load_scenario(fh.read())


def bundled_scenario_text(name: str = "arc_final.json") -> str:
    return resources.files("binpick.data").joinpath(name).read_text(encoding="utf-8")


# --- scene map file I/O -------------------------------------------------------
#
# Rendered-scene files feed the `binpick graph` command: a JSON object with
# the maps plus the detections that were extracted from them.


def scene_to_json(maps: SceneMaps, detections: Sequence[Detection], class_names: Optional[dict] = None) -> str:
    label_ids = [[(maps.ids[v] if v >= 0 else None) for v in row] for row in maps.label.tolist()]
    doc = {
        "resolution_mm_per_px": maps.resolution_mm_per_px,
        "origin_mm": list(maps.origin_mm),
        "label": label_ids,
        "depth": maps.depth.tolist(),
        "detections": [
            {
                "item_id": d.item_id,
                "contour": [list(v) for v in d.contour.vertices],
                "confidence": d.confidence,
                "fail_count": d.fail_count,
            }
            for d in detections
        ],
        "class_names": dict(class_names or {}),
    }
    return json.dumps(doc) + "\n"


def scene_from_json(text: str) -> tuple[SceneMaps, list[Detection], dict]:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioParseError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    label_rows = _require(raw, "label", "scene")
    depth_rows = _require(raw, "depth", "scene")
    ids: list[str] = []
    index: dict[str, int] = {}
    label = np.full((len(label_rows), len(label_rows[0]) if label_rows else 0), -1, dtype=np.int32)
    for y, row in enumerate(label_rows):
        for x, value in enumerate(row):
            if value is None:
                continue
            if value not in index:
                index[value] = len(ids)
                ids.append(value)
            label[y, x] = index[value]
    depth = np.asarray(depth_rows, dtype=np.float64)
    if depth.shape != label.shape:
        raise ScenarioParseError("scene label and depth grids differ in shape")
    maps = SceneMaps(
        resolution_mm_per_px=float(_require(raw, "resolution_mm_per_px", "scene")),
        width_px=label.shape[1],
        height_px=label.shape[0],
        ids=tuple(ids),
        label=label,
        depth=depth,
        origin_mm=_point(raw.get("origin_mm", [0.0, 0.0]), "scene.origin_mm"),
    )
    detections = [
        Detection(
            item_id=str(_require(d, "item_id", "detection")),
            contour=Polygon(tuple(tuple(v) for v in _require(d, "contour", "detection"))),
            confidence=float(_require(d, "confidence", "detection")),
            fail_count=int(d.get("fail_count", 0)),
        )
        for d in raw.get("detections", [])
    ]
    return maps, detections, dict(raw.get("class_names", {}))
