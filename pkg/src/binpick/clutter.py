"""Occlusion ("clutter") graph: who is lying on top of whom.

Vertices are detected items; an edge A -> B with a positive evidence count
means A occludes B. The raw graph built from depth probes may contain cycles;
`resolve` removes a minimum-evidence feedback arc set to obtain a DAG.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geometry import Polygon
from .model import Detection, SceneMaps

log = logging.getLogger("binpick.clutter")

Edge = tuple[str, str]

# brute-force MFAS refuses graphs larger than this; competition-scale scenes
# stay far below it
MAX_MFAS_EDGES = 20

DEFAULT_PROBE_OFFSET_PX = 2
DEFAULT_HEIGHT_MARGIN_MM = 5.0


class ClutterGraphTooLargeError(RuntimeError):
    """Edge count beyond the exact-solver cap; scene is unexpectedly large."""


@dataclass(frozen=True)
class Vertex:
    item_id: str
    class_name: str
    confidence: float


@dataclass(frozen=True)
class ClutterGraph:
    vertices: tuple[Vertex, ...]
    edges: tuple[tuple[str, str, int], ...]  # (from, to, evidence), evidence > 0

    def __post_init__(self) -> None:
        ids = {v.item_id for v in self.vertices}
        for src, dst, evidence in self.edges:
            if evidence <= 0:
                raise ValueError(f"edge {src}->{dst} must have positive evidence")
            if src not in ids or dst not in ids:
                raise ValueError(f"edge {src}->{dst} references unknown vertex")

    def vertex_ids(self) -> set[str]:
        return {v.item_id for v in self.vertices}

    def edge_map(self) -> dict[Edge, int]:
        return {(s, d): w for s, d, w in self.edges}

    def predecessors(self) -> dict[str, list[str]]:
        pred: dict[str, list[str]] = {v.item_id: [] for v in self.vertices}
        for src, dst, _ in self.edges:
            pred[dst].append(src)
        return pred

    def successors(self) -> dict[str, list[str]]:
        succ: dict[str, list[str]] = {v.item_id: [] for v in self.vertices}
        for src, dst, _ in self.edges:
            succ[src].append(dst)
        return succ


def _sorted_graph(vertices: Iterable[Vertex], edges: Mapping[Edge, int]) -> ClutterGraph:
    vs = tuple(sorted(vertices, key=lambda v: v.item_id))
    es = tuple((s, d, int(w)) for (s, d), w in sorted(edges.items()))
    return ClutterGraph(vs, es)


def is_acyclic(g: ClutterGraph) -> bool:
    indeg = {v.item_id: 0 for v in g.vertices}
    succ = g.successors()
    for _, dst, _ in g.edges:
        indeg[dst] += 1
    ready = [v for v, d in indeg.items() if d == 0]
    seen = 0
    while ready:
        node = ready.pop()
        seen += 1
        for nxt in succ[node]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                ready.append(nxt)
    return seen == len(indeg)


# --- graph construction -------------------------------------------------------


def _walk_edge_px(a: tuple[float, float], b: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    """8-connected integer walk from a to b (inclusive), float pixel coords."""
    steps = int(max(abs(b[0] - a[0]), abs(b[1] - a[1])))
    n = steps + 1
    xs = np.round(np.linspace(a[0], b[0], n)).astype(np.int64)
    ys = np.round(np.linspace(a[1], b[1], n)).astype(np.int64)
    return xs, ys


def _contour_walk(contour: Polygon, maps: SceneMaps) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Rasterize the contour into ordered pixels with per-pixel outward
    normals (unit vectors derived from the generating polygon edge)."""
    res = maps.resolution_mm_per_px
    ox, oy = maps.origin_mm
    verts = [((x - ox) / res, (y - oy) / res) for x, y in contour.vertices]

    all_x: list[np.ndarray] = []
    all_y: list[np.ndarray] = []
    all_nx: list[np.ndarray] = []
    all_ny: list[np.ndarray] = []
    for i, a in enumerate(verts):
        b = verts[(i + 1) % len(verts)]
        xs, ys = _walk_edge_px(a, b)
        if i > 0 and len(xs) > 1:
            xs, ys = xs[1:], ys[1:]  # drop the vertex shared with the previous edge
        dx, dy = b[0] - a[0], b[1] - a[1]
        norm = float(np.hypot(dx, dy))
        if norm == 0.0:
            continue
        # CCW polygon: interior lies left of travel, so outward is the right normal
        nx, ny = dy / norm, -dx / norm
        all_x.append(xs)
        all_y.append(ys)
        all_nx.append(np.full(len(xs), nx))
        all_ny.append(np.full(len(xs), ny))
    if not all_x:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty, np.empty(0), np.empty(0)

    px = np.concatenate(all_x)
    py = np.concatenate(all_y)
    nx = np.concatenate(all_nx)
    ny = np.concatenate(all_ny)
    # the closing edge ends on the first pixel again
    if len(px) > 1 and px[-1] == px[0] and py[-1] == py[0]:
        px, py, nx, ny = px[:-1], py[:-1], nx[:-1], ny[:-1]
    return px, py, nx, ny


def build_graph(
    maps: SceneMaps,
    detections: Sequence[Detection],
    probe_offset_px: int = DEFAULT_PROBE_OFFSET_PX,
    height_margin_mm: float = DEFAULT_HEIGHT_MARGIN_MM,
    class_names: Optional[Mapping[str, str]] = None,
) -> ClutterGraph:
    """Build the raw occlusion graph from depth probes along item contours.

    For every contour pixel, the depth at the outward probe is compared with
    the depth at the mirrored inward probe. An outer pixel that belongs to a
    different item and is higher by more than height_margin_mm counts one
    evidence point for an edge from that item to the contour's item. The raw
    result may contain cycles.

    Detections whose rasterized contour leaves the map are skipped and
    reported via the module logger.
    """
    if probe_offset_px <= 0:
        raise ValueError("probe_offset_px must be positive")
    names = dict(class_names or {})
    vertices = [Vertex(d.item_id, names.get(d.item_id, d.item_id), d.confidence) for d in detections]
    edges: dict[Edge, int] = {}
    ids = list(maps.ids)
    id_index = {item: i for i, item in enumerate(ids)}

    for det in detections:
        px, py, nx, ny = _contour_walk(det.contour, maps)
        if len(px) == 0:
            continue
        if px.min() < 0 or py.min() < 0 or px.max() >= maps.width_px or py.max() >= maps.height_px:
            log.warning("detection %s: contour leaves the scene maps; skipped", det.item_id)
            continue
        ox = px + np.round(nx * probe_offset_px).astype(np.int64)
        oy = py + np.round(ny * probe_offset_px).astype(np.int64)
        ix = px - np.round(nx * probe_offset_px).astype(np.int64)
        iy = py - np.round(ny * probe_offset_px).astype(np.int64)
        valid = (
            (ox >= 0) & (ox < maps.width_px) & (oy >= 0) & (oy < maps.height_px)
            & (ix >= 0) & (ix < maps.width_px) & (iy >= 0) & (iy < maps.height_px)
        )
        if not valid.any():
            continue
        ox, oy, ix, iy = ox[valid], oy[valid], ix[valid], iy[valid]
        outer_label = maps.label[oy, ox]
        higher = maps.depth[oy, ox] > maps.depth[iy, ix] + height_margin_mm
        self_idx = id_index.get(det.item_id, -2)
        hits = (outer_label >= 0) & (outer_label != self_idx) & higher
        if not hits.any():
            continue
        labels, counts = np.unique(outer_label[hits], return_counts=True)
        for lab, count in zip(labels.tolist(), counts.tolist()):
            occluder = ids[lab]
            key = (occluder, det.item_id)
            edges[key] = edges.get(key, 0) + int(count)

    known = {v.item_id for v in vertices}
    edges = {k: w for k, w in edges.items() if k[0] in known and k[1] in known}
    return _sorted_graph(vertices, edges)


# --- simplification and cycle resolution ---------------------------------------


def simplify_two_cycles(g: ClutterGraph) -> ClutterGraph:
    """Collapse mutual edge pairs to the heavier direction with the evidence
    difference; equal evidence cancels both edges."""
    emap = g.edge_map()
    out: dict[Edge, int] = {}
    for (src, dst), w in emap.items():
        back = emap.get((dst, src))
        if back is None:
            out[(src, dst)] = w
            continue
        if w > back:
            out[(src, dst)] = w - back
        # w < back handled when visiting the reverse pair; w == back drops both
    return _sorted_graph(g.vertices, out)


def _scc_ids(g: ClutterGraph) -> dict[str, int]:
    """Tarjan strongly-connected components, iterative."""
    succ = g.successors()
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    comp: dict[str, int] = {}
    counter = [0]
    comp_counter = [0]

    for root in sorted(succ):
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    comp[member] = comp_counter[0]
                    if member == node:
                        break
                comp_counter[0] += 1
    return comp


def min_feedback_arc_set(g: ClutterGraph, max_edges: int = MAX_MFAS_EDGES) -> tuple[tuple[Edge, ...], ClutterGraph]:
    """Exact minimum-evidence feedback arc set by subset enumeration.

    Only edges inside strongly-connected components can appear in a minimal
    feedback arc set (every cycle lives within one component), so the
    brute-force enumeration is restricted to those; the cap guards that
    enumeration. Subsets are visited in order of increasing evidence sum, so
    the first acyclicity-restoring subset is globally minimal. Among
    equal-sum optima the lexicographically smallest sorted edge-id list
    wins. Input is expected to be free of two-cycles (run
    simplify_two_cycles first).
    """
    if is_acyclic(g):
        return (), g
    comp = _scc_ids(g)
    cycle_edges = [e for e in g.edges if comp[e[0]] == comp[e[1]]]
    if len(cycle_edges) > max_edges:
        raise ClutterGraphTooLargeError(
            f"{len(cycle_edges)} cycle edges exceed the exact-solver cap of {max_edges}; "
            "scene graphs this large are unexpected"
        )

    edges = sorted(cycle_edges, key=lambda e: (e[2], e[0], e[1]))
    weights = [e[2] for e in edges]
    emap = g.edge_map()

    def without(removed_idx: tuple[int, ...]) -> ClutterGraph:
        removed = {(edges[i][0], edges[i][1]) for i in removed_idx}
        kept = {k: w for k, w in emap.items() if k not in removed}
        return _sorted_graph(g.vertices, kept)

    # lazily enumerate index subsets by nondecreasing weight sum
    heap: list[tuple[int, tuple[int, ...]]] = [(weights[0], (0,))]
    best_sum: Optional[int] = None
    candidates: list[tuple[int, ...]] = []
    while heap:
        total, idxs = heapq.heappop(heap)
        if best_sum is not None and total > best_sum:
            break
        if is_acyclic(without(idxs)):
            best_sum = total
            candidates.append(idxs)
        last = idxs[-1]
        if last + 1 < len(weights):
            heapq.heappush(heap, (total + weights[last + 1], idxs + (last + 1,)))
            heapq.heappush(heap, (total - weights[last] + weights[last + 1], idxs[:-1] + (last + 1,)))

    assert candidates, "removing all edges always yields a DAG"
    keys = [tuple(sorted((edges[i][0], edges[i][1]) for i in idxs)) for idxs in candidates]
    removed = min(keys)
    return removed, without(candidates[keys.index(removed)])


def resolve(g: ClutterGraph) -> tuple[tuple[Edge, ...], ClutterGraph]:
    """Full pipeline from a raw graph to the occlusion DAG."""
    return min_feedback_arc_set(simplify_two_cycles(g))


def occluder_count(dag: ClutterGraph, item: str) -> int:
    """Number of distinct items transitively lying on top of `item`."""
    if item not in dag.vertex_ids():
        raise KeyError(f"unknown item id {item!r}")
    pred = dag.predecessors()
    seen: set[str] = set()
    stack = list(pred[item])
    while stack:
        node = stack.pop()
        if node in seen:
            continue
        seen.add(node)
        stack.extend(pred[node])
    return len(seen)


def to_dot(g: ClutterGraph, removed: Sequence[Edge] = ()) -> str:
    """dot-format rendering: vertex label "class (confidence)", edge label
    evidence; removed edges are drawn dashed."""
    removed_set = set(removed)
    lines = ["digraph clutter {"]
    for v in g.vertices:
        lines.append(f'  "{v.item_id}" [label="{v.class_name} ({v.confidence:.2f})"];')
    for src, dst, w in g.edges:
        lines.append(f'  "{src}" -> "{dst}" [label="{w}"];')
    for src, dst in sorted(removed_set):
        lines.append(f'  "{src}" -> "{dst}" [style=dashed, color=red];')
    lines.append("}")
    return "\n".join(lines) + "\n"
