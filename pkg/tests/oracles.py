"""Independent reference implementations used to check the library.

Everything here is deliberately written from scratch (brute force, grids,
exhaustive enumeration) and kept separate from the production code paths it
verifies.
"""

from __future__ import annotations

import itertools
import math
import random

import numpy as np


# --- polygon helpers ------------------------------------------------------------


def grid_max_inscribed(vertices, spacing: float) -> float:
    """Brute-force pole-of-inaccessibility radius: evaluate the signed
    distance to the outline on a regular grid and take the maximum."""
    xs = np.array([v[0] for v in vertices])
    ys = np.array([v[1] for v in vertices])
    gx = np.arange(xs.min(), xs.max() + spacing, spacing)
    gy = np.arange(ys.min(), ys.max() + spacing, spacing)
    px, py = np.meshgrid(gx, gy)
    px = px.ravel()
    py = py.ravel()

    n = len(vertices)
    inside = np.zeros(len(px), dtype=bool)
    min_d = np.full(len(px), np.inf)
    for i in range(n):
        ax, ay = vertices[i]
        bx, by = vertices[(i + 1) % n]
        # even-odd ray cast
        cond = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xcross = (bx - ax) * (py - ay) / (by - ay) + ax
        inside ^= cond & (px < xcross)
        # exact point-to-segment distance
        dx, dy = bx - ax, by - ay
        denom = dx * dx + dy * dy
        if denom == 0:
            d = np.hypot(px - ax, py - ay)
        else:
            t = np.clip(((px - ax) * dx + (py - ay) * dy) / denom, 0.0, 1.0)
            d = np.hypot(px - (ax + t * dx), py - (ay + t * dy))
        np.minimum(min_d, d, out=min_d)

    signed = np.where(inside, min_d, -min_d)
    return float(signed.max())


def random_star_polygon(rng: random.Random, n_min=5, n_max=12, r_min=30.0, r_max=250.0):
    """Random simple polygon: star-shaped around the origin. Stratified
    angles keep every angular gap below pi, which guarantees simplicity."""
    n = rng.randint(n_min, n_max)
    angles = [2.0 * math.pi * (i + 0.8 * rng.random()) / n for i in range(n)]
    radii = [rng.uniform(r_min, r_max) for _ in range(n)]
    return tuple((r * math.cos(a), r * math.sin(a)) for a, r in zip(angles, radii))


def sampled_polyline_min_distance(a, b, samples_per_segment: int = 10_000) -> float:
    """Min distance between polylines: dense samples on one polyline against
    exact point-to-segment distances on the other, both ways."""

    def seg_points(path):
        if len(path) == 1:
            return np.array([path[0]], dtype=float)
        pts = []
        for p, q in zip(path, path[1:]):
            t = np.linspace(0.0, 1.0, samples_per_segment)
            pts.append(np.column_stack([p[0] + (q[0] - p[0]) * t, p[1] + (q[1] - p[1]) * t]))
        return np.concatenate(pts)

    def min_point_to_path(points, path):
        best = np.full(len(points), np.inf)
        segs = list(zip(path, path[1:])) or [(path[0], path[0])]
        for (ax, ay), (bx, by) in segs:
            dx, dy = bx - ax, by - ay
            denom = dx * dx + dy * dy
            if denom == 0:
                d = np.hypot(points[:, 0] - ax, points[:, 1] - ay)
            else:
                t = np.clip(((points[:, 0] - ax) * dx + (points[:, 1] - ay) * dy) / denom, 0.0, 1.0)
                d = np.hypot(points[:, 0] - (ax + t * dx), points[:, 1] - (ay + t * dy))
            np.minimum(best, d, out=best)
        return float(best.min())

    return min(min_point_to_path(seg_points(a), b), min_point_to_path(seg_points(b), a))


# --- clutter graph ---------------------------------------------------------------


def exhaustive_min_fas(edges: dict) -> int:
    """Minimum evidence sum over all edge subsets whose removal leaves the
    graph acyclic. `edges` maps (src, dst) -> weight."""

    def acyclic(kept) -> bool:
        nodes = {v for e in edges for v in e}
        succ = {v: [] for v in nodes}
        indeg = {v: 0 for v in nodes}
        for (s, d) in kept:
            succ[s].append(d)
            indeg[d] += 1
        ready = [v for v, deg in indeg.items() if deg == 0]
        seen = 0
        while ready:
            v = ready.pop()
            seen += 1
            for nxt in succ[v]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    ready.append(nxt)
        return seen == len(nodes)

    keys = list(edges)
    best = sum(edges.values())
    for r in range(len(keys) + 1):
        for subset in itertools.combinations(keys, r):
            total = sum(edges[e] for e in subset)
            if total >= best:
                continue
            if acyclic([e for e in keys if e not in subset]):
                best = total
    return best


def reference_contour_walk(vertices_mm, origin_mm, resolution):
    """Hand-written contour rasterizer: ordered, 8-connected, deduplicated
    pixel walk with per-pixel outward edge normals (CCW polygon)."""
    verts = [((x - origin_mm[0]) / resolution, (y - origin_mm[1]) / resolution) for x, y in vertices_mm]
    pixels = []
    normals = []
    for i, a in enumerate(verts):
        b = verts[(i + 1) % len(verts)]
        steps = int(max(abs(b[0] - a[0]), abs(b[1] - a[1])))
        dx, dy = b[0] - a[0], b[1] - a[1]
        norm = math.hypot(dx, dy)
        if norm == 0:
            continue
        nx, ny = dy / norm, -dx / norm
        for k in range(steps + 1):
            f = k / steps if steps else 0.0
            px = round(a[0] + dx * f)
            py = round(a[1] + dy * f)
            if i > 0 and k == 0 and pixels and pixels[-1] == (px, py):
                continue
            pixels.append((px, py))
            normals.append((nx, ny))
    if len(pixels) > 1 and pixels[0] == pixels[-1]:
        pixels.pop()
        normals.pop()
    return pixels, normals


def reference_edge_evidence(maps, detection_item, vertices_mm, probe_offset, margin):
    """Evidence counts per occluder for one contour, by the reference walk."""
    pixels, normals = reference_contour_walk(vertices_mm, maps.origin_mm, maps.resolution_mm_per_px)
    counts: dict[str, int] = {}
    for (px, py), (nx, ny) in zip(pixels, normals):
        ox = px + round(nx * probe_offset)
        oy = py + round(ny * probe_offset)
        ix = px - round(nx * probe_offset)
        iy = py - round(ny * probe_offset)
        if not (0 <= ox < maps.width_px and 0 <= oy < maps.height_px):
            continue
        if not (0 <= ix < maps.width_px and 0 <= iy < maps.height_px):
            continue
        outer = maps.label_id_at((ox, oy))
        if outer is None or outer == detection_item:
            continue
        if maps.depth[oy, ox] > maps.depth[iy, ix] + margin:
            counts[outer] = counts.get(outer, 0) + 1
    return counts


# --- placement -------------------------------------------------------------------


def grid_placement_oracle(box_dims, placed_a, items_b, items_c, orientations, grid_mm=10.0):
    """Position-complete stacking oracle on a regular grid.

    Searches every order (B permutations before C permutations), every
    orientation candidate from `orientations(item)` and every grid position,
    with the same rest-on-max-overlap gravity rule. Returns the minimum over
    arrangements of the overall top height. Branches are visited greedily
    (flat orientations, low rest heights first) and pruned once they cannot
    beat the incumbent, which is exact for the height objective.
    """
    box_l, box_w, _ = box_dims
    best = [math.inf]
    pos_cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}

    def positions_for(l, w):
        key = (l, w)
        if key not in pos_cache:
            xs = np.arange(0.0, box_l - l + 1e-9, grid_mm)
            ys = np.arange(0.0, box_w - w + 1e-9, grid_mm)
            px, py = np.meshgrid(xs, ys)
            pos_cache[key] = (px.ravel(), py.ravel())
        return pos_cache[key]

    def rest_heights(l, w, placed):
        """Vectorized rest height for every grid position of an l x w box."""
        px, py = positions_for(l, w)
        z = np.zeros(len(px))
        for (qx, qy, qz, ql, qw, qh) in placed:
            overlap = (px < qx + ql - 1e-9) & (qx < px + l - 1e-9) & (py < qy + qw - 1e-9) & (qy < py + w - 1e-9)
            np.maximum(z, np.where(overlap, qz + qh, 0.0), out=z)
        return px, py, z

    def fitting(item):
        return sorted(
            ((l, w, h) for (l, w, h) in orientations(item) if l <= box_l + 1e-9 and w <= box_w + 1e-9),
            key=lambda d: d[2],
        )

    def min_possible_top(item, placed):
        # rest heights only grow as more boxes are added, so the current
        # minimum over grid spots lower-bounds the item's final top
        lowest = math.inf
        for (l, w, h) in fitting(item):
            _, _, z = rest_heights(l, w, placed)
            if len(z):
                lowest = min(lowest, float(z.min()) + h)
        return lowest

    def never_side_by_side(r1, r2):
        # no orientation pair lets the two share a z level
        for (l1, w1, _) in fitting(r1):
            for (l2, w2, _) in fitting(r2):
                if l1 + l2 <= box_l + 1e-9 or w1 + w2 <= box_w + 1e-9:
                    return False
        return True

    def min_possible_z(item, placed):
        lowest = math.inf
        for (l, w, _) in fitting(item):
            _, _, z = rest_heights(l, w, placed)
            if len(z):
                lowest = min(lowest, float(z.min()))
        return lowest

    def chain_bound(order, placed):
        # all-pairwise-exclusive remaining items must stack as one serial
        # tower whose base cannot be lower than the best spot available now
        if len(order) < 2:
            return 0.0
        for a, b in itertools.combinations(order, 2):
            if not never_side_by_side(a, b):
                return 0.0
        base = min(min_possible_z(item, placed) for item in order)
        return base + sum(min(h for (_, _, h) in fitting(item)) for item in order)

    def search(order, placed, height):
        if height >= best[0]:
            return
        if not order:
            best[0] = height
            return
        if max(height, chain_bound(order, placed)) >= best[0]:
            return
        for item in order:
            if max(height, min_possible_top(item, placed)) >= best[0]:
                return
        item = order[0]
        for (l, w, h) in fitting(item):
            px, py, z = rest_heights(l, w, placed)
            usable = np.nonzero(np.maximum(height, z + h) < best[0])[0]
            order_idx = usable[np.argsort(z[usable], kind="stable")]
            for i in order_idx:
                zi = float(z[i])
                if max(height, zi + h) >= best[0]:
                    continue
                placed.append((float(px[i]), float(py[i]), zi, l, w, h))
                search(order[1:], placed, max(height, zi + h))
                placed.pop()

    base = [(p[0], p[1], p[2], p[3], p[4], p[5]) for p in placed_a]
    base_height = max((p[2] + p[5] for p in base), default=0.0)
    for perm_b in itertools.permutations(items_b):
        for perm_c in itertools.permutations(items_c):
            search(list(perm_b) + list(perm_c), list(base), base_height)
    return best[0]
