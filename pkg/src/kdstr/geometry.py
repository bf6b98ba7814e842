"""Space/time discretisation: timestep boundaries, clipped Voronoi cells,
the instance adjacency graph and region outlines.

Cells are computed by clipping the window against the perpendicular bisector
of every Delaunay neighbour, then snapping all vertices onto a shared
registry. Two cells are neighbours exactly when they share a directed edge
(u, v) / (v, u) of snapped vertex ids, which is also what makes outline
extraction by edge cancellation exact.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateGeometry, DisconnectedSensorSet
from .types import Dataset

WINDOW_PAD_FRACTION = 0.05
WINDOW_MIN_PAD = 1.0
SNAP_FRACTION = 1e-9


def discretize_time(times: Sequence[float]) -> np.ndarray:
    """Timestep boundaries: one timestep per distinct time, split at the
    midpoints, the outer two widened by half the (lower) median gap."""
    t = np.asarray(times, dtype=float).ravel()
    if t.size == 0:
        raise ValueError("at least one time is required")
    if t.size == 1:
        half = 0.5
    else:
        gaps = np.sort(np.diff(t))
        # lower median so that the extension is an actual observed half-gap
        half = float(gaps[(len(gaps) - 1) // 2]) / 2.0
    mids = (t[:-1] + t[1:]) / 2.0
    return np.concatenate([[t[0] - half], mids, [t[-1] + half]])


def clipping_window(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bounding box of the sensors padded by 5% of each extent (at least 1)."""
    c = np.asarray(coords, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    lo, hi = c.min(axis=0), c.max(axis=0)
    pad = np.maximum((hi - lo) * WINDOW_PAD_FRACTION, WINDOW_MIN_PAD)
    return lo - pad, hi + pad


@dataclass(frozen=True)
class VoronoiCell:
    sensor: int
    vertices: tuple[tuple[float, ...], ...]
    neighbors: frozenset[int]
    vertex_ids: tuple[int, ...] = ()


class _VertexRegistry:
    """Maps nearly-equal points onto one id (tolerance ``tol``)."""

    def __init__(self, tol: float):
        self.tol = tol
        self.points: list[tuple[float, float]] = []
        self._buckets: dict[tuple[int, int], list[int]] = defaultdict(list)

    def add(self, x: float, y: float) -> int:
        bx, by = math.floor(x / self.tol), math.floor(y / self.tol)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for vid in self._buckets.get((bx + dx, by + dy), ()):
                    px, py = self.points[vid]
                    if abs(px - x) <= self.tol and abs(py - y) <= self.tol:
                        return vid
        vid = len(self.points)
        self.points.append((x, y))
        self._buckets[(bx, by)].append(vid)
        return vid


def _clip(poly: list[np.ndarray], normal: np.ndarray, offset: float, eps: float) -> list[np.ndarray]:
    """Keep the part of a convex polygon with ``normal . x <= offset``."""
    out: list[np.ndarray] = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        fp = float(normal @ p) - offset
        fq = float(normal @ q) - offset
        if fp <= eps:
            out.append(p)
            if fq > eps:
                out.append(p + (q - p) * (fp / (fp - fq)))
        elif fq <= eps:
            out.append(p + (q - p) * (fp / (fp - fq)))
    return out


def _candidate_neighbors(pts: np.ndarray) -> list[set[int]]:
    n = len(pts)
    cand: list[set[int]] = [set() for _ in range(n)]
    if n < 2:
        return cand
    if n <= 3:
        for i in range(n):
            cand[i] = set(range(n)) - {i}
        return cand
    from scipy.spatial import Delaunay, QhullError

    try:
        tri = Delaunay(pts)
    except QhullError:
        # collinear layout: cells are parallel strips between consecutive sensors
        direction = pts[-1] - pts[0]
        order = np.argsort(pts @ direction, kind="stable")
        for a, b in zip(order[:-1], order[1:]):
            cand[a].add(int(b))
            cand[b].add(int(a))
        return cand
    indptr, indices = tri.vertex_neighbor_vertices
    for i in range(n):
        cand[i] = {int(j) for j in indices[indptr[i] : indptr[i + 1]]}
    return cand


def _cells_1d(coords: np.ndarray, window) -> list[VoronoiCell]:
    x = coords[:, 0]
    lo, hi = float(window[0][0]), float(window[1][0])
    order = np.argsort(x, kind="stable")
    cells: dict[int, VoronoiCell] = {}
    for pos, s in enumerate(order):
        left = lo if pos == 0 else (x[order[pos - 1]] + x[s]) / 2.0
        right = hi if pos == len(order) - 1 else (x[s] + x[order[pos + 1]]) / 2.0
        nb = set()
        if pos > 0:
            nb.add(int(order[pos - 1]))
        if pos < len(order) - 1:
            nb.add(int(order[pos + 1]))
        cells[int(s)] = VoronoiCell(int(s), ((float(left),), (float(right),)), frozenset(nb))
    return [cells[i] for i in range(len(x))]


def voronoi_cells(sensors: np.ndarray, window=None) -> list[VoronoiCell]:
    """One window-clipped Voronoi cell per sensor, in sensor-id order.

    Supports one and two spatial dimensions. Vertices of 2-D cells are in
    counter-clockwise order without repeating the first vertex.
    """
    coords = np.asarray(sensors, dtype=float)
    if coords.ndim == 1:
        coords = coords[:, None]
    if len(coords) == 0:
        raise DegenerateGeometry("at least one sensor is required")
    if len(np.unique(coords, axis=0)) != len(coords):
        raise DegenerateGeometry("sensor coordinates must be distinct")
    if window is None:
        window = clipping_window(coords)
    lo, hi = np.asarray(window[0], dtype=float), np.asarray(window[1], dtype=float)
    if coords.shape[1] == 1:
        return _cells_1d(coords, (lo, hi))
    if coords.shape[1] != 2:
        raise DegenerateGeometry("Voronoi cells are implemented for 1 or 2 spatial dimensions")

    diag = float(np.hypot(*(hi - lo)))
    eps = 1e-12 * diag
    reg = _VertexRegistry(SNAP_FRACTION * diag)
    rect = [np.array(p) for p in ((lo[0], lo[1]), (hi[0], lo[1]), (hi[0], hi[1]), (lo[0], hi[1]))]
    cand = _candidate_neighbors(coords)

    rings: list[list[int]] = []
    for i, p in enumerate(coords):
        poly = rect
        # nearest first keeps intermediate polygons small
        for j in sorted(cand[i], key=lambda j: float(np.sum((coords[j] - p) ** 2))):
            q = coords[j]
            normal = q - p
            offset = float(normal @ (p + q)) / 2.0
            poly = _clip(poly, normal, offset, eps)
            if len(poly) < 3:
                raise DegenerateGeometry(f"cell of sensor {i} collapsed")
        ids: list[int] = []
        for v in poly:
            vid = reg.add(float(v[0]), float(v[1]))
            if not ids or ids[-1] != vid:
                ids.append(vid)
        while len(ids) > 1 and ids[0] == ids[-1]:
            ids.pop()
        if len(ids) < 3:
            raise DegenerateGeometry(f"cell of sensor {i} collapsed")
        rings.append(ids)

    owner: dict[tuple[int, int], int] = {}
    for i, ids in enumerate(rings):
        for a, b in zip(ids, ids[1:] + ids[:1]):
            owner[(a, b)] = i
    nbrs: list[set[int]] = [set() for _ in rings]
    for (a, b), i in owner.items():
        j = owner.get((b, a))
        if j is not None and j != i:
            nbrs[i].add(j)
            nbrs[j].add(i)
    return [
        VoronoiCell(
            sensor=i,
            vertices=tuple(reg.points[v] for v in ids),
            neighbors=frozenset(nbrs[i]),
            vertex_ids=tuple(ids),
        )
        for i, ids in enumerate(rings)
    ]


def ring_area(ring: Sequence[Sequence[float]]) -> float:
    """Signed shoelace area (positive for counter-clockwise rings)."""
    if len(ring) < 3:
        return 0.0
    a = np.asarray(ring, dtype=float)
    x, y = a[:, 0], a[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def outline_extent(outline: Sequence[Sequence[float]]) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(outline, dtype=float)
    return a.min(axis=0), a.max(axis=0)


def point_in_outline(point: Sequence[float], outline: Sequence[Sequence[float]], tol: float = 1e-9) -> bool:
    """Closed membership test: points on the boundary count as inside."""
    p = np.asarray(point, dtype=float).ravel()
    if len(outline) == 2 and len(outline[0]) == 1:
        lo, hi = sorted((outline[0][0], outline[1][0]))
        return lo - tol <= p[0] <= hi + tol
    x, y = float(p[0]), float(p[1])
    inside = False
    n = len(outline)
    for i in range(n):
        x1, y1 = outline[i]
        x2, y2 = outline[(i + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        seg2 = dx * dx + dy * dy
        if seg2 > 0:
            u = max(0.0, min(1.0, ((x - x1) * dx + (y - y1) * dy) / seg2))
            if math.hypot(x - (x1 + u * dx), y - (y1 + u * dy)) <= tol:
                return True
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * dx / dy
            if xc > x:
                inside = not inside
    return inside


def _is_connected(members: set[int], cells: Sequence[VoronoiCell]) -> bool:
    start = next(iter(members))
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for nb in cells[s].neighbors:
            if nb in members and nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(members)


def _prune_collinear(pts: list[tuple[float, float]]) -> list[tuple[float, float]]:
    changed = True
    while changed and len(pts) > 3:
        changed = False
        out = []
        n = len(pts)
        for i in range(n):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
            ux, uy = b[0] - a[0], b[1] - a[1]
            vx, vy = c[0] - b[0], c[1] - b[1]
            cross = ux * vy - uy * vx
            scale = math.hypot(ux, uy) * math.hypot(vx, vy)
            if abs(cross) <= 1e-9 * scale and ux * vx + uy * vy > 0:
                changed = True
                continue
            out.append(b)
        pts = out
    return pts


def region_outline(sensor_set: Iterable[int], cells: Sequence[VoronoiCell]) -> tuple[tuple[float, ...], ...]:
    """Exterior vertex ring of the union of the member cells.

    Edges shared by two member cells cancel; the rest are chained into rings
    (taking the right-most turn at pinch vertices) and the ring of largest
    area is returned after dropping collinear vertices.
    """
    members = set(int(s) for s in sensor_set)
    if not members:
        raise DisconnectedSensorSet("empty sensor set")
    if len(members) > 1 and not _is_connected(members, cells):
        raise DisconnectedSensorSet(f"sensor set {sorted(members)} is not connected")
    first = cells[next(iter(members))]
    if len(first.vertices[0]) == 1:
        xs = [v[0] for s in members for v in cells[s].vertices]
        return ((min(xs),), (max(xs),))
    if len(members) == 1:
        return tuple(_prune_collinear(list(first.vertices)))

    coords: dict[int, tuple[float, float]] = {}
    directed: set[tuple[int, int]] = set()
    for s in members:
        ids = cells[s].vertex_ids
        for vid, v in zip(ids, cells[s].vertices):
            coords[vid] = v
        for a, b in zip(ids, ids[1:] + ids[:1]):
            directed.add((a, b))
    boundary = [(a, b) for (a, b) in directed if (b, a) not in directed]
    out_edges: dict[int, list[int]] = defaultdict(list)
    for a, b in boundary:
        out_edges[a].append(b)

    unused = set(boundary)
    rings: list[list[int]] = []
    for start_edge in sorted(boundary):
        if start_edge not in unused:
            continue
        ring = [start_edge[0]]
        unused.discard(start_edge)
        prev, cur = start_edge
        while cur != start_edge[0]:
            ring.append(cur)
            options = [b for b in out_edges[cur] if (cur, b) in unused]
            if not options:
                break
            if len(options) > 1:
                px, py = coords[prev]
                cx, cy = coords[cur]
                din = math.atan2(cy - py, cx - px)

                def turn(b: int) -> float:
                    bx, by = coords[b]
                    d = math.atan2(by - cy, bx - cx) - din
                    return (d + math.pi) % (2 * math.pi) - math.pi

                options.sort(key=turn)
            nxt = options[0]
            unused.discard((cur, nxt))
            prev, cur = cur, nxt
        rings.append(ring)
    best = max(rings, key=lambda r: abs(ring_area([coords[v] for v in r])))
    pts = [coords[v] for v in best]
    if ring_area(pts) < 0:
        pts.reverse()
    return tuple(_prune_collinear(pts))


@dataclass(frozen=True, eq=False)
class AdjacencyGraph:
    """Undirected instance graph over row indices of a :class:`Dataset`.

    ``prev``/``next`` give the temporally consecutive instance at the same
    sensor (-1 when none); ``sensor_neighbors`` is the cell adjacency.
    """

    n_nodes: int
    edges: np.ndarray
    prev: np.ndarray
    next: np.ndarray
    sensor_neighbors: tuple[tuple[int, ...], ...]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_set(self) -> set[tuple[int, int]]:
        return {(int(a), int(b)) for a, b in self.edges}


def build_adjacency(d: Dataset, cells: Sequence[VoronoiCell]) -> AdjacencyGraph:
    n = d.n_instances
    if len(cells) < d.n_sensors:
        raise DegenerateGeometry("cells must cover every sensor")
    prev = np.full(n, -1, dtype=np.int64)
    nxt = np.full(n, -1, dtype=np.int64)
    by_sensor = np.lexsort((d.timestep, d.sensor))
    same = d.sensor[by_sensor][1:] == d.sensor[by_sensor][:-1]
    a, b = by_sensor[:-1][same], by_sensor[1:][same]
    prev[b] = a
    nxt[a] = b
    temporal = np.column_stack([np.minimum(a, b), np.maximum(a, b)])

    pairs = np.array(
        sorted({(min(c.sensor, o), max(c.sensor, o)) for c in cells for o in c.neighbors}), dtype=np.int64
    ).reshape(-1, 2)
    spatial = np.empty((0, 2), dtype=np.int64)
    if len(pairs) and n:
        g = d.grid
        ga, gb = g[:, pairs[:, 0]], g[:, pairs[:, 1]]
        ok = (ga >= 0) & (gb >= 0)
        ea, eb = ga[ok], gb[ok]
        spatial = np.column_stack([np.minimum(ea, eb), np.maximum(ea, eb)])
    edges = np.concatenate([temporal, spatial]) if n else np.empty((0, 2), dtype=np.int64)
    if len(edges):
        edges = np.unique(edges, axis=0)
    for arr in (edges, prev, nxt):
        arr.setflags(write=False)
    neighbors = tuple(tuple(sorted(c.neighbors)) for c in cells)
    return AdjacencyGraph(n, edges, prev, nxt, neighbors)
