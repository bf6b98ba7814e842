"""Homogeneous spatio-temporal regions from a cluster-tree cut.

A region is grown from a seed instance as a block: whole sensor columns are
added spatially (over the current interval) and whole rows temporally (over
the current sensor set), alternating one neighbour ring and one timestep each
way per round. Absent instances never block growth. A sensor with no
instance in the current interval is retried once the interval grows, so it
only joins when it has something to cover; timesteps with no instance at any
member are trimmed from both ends.

A failed column or row stays failed for the rest of the region's growth: the
interval and sensor set only grow, so the offending instance stays inside the
tested range. That is what bounds the work to two examinations per adjacency
edge.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .clustering import ClusterTree
from .errors import LevelMismatch
from .geometry import AdjacencyGraph, VoronoiCell, region_outline
from .types import Dataset, Region

Block = tuple[tuple[int, ...], int, int]


@dataclass(frozen=True, eq=False)
class PartitionLevel:
    k: int
    clusters: tuple[int, ...]
    regions: tuple[Region, ...]
    instance_region: np.ndarray
    next_id: int = 0

    def region_map(self) -> dict[int, Region]:
        return {r.id: r for r in self.regions}

    def blocks(self) -> dict[Block, int]:
        return {r.block: r.id for r in self.regions}


@dataclass
class _Grown:
    sensors: tuple[int, ...]
    t_begin: int
    t_end: int
    cluster: int
    seed: int
    rows: np.ndarray


def _edge(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _grow_blocks(
    d: Dataset,
    labels: np.ndarray,
    graph: AdjacencyGraph,
    seeds: Iterable[int],
    assigned: np.ndarray,
    counter: Counter | None = None,
) -> list[_Grown]:
    grid = d.grid
    ts = d.timestep
    n_times = d.n_times
    neighbors = graph.sensor_neighbors
    prev, nxt = graph.prev, graph.next
    out: list[_Grown] = []

    for seed in seeds:
        seed = int(seed)
        if assigned[seed]:
            continue
        c = labels[seed]
        tb = te = int(ts[seed])
        s0 = int(d.sensor[seed])
        members = [s0]
        mset = {s0}
        blocked: set[int] = set()
        deferred: set[int] = set()  # no instances over the current span yet
        pending = set(neighbors[s0])
        back_open = fwd_open = True

        def column_ok(s2: int) -> bool | None:
            """True/False for a column with instances over [tb, te]; None when it has none."""
            col = grid[tb : te + 1, s2]
            if not (col >= 0).any():
                return None
            if counter is None:
                idx = col[col >= 0]
                return bool(np.all(labels[idx] == c) and not assigned[idx].any())
            nb_members = [m for m in sorted(mset) if m in neighbors[s2]]
            for off, idx in enumerate(col):
                if idx < 0:
                    continue
                t = tb + off
                for m in nb_members:
                    j = grid[t, m]
                    if j >= 0:
                        counter[_edge(int(j), int(idx))] += 1
                        break
                if labels[idx] != c or assigned[idx]:
                    return False
            return True

        def row_ok(t: int, forward: bool) -> bool:
            row = grid[t, members]
            if counter is None:
                idx = row[row >= 0]
                return bool(np.all(labels[idx] == c) and not assigned[idx].any())
            for m in sorted(mset):
                idx = grid[t, m]
                if idx < 0:
                    continue
                other = prev[idx] if forward else nxt[idx]
                if other >= 0 and tb <= ts[other] <= te:
                    counter[_edge(int(other), int(idx))] += 1
                if labels[idx] != c or assigned[idx]:
                    return False
            return True

        while True:
            changed = False
            for s2 in sorted(pending):
                pending.discard(s2)
                ok = column_ok(s2)
                if ok is None:
                    deferred.add(s2)
                elif ok:
                    deferred.discard(s2)
                    members.append(s2)
                    mset.add(s2)
                    pending.update(nb for nb in neighbors[s2] if nb not in mset and nb not in blocked)
                    changed = True
                else:
                    deferred.discard(s2)
                    blocked.add(s2)
            pending -= mset
            span = (tb, te)
            if back_open:
                if tb > 0 and row_ok(tb - 1, forward=False):
                    tb -= 1
                    changed = True
                else:
                    back_open = False
            if fwd_open:
                if te < n_times - 1 and row_ok(te + 1, forward=True):
                    te += 1
                    changed = True
                else:
                    fwd_open = False
            if (tb, te) != span:
                pending |= deferred
            if not changed:
                break

        # rows with no instance at any member are wildcards inside the block only
        present = (grid[tb : te + 1, members] >= 0).any(axis=1)
        first, last = int(np.argmax(present)), len(present) - 1 - int(np.argmax(present[::-1]))
        tb, te = tb + first, tb + last
        block = grid[tb : te + 1, members]
        rows = block[block >= 0]
        assigned[rows] = True
        out.append(_Grown(tuple(sorted(members)), tb, te, int(c), seed, rows))
    return out


def _seed_order(rows: np.ndarray, rng: np.random.Generator | None) -> np.ndarray:
    rows = np.sort(np.asarray(rows, dtype=np.int64))
    if rng is not None:
        rows = rng.permutation(rows)
    return rows


class _OutlineCache:
    def __init__(self, cells: Sequence[VoronoiCell]):
        self.cells = cells
        self._cache: dict[tuple[int, ...], tuple] = {}

    def __call__(self, sensors: tuple[int, ...]) -> tuple:
        out = self._cache.get(sensors)
        if out is None:
            out = region_outline(sensors, self.cells)
            self._cache[sensors] = out
        return out


def grow_regions(
    d: Dataset,
    labels: np.ndarray,
    graph: AdjacencyGraph,
    cells: Sequence[VoronoiCell],
    counter: Counter | None = None,
    seed: int | None = None,
) -> PartitionLevel:
    """Cover every instance with homogeneous block regions.

    Seeds are taken in canonical order (smallest (timestep, sensor) first)
    unless ``seed`` is given, which shuffles them reproducibly. Pass a
    ``Counter`` to record how often each adjacency edge is examined.
    """
    labels = np.asarray(labels)
    assigned = np.zeros(d.n_instances, dtype=bool)
    rng = None if seed is None else np.random.default_rng(seed)
    grown = _grow_blocks(d, labels, graph, _seed_order(np.arange(d.n_instances), rng), assigned, counter)
    outline = _OutlineCache(cells)
    inst = np.full(d.n_instances, -1, dtype=np.int64)
    regions = []
    for rid, g in enumerate(grown):
        regions.append(Region(rid, g.sensors, g.t_begin, g.t_end, outline(g.sensors), g.cluster))
        inst[g.rows] = rid
    inst.setflags(write=False)
    clusters = tuple(sorted(int(x) for x in np.unique(labels)))
    return PartitionLevel(len(clusters), clusters, tuple(regions), inst, len(regions))


def refine_level(prev: PartitionLevel, next_: PartitionLevel) -> tuple[list[tuple[int, int]], list[int]]:
    """Pair regions of ``next_`` whose block is identical to one in ``prev``.

    Returns ``(kept, new)``: ``kept`` holds ``(prev_id, next_id)`` pairs,
    ``new`` the ids of ``next_`` regions with no counterpart.
    """
    if next_.k != prev.k + 1:
        raise LevelMismatch(f"expected a level with k={prev.k + 1}, got k={next_.k}")
    old = prev.blocks()
    kept, new = [], []
    for r in sorted(next_.regions, key=lambda r: r.id):
        if r.block in old:
            kept.append((old[r.block], r.id))
        else:
            new.append(r.id)
    return kept, new


class PartitionTree:
    """Levels of the partition tree with region ids that persist across levels.

    A region keeps its id while its cluster is not split. When a cluster
    splits, the regions grown for its two children get fresh ids: first the
    ones whose block equals a replaced region (in the replaced region's id
    order), then the rest ordered by child cluster (lexicographic mean
    feature vector) and seed.
    """

    def __init__(
        self,
        d: Dataset,
        tree: ClusterTree,
        cells: Sequence[VoronoiCell],
        graph: AdjacencyGraph,
        seed: int | None = None,
    ):
        self.d = d
        self.tree = tree
        self.cells = cells
        self.graph = graph
        self.seed = seed
        self.outline = _OutlineCache(cells)

    def _rng(self, node: int) -> np.random.Generator | None:
        return None if self.seed is None else np.random.default_rng([self.seed, node])

    def _grow_cluster_pair(self, nodes: Sequence[int], labels: np.ndarray) -> list[_Grown]:
        out = []
        for node in nodes:
            rows = self.tree.leaves(node)
            assigned = np.zeros(self.d.n_instances, dtype=bool)
            out.extend(_grow_blocks(self.d, labels, self.graph, _seed_order(rows, self._rng(node)), assigned))
        return out

    def root(self) -> PartitionLevel:
        node = self.tree.root
        labels = np.full(self.d.n_instances, node, dtype=np.int64)
        grown = self._grow_cluster_pair([node], labels)
        inst = np.full(self.d.n_instances, -1, dtype=np.int64)
        regions = []
        for rid, g in enumerate(grown):
            regions.append(Region(rid, g.sensors, g.t_begin, g.t_end, self.outline(g.sensors), g.cluster))
            inst[g.rows] = rid
        inst.setflags(write=False)
        return PartitionLevel(1, (node,), tuple(regions), inst, len(regions))

    def labels(self, level: PartitionLevel) -> np.ndarray:
        """Per-instance cluster node at ``level`` (read off the region map)."""
        cluster_of = np.full(level.next_id, -1, dtype=np.int64)
        for r in level.regions:
            cluster_of[r.id] = r.cluster
        return cluster_of[level.instance_region]

    def can_split(self, level: PartitionLevel) -> bool:
        return level.k < self.tree.leaf_count

    def split(self, level: PartitionLevel) -> PartitionLevel:
        """The level with one more cluster."""
        node = self.tree.split_node(level.k)
        a, b = self.tree.children(node)
        labels = np.full(self.d.n_instances, -1, dtype=np.int64)
        labels[self.tree.leaves(a)] = a
        labels[self.tree.leaves(b)] = b
        grown = self._grow_cluster_pair([a, b], labels)

        replaced = sorted((r for r in level.regions if r.cluster == node), key=lambda r: r.id)
        old_block = {r.block: r.id for r in replaced}
        means = {c: tuple(self.d.values[self.tree.leaves(c)].mean(axis=0)) for c in (a, b)}
        matched = sorted(
            (g for g in grown if (g.sensors, g.t_begin, g.t_end) in old_block),
            key=lambda g: old_block[(g.sensors, g.t_begin, g.t_end)],
        )
        fresh = sorted(
            (g for g in grown if (g.sensors, g.t_begin, g.t_end) not in old_block),
            key=lambda g: (means[g.cluster], g.cluster, g.seed),
        )
        next_id = level.next_id
        inst = level.instance_region.copy()
        new_regions = []
        for g in matched + fresh:
            new_regions.append(Region(next_id, g.sensors, g.t_begin, g.t_end, self.outline(g.sensors), g.cluster))
            inst[g.rows] = next_id
            next_id += 1
        inst.setflags(write=False)
        kept = [r for r in level.regions if r.cluster != node]
        clusters = tuple(sorted((set(level.clusters) - {node}) | {a, b}))
        regions = tuple(sorted(kept + new_regions, key=lambda r: r.id))
        return PartitionLevel(level.k + 1, clusters, regions, inst, next_id)

    def levels(self, k_max: int) -> Iterator[PartitionLevel]:
        level = self.root()
        yield level
        while level.k < k_max and self.can_split(level):
            level = self.split(level)
            yield level
