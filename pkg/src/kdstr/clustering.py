"""Hierarchical agglomerative clustering of instances in feature space.

Ward linkage, Euclidean distance on per-feature z-scores, built with the
nearest-neighbour chain algorithm in O(n^2) time and O(n |F|) memory (the
Ward distance between two clusters follows from their centroids and sizes,
so no distance matrix is kept).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import DataError, OutOfRange
from .types import Dataset

DEFAULT_MAX_INSTANCES = 200_000


@dataclass(frozen=True, eq=False)
class ClusterTree:
    """Dendrogram over ``leaf_count`` leaves.

    ``merges[i] = (child_a, child_b, height, size)`` creates node
    ``leaf_count + i`` (the scipy linkage convention). Heights are
    non-decreasing.
    """

    merges: np.ndarray
    leaf_count: int

    @property
    def root(self) -> int:
        return 2 * self.leaf_count - 2 if self.leaf_count > 1 else 0

    def children(self, node: int) -> tuple[int, int]:
        if node < self.leaf_count:
            raise ValueError(f"node {node} is a leaf")
        a, b = self.merges[node - self.leaf_count, :2]
        return int(a), int(b)

    def split_node(self, k: int) -> int:
        """Node that splits when going from ``k`` to ``k + 1`` clusters."""
        if not 1 <= k < self.leaf_count:
            raise OutOfRange(f"no split from {k} clusters with {self.leaf_count} leaves")
        return 2 * self.leaf_count - 1 - k

    @property
    def _layout(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cached = self.__dict__.get("_layout_cache")
        if cached is None:
            n = self.leaf_count
            order = np.empty(n, dtype=np.int64)
            start = np.zeros(2 * n - 1, dtype=np.int64)
            stop = np.zeros(2 * n - 1, dtype=np.int64)
            pos = 0
            stack = [self.root] if n else []
            while stack:
                node = stack.pop()
                if node >= 0:
                    if node < n:
                        order[pos] = node
                        start[node], stop[node] = pos, pos + 1
                        pos += 1
                    else:
                        start[node] = pos
                        a, b = self.children(node)
                        stack.extend([~node, b, a])
                else:
                    stop[~node] = pos
            cached = (order, start, stop)
            self.__dict__["_layout_cache"] = cached
        return cached

    def leaves(self, node: int) -> np.ndarray:
        """Leaf ids under ``node`` (ascending)."""
        order, start, stop = self._layout
        return np.sort(order[start[node] : stop[node]])

    def clusters_at(self, k: int) -> list[int]:
        """Node ids of the ``k`` clusters of the cut, sorted."""
        n = self.leaf_count
        if not 1 <= k <= n:
            raise OutOfRange(f"k={k} outside [1, {n}]")
        active = {self.root}
        for kk in range(1, k):
            node = self.split_node(kk)
            active.remove(node)
            active.update(self.children(node))
        return sorted(active)


def _zscore(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    out = np.zeros_like(x)
    ok = sd > 0
    out[:, ok] = (x[:, ok] - mu[ok]) / sd[ok]
    return out


def ward_tree(points: np.ndarray) -> ClusterTree:
    """Ward linkage over raw points (no normalisation)."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = len(x)
    if n == 0:
        raise DataError("cannot cluster zero instances")
    if n == 1:
        return ClusterTree(np.empty((0, 4)), 1)

    cent = x.copy()
    size = np.ones(n)
    active = np.ones(n, dtype=bool)
    minleaf = np.arange(n)
    raw: list[tuple[int, int, float]] = []  # (leaf rep a, leaf rep b, height)
    chain: list[int] = []
    inf = np.inf
    for _ in range(n - 1):
        if not chain:
            chain.append(int(np.argmax(active)))
        while True:
            a = chain[-1]
            diff = cent - cent[a]
            d2 = np.einsum("ij,ij->i", diff, diff) * (2.0 * size * size[a] / (size + size[a]))
            d2[~active] = inf
            d2[a] = inf
            best = float(d2.min())
            if len(chain) > 1 and d2[chain[-2]] == best:
                b = chain[-2]
                break
            b = int(np.argmax(d2 == best))
            chain.append(b)
        chain.pop()
        chain.pop()
        sa, sb = size[a], size[b]
        keep, drop = (a, b) if a < b else (b, a)
        cent[keep] = (sa * cent[a] + sb * cent[b]) / (sa + sb)
        size[keep] = sa + sb
        active[drop] = False
        raw.append((int(minleaf[a]), int(minleaf[b]), float(np.sqrt(best))))
        minleaf[keep] = min(minleaf[a], minleaf[b])

    # Replay in height order. A merge becomes available once both of its
    # children exist; ties go to the smallest (min leaf, max leaf) pair.
    deps: list[int] = []
    waiting: dict[int, list[int]] = {}
    created_by: dict[int, int] = {}
    for i, (ra, rb, _) in enumerate(raw):
        need = 0
        for r in (ra, rb):
            if r in created_by:
                need += 1
                waiting.setdefault(created_by[r], []).append(i)
        deps.append(need)
        created_by[min(ra, rb)] = i
    heap = [(raw[i][2], min(raw[i][:2]), max(raw[i][:2]), i) for i in range(len(raw)) if deps[i] == 0]
    heapq.heapify(heap)
    node_of = {leaf: leaf for leaf in range(n)}
    merges = np.empty((n - 1, 4))
    for row in range(n - 1):
        h, _, _, i = heapq.heappop(heap)
        ra, rb, _ = raw[i]
        na, nb = sorted((node_of[ra], node_of[rb]))
        sizes = [1.0 if c < n else merges[c - n, 3] for c in (na, nb)]
        # clamp float noise so heights never decrease along the sequence
        for c in (na, nb):
            if c >= n:
                h = max(h, merges[c - n, 2])
        merges[row] = (na, nb, h, sizes[0] + sizes[1])
        node_of[min(ra, rb)] = n + row
        for j in waiting.get(i, ()):
            deps[j] -= 1
            if deps[j] == 0:
                heapq.heappush(heap, (raw[j][2], min(raw[j][:2]), max(raw[j][:2]), j))
    return ClusterTree(merges, n)


def build_cluster_tree(d: Dataset, max_instances: int = DEFAULT_MAX_INSTANCES) -> ClusterTree:
    """Cluster the instances of ``d`` on their z-scored feature values only."""
    if d.n_instances > max_instances:
        raise DataError(
            f"{d.n_instances} instances exceeds the clustering cap of {max_instances}; "
            "raise the cap explicitly if the memory/time is available"
        )
    return ward_tree(_zscore(d.values))


def cut_tree(tree: ClusterTree, k: int) -> np.ndarray:
    """Per-leaf labels for ``k`` clusters; each label is the cluster's node id."""
    labels = np.empty(tree.leaf_count, dtype=np.int64)
    for node in tree.clusters_at(k):
        labels[tree.leaves(node)] = node
    return labels
