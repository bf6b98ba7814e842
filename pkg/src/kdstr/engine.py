"""Greedy reduction loop.

Starting from the root of the partition tree with one complexity-1 model,
every iteration compares two moves: raising one model's complexity by one,
or moving the partition one level down the cluster tree (reusing models of
blocks that did not change, fitting complexity-1 models for the rest). The
move giving the lower objective is committed, as long as it lowers the
objective at all.

Per-model residual statistics are kept so that the objective of a candidate
move is computed from totals without reconstructing the dataset.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field
from typing import Hashable

import numpy as np

from .clustering import ClusterTree, build_cluster_tree
from .errors import ConfigError, EmptyDataset
from .geometry import AdjacencyGraph, VoronoiCell, build_adjacency, voronoi_cells
from .metrics import check_mape_defined, error, reconstruct
from .modeling import FitInput, cluster_input, fit, fitted_values, region_input
from .partitioning import PartitionLevel, PartitionTree, refine_level
from .types import (
    ERROR_METRICS,
    LINK_MODES,
    TECHNIQUES,
    Dataset,
    ModelArtifact,
    Reduction,
    Region,
    dataset_storage,
    region_storage,
    storage_ratio,
)

DEFAULT_MAX_ITERATIONS = 10_000
DEFAULT_MAX_COMPLEXITY = 32


@dataclass(frozen=True)
class ReductionConfig:
    alpha: float = 0.5
    technique: str = "plr"
    link_mode: str = "region"
    error_metric: str = "nrmse"
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    max_complexity: int = DEFAULT_MAX_COMPLEXITY
    seed: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= float(self.alpha) <= 1.0:
            raise ConfigError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.technique not in TECHNIQUES:
            raise ConfigError(f"technique must be one of {TECHNIQUES}, got {self.technique!r}")
        if self.link_mode not in LINK_MODES:
            raise ConfigError(f"link mode must be one of {LINK_MODES}, got {self.link_mode!r}")
        if self.error_metric not in ERROR_METRICS:
            raise ConfigError(f"error metric must be one of {ERROR_METRICS}, got {self.error_metric!r}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.max_complexity < 1:
            raise ConfigError("max_complexity must be >= 1")


@dataclass(frozen=True, eq=False)
class Prepared:
    """Geometry and cluster tree of a dataset, reusable across configs."""

    cells: list[VoronoiCell]
    graph: AdjacencyGraph
    tree: ClusterTree


def prepare(d: Dataset) -> Prepared:
    if d.n_instances == 0:
        raise EmptyDataset("cannot reduce an empty dataset")
    cells = voronoi_cells(d.sensor_coords)
    return Prepared(cells, build_adjacency(d, cells), build_cluster_tree(d))


def blend(alpha: float, q, e):
    """alpha * q + (1 - alpha) * e; works elementwise on arrays."""
    return alpha * q + (1.0 - alpha) * e


def objective(d: Dataset, r: Reduction) -> float:
    """The objective of ``r`` on ``d``, evaluated from scratch."""
    e = error(r.error_metric, d, reconstruct(d, r))
    return float(blend(r.alpha, storage_ratio(d, r), e))


@dataclass
class _Fitted:
    model: ModelArtifact
    sse: np.ndarray
    ape: float


@dataclass
class PartitionPlan:
    level: PartitionLevel
    removed: list[Hashable]
    reused: dict[Hashable, Hashable]  # new unit key -> current unit key
    fresh: dict[Hashable, _Fitted]
    region_cost_delta: int


@dataclass
class _LogEntry:
    iteration: int
    action: str
    h: float
    storage_ratio: float
    error: float
    n_regions: int
    detail: dict = field(default_factory=dict)


class Engine:
    """Mutable state of one reduction run."""

    def __init__(self, d: Dataset, cfg: ReductionConfig, prepared: Prepared | None = None):
        if d.n_instances == 0:
            raise EmptyDataset("cannot reduce an empty dataset")
        if cfg.error_metric == "mape":
            check_mape_defined(d)
        self.d = d
        self.cfg = cfg
        self.prepared = prepared if prepared is not None else prepare(d)
        self.ptree = PartitionTree(d, self.prepared.tree, self.prepared.cells, self.prepared.graph, cfg.seed)
        self.per_cluster = cfg.link_mode == "cluster"
        self.base = dataset_storage(d)
        self.n = d.n_instances
        rng = d.values.max(axis=0) - d.values.min(axis=0)
        self.counted = rng > 0
        self.range = np.where(self.counted, rng, 1.0)
        self._inputs: dict[tuple, FitInput] = {}
        self._fits: dict[tuple, _Fitted] = {}
        self._partition: PartitionPlan | None = None
        self._rail_warned = False

        # slot storage, one slot per live model unit
        self.slot_of: dict[Hashable, int] = {}
        self.key_of: list[Hashable] = []
        self.units: dict[Hashable, _Fitted] = {}
        cap = 64
        nf = d.n_features
        self.cur_cost = np.zeros(cap, dtype=np.int64)
        self.cur_sse = np.zeros((cap, nf))
        self.cur_ape = np.zeros(cap)
        self.cand_cost = np.zeros(cap, dtype=np.int64)
        self.cand_sse = np.zeros((cap, nf))
        self.cand_ape = np.zeros(cap)
        self.eligible = np.zeros(cap, dtype=bool)
        self.alive = np.zeros(cap, dtype=bool)
        self.order_key = np.zeros(cap)
        self.candidates: dict[Hashable, _Fitted] = {}

        self.level = self.ptree.root()
        self.region_cost = sum(region_storage(r, d.k) for r in self.level.regions)
        self._groups = self._unit_regions(self.level)
        for key, regions in self._groups.items():
            self._add_unit(key, self._fit_unit(key, regions, 1))
        self.log: list[_LogEntry] = []
        self.iterations = 0

    # ------------------------------------------------------------------ inputs

    def _region_input(self, region: Region) -> FitInput:
        key = region.block
        inp = self._inputs.get(key)
        if inp is None:
            inp = region_input(self.d, region)
            self._inputs[key] = inp
        return inp

    def _unit_regions(self, level: PartitionLevel) -> dict[Hashable, list[Region]]:
        out: dict[Hashable, list[Region]] = {}
        for reg in sorted(level.regions, key=lambda r: r.id):
            key = reg.cluster if self.per_cluster else reg.id
            out.setdefault(key, []).append(reg)
        return out

    def _fit_unit(self, key: Hashable, regions: list[Region], complexity: int) -> _Fitted:
        if self.per_cluster:
            cache_key = ("cluster", key, complexity)
        else:
            cache_key = ("region", regions[0].block, complexity)
        hit = self._fits.get(cache_key)
        if hit is not None:
            return hit
        inp = cluster_input([self._region_input(r) for r in regions])
        m = fit(self.cfg.technique, inp, complexity)
        resid = inp.responses - fitted_values(m, inp)
        ape = float(np.sum(np.abs(resid / inp.responses))) if self.cfg.error_metric == "mape" else 0.0
        out = _Fitted(m, np.sum(resid**2, axis=0), ape)
        self._fits[cache_key] = out
        return out

    # ------------------------------------------------------------------ slots

    def _grow(self) -> None:
        cap = 2 * len(self.alive)
        for name in ("cur_cost", "cur_sse", "cur_ape", "cand_cost", "cand_sse", "cand_ape", "eligible", "alive", "order_key"):
            old = getattr(self, name)
            new = np.zeros((cap,) + old.shape[1:], dtype=old.dtype)
            new[: len(old)] = old
            setattr(self, name, new)

    def _add_unit(self, key: Hashable, f: _Fitted) -> None:
        slot = len(self.key_of)
        if slot >= len(self.alive):
            self._grow()
        self.key_of.append(key)
        self.slot_of[key] = slot
        self.alive[slot] = True
        self.order_key[slot] = float(key)
        self._set_unit(key, f)

    def _set_unit(self, key: Hashable, f: _Fitted) -> None:
        slot = self.slot_of[key]
        self.units[key] = f
        self.cur_cost[slot] = f.model.coefficient_count
        self.cur_sse[slot] = f.sse
        self.cur_ape[slot] = f.ape
        self._refresh_candidate(key)

    def _remove_unit(self, key: Hashable) -> None:
        slot = self.slot_of.pop(key)
        self.alive[slot] = False
        self.eligible[slot] = False
        self.units.pop(key)
        self.candidates.pop(key, None)

    def _regions_of(self, key: Hashable) -> list[Region]:
        return self._groups[key]

    def _refresh_candidate(self, key: Hashable) -> None:
        slot = self.slot_of[key]
        m = self.units[key].model
        if m.saturated:
            self.eligible[slot] = False
            return
        if m.complexity >= self.cfg.max_complexity:
            self.eligible[slot] = False
            if not self._rail_warned:
                self._rail_warned = True
                warnings.warn(
                    f"a model reached max_complexity={self.cfg.max_complexity}; it will not be deepened further",
                    RuntimeWarning,
                    stacklevel=3,
                )
            return
        f = self._fit_unit(key, self._regions_of(key), m.complexity + 1)
        self.candidates[key] = f
        self.eligible[slot] = True
        self.cand_cost[slot] = f.model.coefficient_count
        self.cand_sse[slot] = f.sse
        self.cand_ape[slot] = f.ape

    # ------------------------------------------------------------------ objective

    def _error(self, sse: np.ndarray, ape: np.ndarray | float) -> np.ndarray:
        if self.cfg.error_metric == "mape":
            return np.asarray(ape, dtype=float) / (self.n * self.d.n_features)
        sse = np.maximum(sse, 0.0)
        per = np.sqrt(sse / self.n) / self.range
        if not self.counted.any():
            return np.zeros(per.shape[:-1])
        return per[..., self.counted].mean(axis=-1)

    def _storage(self) -> int:
        total = self.region_cost + int(self.cur_cost[self.alive].sum())
        if self.per_cluster:
            total += len(self.level.regions)
        return total

    def totals(self) -> tuple[int, np.ndarray, float]:
        a = self.alive
        return self._storage(), self.cur_sse[a].sum(axis=0), float(self.cur_ape[a].sum())

    def _h(self, storage, sse, ape):
        q = np.asarray(storage, dtype=float) / self.base
        return blend(self.cfg.alpha, q, self._error(sse, ape))

    def current(self) -> tuple[float, float, float]:
        storage, sse, ape = self.totals()
        q = storage / self.base
        e = float(self._error(sse, ape))
        return float(self._h(storage, sse, ape)), q, e

    # ------------------------------------------------------------------ candidates

    def complexity_candidate(self) -> tuple[Hashable | None, float]:
        """Best unit to deepen and the objective after deepening it."""
        idx = np.nonzero(self.eligible)[0]
        if idx.size == 0:
            return None, float("inf")
        storage, sse, ape = self.totals()
        st = storage + self.cand_cost[idx] - self.cur_cost[idx]
        ss = sse[None, :] + self.cand_sse[idx] - self.cur_sse[idx]
        ap = ape + self.cand_ape[idx] - self.cur_ape[idx]
        h = self._h(st, ss, ap)
        best = h.min()
        ties = idx[h == best]
        slot = int(ties[np.argmin(self.order_key[ties])])
        return self.key_of[slot], float(best)

    def partition_plan(self) -> PartitionPlan | None:
        """The next level with its model bookkeeping (cached until the level changes)."""
        if not self.ptree.can_split(self.level):
            return None
        if self._partition is not None and self._partition.level.k == self.level.k + 1:
            return self._partition
        nxt = self.ptree.split(self.level)
        kept, _ = refine_level(self.level, nxt)
        prev_ids = {r.id for r in self.level.regions}
        next_ids = {r.id for r in nxt.regions}
        removed_regions = prev_ids - next_ids
        cost_delta = sum(region_storage(r, self.d.k) for r in nxt.regions if r.id not in prev_ids)
        cost_delta -= sum(region_storage(r, self.d.k) for r in self.level.regions if r.id in removed_regions)
        reused: dict[Hashable, Hashable] = {}
        fresh: dict[Hashable, _Fitted] = {}
        groups = self._unit_regions(nxt)
        if self.per_cluster:
            node = self.ptree.tree.split_node(self.level.k)
            removed = [node]
            for key, regions in groups.items():
                if key in self.units:
                    reused[key] = key
                else:
                    fresh[key] = self._fit_unit(key, regions, 1)
        else:
            removed = sorted(removed_regions)
            paired = {new: old for old, new in kept}
            for key, regions in groups.items():
                if key in prev_ids:
                    reused[key] = key
                elif key in paired:
                    reused[key] = paired[key]
                else:
                    fresh[key] = self._fit_unit(key, regions, 1)
        self._partition = PartitionPlan(nxt, removed, reused, fresh, cost_delta)
        return self._partition

    def partition_candidate(self) -> tuple[PartitionLevel | None, float]:
        """The next partition level and the objective after moving to it."""
        cand = self.partition_plan()
        if cand is None:
            return None, float("inf")
        storage, sse, ape = self.totals()
        storage += cand.region_cost_delta
        if self.per_cluster:
            storage += len(cand.level.regions) - len(self.level.regions)
        moved = [k for k in cand.removed if k not in cand.reused.values()]
        for key in moved:
            slot = self.slot_of[key]
            storage -= int(self.cur_cost[slot])
            sse = sse - self.cur_sse[slot]
            ape -= float(self.cur_ape[slot])
        for f in cand.fresh.values():
            storage += f.model.coefficient_count
            sse = sse + f.sse
            ape += f.ape
        return cand.level, float(self._h(storage, sse, ape))

    # ------------------------------------------------------------------ commits

    def commit_complexity(self, key: Hashable) -> None:
        self._set_unit(key, self.candidates[key])

    def commit_partition(self) -> None:
        cand = self.partition_plan()
        assert cand is not None
        old_units = dict(self.units)
        for key in cand.removed:
            self._remove_unit(key)
        self.level = cand.level
        self._groups = self._unit_regions(self.level)
        self.region_cost += cand.region_cost_delta
        self._partition = None
        for new_key, old_key in cand.reused.items():
            if new_key != old_key:
                self._add_unit(new_key, old_units[old_key])
        for key, f in cand.fresh.items():
            self._add_unit(key, f)

    # ------------------------------------------------------------------ loop

    def run(self) -> None:
        h, q, e = self.current()
        self.log.append(_LogEntry(0, "init", h, q, e, len(self.level.regions)))
        while True:
            if self.iterations >= self.cfg.max_iterations:
                warnings.warn(
                    f"stopped after max_iterations={self.cfg.max_iterations}; returning the best reduction so far",
                    RuntimeWarning,
                    stacklevel=2,
                )
                break
            key, h1 = self.complexity_candidate()
            _, h2 = self.partition_candidate()
            if h1 < h and h1 <= h2:
                self.commit_complexity(key)
                action, detail = "complexity", {"unit": int(key), "complexity": self.units[key].model.complexity}
            elif h2 < h:
                self.commit_partition()
                action, detail = "partition", {"k": self.level.k}
            else:
                break
            self.iterations += 1
            h_new, q, e = self.current()
            self.log.append(_LogEntry(self.iterations, action, h_new, q, e, len(self.level.regions), detail))
            h = h_new

    def reduction(self) -> Reduction:
        regions = tuple(sorted(self.level.regions, key=lambda r: r.id))
        models: list[ModelArtifact] = []
        index: dict[Hashable, int] = {}
        region_model: dict[int, int] = {}
        for reg in regions:
            key = reg.cluster if self.per_cluster else reg.id
            if key not in index:
                index[key] = len(models)
                models.append(self.units[key].model)
            region_model[reg.id] = index[key]
        return Reduction(
            regions=regions,
            models=tuple(models),
            link_mode=self.cfg.link_mode,
            region_model=region_model,
            alpha=float(self.cfg.alpha),
            error_metric=self.cfg.error_metric,
            technique=self.cfg.technique,
            feature_names=self.d.feature_names,
            times=tuple(float(t) for t in self.d.times),
            spatial_dims=self.d.spatial_dims,
        )


def _finish(d: Dataset, engine: Engine, started: float) -> Reduction:
    r = engine.reduction()
    d_prime = reconstruct(d, r)
    e = error(r.error_metric, d, d_prime)
    q = storage_ratio(d, r)
    meta = {
        "iterations": engine.iterations,
        "k": engine.level.k,
        "log": [
            {"iteration": x.iteration, "action": x.action, "h": x.h, "storage_ratio": x.storage_ratio,
             "error": x.error, "regions": x.n_regions, **x.detail}
            for x in engine.log
        ],
        "wall_time": time.perf_counter() - started,
    }
    return Reduction(
        regions=r.regions,
        models=r.models,
        link_mode=r.link_mode,
        region_model=r.region_model,
        alpha=r.alpha,
        error_metric=r.error_metric,
        technique=r.technique,
        feature_names=r.feature_names,
        times=r.times,
        spatial_dims=r.spatial_dims,
        final_error=float(e),
        final_storage_ratio=float(q),
        meta=meta,
    )


def reduce(d: Dataset, cfg: ReductionConfig | None = None, prepared: Prepared | None = None) -> Reduction:
    """Reduce ``d`` to regions and models by greedy descent on the objective."""
    started = time.perf_counter()
    cfg = cfg or ReductionConfig()
    engine = Engine(d, cfg, prepared)
    engine.run()
    return _finish(d, engine, started)


def initial_engine(d: Dataset, cfg: ReductionConfig | None = None, prepared: Prepared | None = None) -> Engine:
    """An engine at the initial state (root region, complexity-1 model), not yet run."""
    return Engine(d, cfg or ReductionConfig(), prepared)


def candidate_complexity_step(engine: Engine) -> tuple[int | None, float]:
    """(unit, h1): the region (or cluster) whose deepening lowers the objective most."""
    key, h = engine.complexity_candidate()
    return (None if key is None else int(key)), h


def candidate_partition_step(engine: Engine) -> tuple[PartitionLevel | None, float]:
    """(next level, h2) for moving one level down the cluster tree."""
    return engine.partition_candidate()
