"""Reduce spatio-temporal sensor data to homogeneous regions plus small models.

Typical use::

    from kdstr import ReductionConfig, reduce, reconstruct
    from kdstr.data import footfall

    d = footfall()
    r = reduce(d, ReductionConfig(alpha=0.5, technique="plr"))
    approx = reconstruct(d, r)
"""

from __future__ import annotations

from .clustering import ClusterTree, build_cluster_tree, cut_tree
from .engine import (
    Engine,
    Prepared,
    ReductionConfig,
    candidate_complexity_step,
    candidate_partition_step,
    initial_engine,
    objective,
    prepare,
    reduce,
)
from .errors import KDSTRError
from .geometry import AdjacencyGraph, VoronoiCell, build_adjacency, discretize_time, region_outline, voronoi_cells
from .io import CsvSchema, load_csv
from .metrics import impute, mape, nrmse, reconstruct
from .modeling import FitInput, fit, fit_cluster, model_storage_cost, predict
from .partitioning import PartitionLevel, PartitionTree, grow_regions, refine_level
from .serialize import deserialize, serialize
from .types import (
    Dataset,
    Instance,
    ModelArtifact,
    Reduction,
    Region,
    dataset_storage,
    reduction_storage,
    storage_ratio,
)

__version__ = "0.1.0"

__all__ = [
    "AdjacencyGraph",
    "ClusterTree",
    "CsvSchema",
    "Dataset",
    "Engine",
    "FitInput",
    "Instance",
    "KDSTRError",
    "ModelArtifact",
    "PartitionLevel",
    "PartitionTree",
    "Prepared",
    "Reduction",
    "ReductionConfig",
    "Region",
    "VoronoiCell",
    "build_adjacency",
    "build_cluster_tree",
    "candidate_complexity_step",
    "candidate_partition_step",
    "cut_tree",
    "dataset_storage",
    "deserialize",
    "discretize_time",
    "fit",
    "fit_cluster",
    "grow_regions",
    "impute",
    "initial_engine",
    "load_csv",
    "mape",
    "model_storage_cost",
    "nrmse",
    "objective",
    "predict",
    "prepare",
    "reconstruct",
    "reduce",
    "reduction_storage",
    "refine_level",
    "region_outline",
    "serialize",
    "storage_ratio",
    "voronoi_cells",
]
