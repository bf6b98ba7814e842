"""Shared domain vocabulary and storage-unit accounting.

Storage is counted in abstract units: one stored scalar is one unit. Nothing
in this package ever counts bytes except the lossless baseline in
:mod:`kdstr.bench`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DataError, DuplicateInstance, EmptyDataset, MissingOutline, NonFiniteValue

TECHNIQUES = ("plr", "dct", "dtr")
LINK_MODES = ("region", "cluster")
ERROR_METRICS = ("nrmse", "mape")


class Instance(NamedTuple):
    timestep: int
    sensor: int
    values: tuple[float, ...]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of instances indexed by (timestep, sensor).

    Rows are held in canonical order: ascending timestep, then sensor id.
    Sensor ids are row indices into ``sensor_coords``; ``times`` holds the
    distinct raw timestamps, so a timestep is an index into it.
    """

    sensor_coords: np.ndarray
    times: np.ndarray
    feature_names: tuple[str, ...]
    timestep: np.ndarray
    sensor: np.ndarray
    values: np.ndarray
    sensor_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        coords = np.asarray(self.sensor_coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        times = np.asarray(self.times, dtype=float).ravel()
        ts = np.asarray(self.timestep, dtype=np.int64).ravel()
        ss = np.asarray(self.sensor, dtype=np.int64).ravel()
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        n = len(ts)
        if len(ss) != n or vals.shape[0] != n:
            raise DataError("timestep, sensor and values must have equal length")
        if vals.shape[1] != len(self.feature_names):
            raise DataError(
                f"values have {vals.shape[1]} columns but {len(self.feature_names)} feature names"
            )
        if len(self.feature_names) < 1:
            raise DataError("at least one feature is required")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise DataError("times must be strictly increasing")
        if not np.all(np.isfinite(vals)):
            raise NonFiniteValue("feature values must be finite")
        if not np.all(np.isfinite(coords)) or not np.all(np.isfinite(times)):
            raise NonFiniteValue("coordinates and times must be finite")
        if n:
            if ts.min() < 0 or ts.max() >= len(times):
                raise DataError("timestep index out of range")
            if ss.min() < 0 or ss.max() >= len(coords):
                raise DataError("sensor id out of range")
        if len(coords) > 1 and len(np.unique(coords, axis=0)) != len(coords):
            raise DataError("sensor coordinates must be pairwise distinct")
        order = np.lexsort((ss, ts))
        ts, ss, vals = ts[order], ss[order], vals[order]
        if n > 1:
            same = (np.diff(ts) == 0) & (np.diff(ss) == 0)
            if same.any():
                i = int(np.argmax(same))
                raise DuplicateInstance(f"two instances at timestep {ts[i]}, sensor {ss[i]}")
        if self.sensor_names is not None and len(self.sensor_names) != len(coords):
            raise DataError("one sensor name per sensor is required")
        set_ = object.__setattr__
        set_(self, "sensor_coords", _frozen(coords))
        set_(self, "times", _frozen(times))
        set_(self, "timestep", _frozen(ts))
        set_(self, "sensor", _frozen(ss))
        set_(self, "values", _frozen(vals))
        set_(self, "feature_names", tuple(self.feature_names))
        if self.sensor_names is not None:
            set_(self, "sensor_names", tuple(self.sensor_names))

    @classmethod
    def from_instances(
        cls,
        instances: Sequence[Instance],
        sensor_coords: Sequence[Sequence[float]],
        times: Sequence[float],
        feature_names: Sequence[str],
        sensor_names: Sequence[str] | None = None,
    ) -> "Dataset":
        n_feat = len(feature_names)
        vals = np.array([list(i.values) for i in instances], dtype=float).reshape(len(instances), n_feat)
        return cls(
            sensor_coords=np.asarray(sensor_coords, dtype=float),
            times=np.asarray(times, dtype=float),
            feature_names=tuple(feature_names),
            timestep=np.array([i.timestep for i in instances], dtype=np.int64),
            sensor=np.array([i.sensor for i in instances], dtype=np.int64),
            values=vals,
            sensor_names=None if sensor_names is None else tuple(sensor_names),
        )

    @property
    def n_instances(self) -> int:
        return len(self.timestep)

    def __len__(self) -> int:
        return self.n_instances

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    @property
    def spatial_dims(self) -> int:
        return self.sensor_coords.shape[1]

    @property
    def k(self) -> int:
        return 1 + self.spatial_dims

    @property
    def n_sensors(self) -> int:
        return len(self.sensor_coords)

    @property
    def n_times(self) -> int:
        return len(self.times)

    @cached_property
    def grid(self) -> np.ndarray:
        """``grid[t, s]`` is the row index of instance (t, s), or -1 if absent."""
        g = np.full((self.n_times, self.n_sensors), -1, dtype=np.int64)
        g[self.timestep, self.sensor] = np.arange(self.n_instances)
        g.setflags(write=False)
        return g

    @cached_property
    def predictors(self) -> np.ndarray:
        """Per-instance (raw time, coordinates...) rows, length k."""
        p = np.column_stack([self.times[self.timestep], self.sensor_coords[self.sensor]])
        p.setflags(write=False)
        return p

    def index_of(self, timestep: int, sensor: int) -> int:
        idx = int(self.grid[timestep, sensor])
        if idx < 0:
            raise KeyError((timestep, sensor))
        return idx

    def instances(self) -> Iterator[Instance]:
        for t, s, v in zip(self.timestep, self.sensor, self.values):
            yield Instance(int(t), int(s), tuple(float(x) for x in v))

    def with_values(self, values: np.ndarray) -> "Dataset":
        """Same keys and geometry, new feature values."""
        return Dataset(
            sensor_coords=self.sensor_coords,
            times=self.times,
            feature_names=self.feature_names,
            timestep=self.timestep,
            sensor=self.sensor,
            values=values,
            sensor_names=self.sensor_names,
        )

    def same_keys(self, other: "Dataset") -> bool:
        return (
            self.n_instances == other.n_instances
            and np.array_equal(self.timestep, other.timestep)
            and np.array_equal(self.sensor, other.sensor)
            and self.n_features == other.n_features
        )


@dataclass(frozen=True)
class Region:
    """A block of instances: sensor set x closed timestep interval."""

    id: int
    sensors: tuple[int, ...]
    t_begin: int
    t_end: int
    outline: tuple[tuple[float, ...], ...]
    cluster: int

    def __post_init__(self) -> None:
        if self.t_begin > self.t_end:
            raise DataError(f"region {self.id}: t_begin > t_end")
        object.__setattr__(self, "sensors", tuple(sorted(int(s) for s in self.sensors)))

    @property
    def block(self) -> tuple[tuple[int, ...], int, int]:
        return (self.sensors, self.t_begin, self.t_end)

    @property
    def n_vertices(self) -> int:
        return len(self.outline)


@dataclass(frozen=True)
class ModelArtifact:
    """A fitted model and its logical size.

    ``domain`` holds the predictor box used for standardisation. It is
    derivable from the linked regions' bounds, so it is never charged.
    """

    technique: str
    complexity: int
    payload: Any
    coefficient_count: int
    domain: tuple[tuple[float, ...], tuple[float, ...]] = ((), ())
    saturated: bool = False

    def __post_init__(self) -> None:
        if self.technique not in TECHNIQUES:
            raise DataError(f"unknown technique {self.technique!r}")
        if self.complexity < 1:
            raise DataError("complexity must be >= 1")


@dataclass(frozen=True)
class Reduction:
    """The pair (regions, models) plus the bookkeeping needed to query it."""

    regions: tuple[Region, ...]
    models: tuple[ModelArtifact, ...]
    link_mode: str
    region_model: Mapping[int, int]
    alpha: float
    error_metric: str
    technique: str
    feature_names: tuple[str, ...]
    times: tuple[float, ...]
    spatial_dims: int
    final_error: float = float("nan")
    final_storage_ratio: float = float("nan")
    meta: Mapping[str, Any] = field(default_factory=dict, compare=False)

    @property
    def k(self) -> int:
        return 1 + self.spatial_dims

    def region(self, region_id: int) -> Region:
        for r in self.regions:
            if r.id == region_id:
                return r
        raise KeyError(region_id)

    def model_for(self, region_id: int) -> ModelArtifact:
        return self.models[self.region_model[region_id]]


def dataset_storage(d: Dataset) -> int:
    """|D| * (|F| + k)."""
    return d.n_instances * (d.n_features + d.k)


def region_storage(region: Region, k: int) -> int:
    if not region.outline:
        raise MissingOutline(f"region {region.id} has no outline")
    return region.n_vertices * (k - 1) + 2


def reduction_storage(r: Reduction, k: int | None = None) -> int:
    """Region costs plus model coefficients, plus one pointer per region when
    regions link to shared cluster models."""
    k = r.k if k is None else k
    total = sum(region_storage(reg, k) for reg in r.regions)
    total += sum(m.coefficient_count for m in r.models)
    if r.link_mode == "cluster":
        total += len(r.regions)
    return total


def storage_ratio(d: Dataset, r: Reduction) -> float:
    base = dataset_storage(d)
    if base == 0:
        raise EmptyDataset("storage ratio is undefined for an empty dataset")
    return reduction_storage(r, d.k) / base
