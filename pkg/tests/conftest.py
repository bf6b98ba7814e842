from __future__ import annotations

import numpy as np
import pytest

from kdstr.data import footfall
from kdstr.engine import prepare
from kdstr.types import Dataset


def grid_dataset(coords, times, values, feature_names=None) -> Dataset:
    """Complete (time x sensor) dataset; ``values[t, s]`` is a scalar or a feature vector."""
    coords = np.asarray(coords, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[:, :, None]
    nt, ns, nf = v.shape
    ts, ss = np.meshgrid(np.arange(nt), np.arange(ns), indexing="ij")
    names = tuple(feature_names or [f"f{i}" for i in range(nf)])
    return Dataset(coords, np.asarray(times, dtype=float), names, ts.ravel(), ss.ravel(), v.reshape(nt * ns, nf))


def random_dataset(rng: np.random.Generator, n_sensors: int, n_times: int, n_features: int = 1, levels: int | None = None, missing: float = 0.0) -> Dataset:
    """Random sensors in the unit square. ``levels`` draws integer values so that clusters have ties."""
    while True:
        coords = rng.uniform(0, 10, size=(n_sensors, 2))
        if len(np.unique(np.round(coords, 6), axis=0)) == n_sensors:
            break
    times = np.cumsum(rng.uniform(0.5, 2.0, size=n_times))
    if levels:
        vals = rng.integers(0, levels, size=(n_times, n_sensors, n_features)).astype(float)
    else:
        vals = rng.normal(size=(n_times, n_sensors, n_features))
    d = grid_dataset(coords, times, vals)
    if missing > 0:
        keep = rng.uniform(size=d.n_instances) >= missing
        keep[0] = True
        d = Dataset(d.sensor_coords, d.times, d.feature_names, d.timestep[keep], d.sensor[keep], d.values[keep])
    return d


@pytest.fixture(scope="session")
def ff() -> Dataset:
    return footfall()


@pytest.fixture(scope="session")
def ff_prepared(ff):
    return prepare(ff)
