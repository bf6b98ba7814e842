"""Synthetic sensor datasets for the three behaviours the method is tuned on.

* ``continuous``: smooth daily cycles with small spatial and temporal
  variation (air-temperature-like).
* ``highTemporalVariance``: strong daily cycles, plus a subpopulation of
  "slip-road" sensors whose level jumps between discrete states
  (traffic-like).
* ``eventDriven``: exactly zero most of the time, with positive events that
  hit groups of nearby sensors for a few timesteps (rainfall-like).

All generators are deterministic given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .types import Dataset

ARCHETYPES = ("continuous", "highTemporalVariance", "eventDriven")
HOUR = 3600.0


@dataclass(frozen=True)
class SyntheticParams:
    n_sensors: int = 100
    n_times: int = 100
    n_features: int = 1
    noise: float = 0.0
    event_probability: float = 0.15
    event_radius: float = 0.2
    extent: float = 100.0

    def __post_init__(self) -> None:
        if self.n_sensors < 1 or self.n_times < 1 or self.n_features < 1:
            raise ConfigError("sensor, timestep and feature counts must be >= 1")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if not 0.0 <= self.event_probability <= 1.0:
            raise ConfigError("event_probability must lie in [0, 1]")
        if self.event_radius <= 0:
            raise ConfigError("event_radius must be > 0")
        if self.extent <= 0:
            raise ConfigError("extent must be > 0")


def _layout(rng: np.random.Generator, p: SyntheticParams) -> np.ndarray:
    # jittered grid: well spread, never coincident
    side = int(np.ceil(np.sqrt(p.n_sensors)))
    cell = p.extent / side
    idx = np.arange(p.n_sensors)
    base = np.column_stack([(idx % side + 0.5) * cell, (idx // side + 0.5) * cell])
    return base + rng.uniform(-0.3, 0.3, size=base.shape) * cell


def _continuous(rng, xy, hours, p):
    n_t, n_s = len(hours), len(xy)
    out = np.empty((n_t, n_s, p.n_features))
    for f in range(p.n_features):
        # spatial variation is small next to the daily swing
        base = 10.0 + 5.0 * f + 0.004 * xy[:, 0] + 0.002 * xy[:, 1]
        amp = 4.0 + 0.002 * xy[:, 1]
        phase = 0.0005 * xy[:, 0]
        out[:, :, f] = base[None, :] + amp[None, :] * np.sin(2 * np.pi * hours[:, None] / 24.0 + phase[None, :])
    return out


def _high_variance(rng, xy, hours, p):
    n_t, n_s = len(hours), len(xy)
    slip = rng.random(n_s) < 0.25
    out = np.empty((n_t, n_s, p.n_features))
    for f in range(p.n_features):
        level = 60.0 + 20.0 * rng.random(n_s) + 10.0 * f
        cycle = 40.0 * np.clip(np.sin(2 * np.pi * (hours[:, None] - 6.0) / 24.0), 0.0, None)
        vals = level[None, :] + cycle * (1.0 + 0.2 * rng.random(n_s))[None, :]
        # slip-road sensors hop between a few discrete flow levels
        states = np.array([5.0, 30.0, 90.0])
        for s in np.nonzero(slip)[0]:
            switches = np.cumsum(rng.random(n_t) < 0.15)
            vals[:, s] = states[(switches + rng.integers(3)) % 3]
        out[:, :, f] = vals
    return out


def _event_driven(rng, xy, hours, p):
    n_t, n_s = len(hours), len(xy)
    out = np.zeros((n_t, n_s, p.n_features))
    radius = p.event_radius * p.extent
    for t in range(n_t):
        if rng.random() >= p.event_probability:
            continue
        centre = xy[rng.integers(n_s)]
        hit = np.hypot(*(xy - centre).T) <= radius
        duration = int(rng.integers(1, 4))
        amount = float(rng.integers(1, 6))
        out[t : t + duration, hit, :] += amount
    return out


_GENERATORS = {"continuous": _continuous, "highTemporalVariance": _high_variance, "eventDriven": _event_driven}


def gen_synthetic(archetype: str, params: SyntheticParams | None = None, seed: int = 0) -> Dataset:
    """A complete (sensor x timestep) dataset of the given archetype, hourly times."""
    if archetype not in _GENERATORS:
        raise ConfigError(f"archetype must be one of {ARCHETYPES}, got {archetype!r}")
    p = params or SyntheticParams()
    rng = np.random.default_rng(seed)
    xy = _layout(rng, p)
    hours = np.arange(p.n_times, dtype=float)
    cube = _GENERATORS[archetype](rng, xy, hours, p)
    if p.noise > 0:
        noise = rng.normal(0.0, p.noise, size=cube.shape)
        if archetype == "eventDriven":
            # keep dry readings exactly dry
            cube = np.where(cube > 0, np.maximum(cube + noise, 0.0), 0.0)
        else:
            cube = cube + noise
    ts = np.repeat(np.arange(p.n_times), p.n_sensors)
    ss = np.tile(np.arange(p.n_sensors), p.n_times)
    names = tuple(f"f{i}" for i in range(p.n_features))
    return Dataset(xy, hours * HOUR, names, ts, ss, cube.reshape(-1, p.n_features))
