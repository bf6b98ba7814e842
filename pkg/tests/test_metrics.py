from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid_dataset
from kdstr.engine import ReductionConfig, reduce
from kdstr.errors import KeyMismatch, OutsideAllRegions, TechniqueCannotImpute, ZeroValueInData
from kdstr.metrics import impute, locate, mape, nrmse, nrmse_details, reconstruct


def _table(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    return grid_dataset(np.arange(n, dtype=float)[:, None] * np.array([[1.0, 0.0]]), [0.0], values[None, :, :])


def brute_nrmse(a, b):
    """Plain loops: mean over features of sqrt(mean squared error) / range."""
    n, f = len(a), len(a[0])
    total, used = 0.0, 0
    for j in range(f):
        col = [row[j] for row in a]
        rng = max(col) - min(col)
        if rng == 0:
            continue
        s = 0.0
        for i in range(n):
            s += (a[i][j] - b[i][j]) ** 2
        total += math.sqrt(s / n) / rng
        used += 1
    return total / used if used else 0.0


def brute_mape(a, b):
    s = 0.0
    for ra, rb in zip(a, b):
        for x, y in zip(ra, rb):
            s += abs((x - y) / x)
    return s / (len(a) * len(a[0]))


def test_nrmse_examples():
    d = _table(np.arange(11.0)[:, None])
    assert nrmse(d, d) == 0.0
    off = d.with_values(d.values + np.where(np.arange(11) % 2 == 0, 1.0, -1.0)[:, None])
    assert nrmse(d, off) == pytest.approx(0.1)
    two = _table([[1.0, 0.0], [2.0, 4.0], [3.0, 0.0], [4.0, 4.0]])
    err = two.with_values(two.values + np.array([[0.0, 2.0], [0.0, -2.0], [0.0, 2.0], [0.0, -2.0]]))
    assert nrmse(two, err) == pytest.approx(0.25)


def test_nrmse_zero_range_feature_excluded():
    d = _table([[1.0, 5.0], [3.0, 5.0]])
    details = nrmse_details(d, d.with_values(d.values + [[0.0, 1.0], [0.0, 1.0]]))
    assert details["nrmse"] == 0.0
    assert details["excluded"] == {"f1": 1.0}


def test_mape_examples():
    d = _table([[100.0]])
    assert mape(d, d) == 0.0
    assert mape(d, d.with_values([[90.0]])) == pytest.approx(0.10)
    with pytest.raises(ZeroValueInData):
        mape(_table([[1.0], [0.0]]), _table([[1.0], [0.0]]))


def test_key_mismatch():
    with pytest.raises(KeyMismatch):
        nrmse(_table([[1.0], [2.0]]), _table([[1.0], [2.0], [3.0]]))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 40), st.integers(1, 4))
def test_metrics_match_brute_force(seed, n, f):
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.5, 10, size=(n, f)) * rng.choice([-1, 1], size=(n, f))
    b = a + rng.normal(scale=0.3, size=(n, f))
    da, db = _table(a), _table(b)
    assert nrmse(da, db) == pytest.approx(brute_nrmse(a.tolist(), b.tolist()), rel=1e-12, abs=1e-300)
    assert mape(da, db) == pytest.approx(brute_mape(a.tolist(), b.tolist()), rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 100_000))
def test_nrmse_affine_invariance(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(25, 3))
    b = a + rng.normal(scale=0.2, size=a.shape)
    scale = rng.uniform(0.01, 100, size=3) * rng.choice([-1, 1], size=3)
    shift = rng.uniform(-1e3, 1e3, size=3)
    base = nrmse(_table(a), _table(b))
    moved = nrmse(_table(a * scale + shift), _table(b * scale + shift))
    assert moved == pytest.approx(base, rel=1e-9)


def test_reconstruct_and_impute_agree_on_footfall(ff, ff_prepared):
    r = reduce(ff, ReductionConfig(alpha=0.2, technique="plr"), ff_prepared)
    rec = reconstruct(ff, r)
    for i in range(ff.n_instances):
        t = ff.times[ff.timestep[i]]
        loc = ff.sensor_coords[ff.sensor[i]]
        np.testing.assert_allclose(impute(r, t, loc), rec.values[i], rtol=1e-9, atol=1e-9)


def test_single_region_constant_model(ff, ff_prepared):
    r = reduce(ff, ReductionConfig(alpha=1.0), ff_prepared)
    rec = reconstruct(ff, r)
    np.testing.assert_allclose(rec.values, ff.values.mean(), rtol=1e-12)
    assert impute(r, 1.2, (1.4, 0.7))[0] == pytest.approx(ff.values.mean())


def test_impute_linear_field_off_sample():
    coords = [(x, y) for x in range(4) for y in range(3)]
    times = np.arange(5.0)
    vals = np.array([[2 * t + 3 * x for (x, y) in coords] for t in times])
    d = grid_dataset(coords, times, vals)
    r = reduce(d, ReductionConfig(alpha=0.05, technique="plr"))
    assert r.final_error <= 1e-9
    for t, x, y in [(0.5, 0.3, 0.2), (2.7, 2.5, 1.5), (3.9, 1.1, 1.9)]:
        assert impute(r, t, (x, y))[0] == pytest.approx(2 * t + 3 * x, abs=1e-6)


def test_impute_errors(ff, ff_prepared):
    r = reduce(ff, ReductionConfig(alpha=0.5), ff_prepared)
    with pytest.raises(OutsideAllRegions):
        impute(r, 50.0, (1.0, 1.0))
    with pytest.raises(OutsideAllRegions):
        impute(r, 1.0, (100.0, 100.0))
    dct = reduce(ff, ReductionConfig(alpha=0.5, technique="dct"), ff_prepared)
    with pytest.raises(TechniqueCannotImpute):
        impute(dct, 1.0, (1.0, 1.0))


def test_locate_prefers_smallest_enclosing_outline(ff, ff_prepared):
    r = reduce(ff, ReductionConfig(alpha=0.01), ff_prepared)
    for i in range(ff.n_instances):
        t = ff.times[ff.timestep[i]]
        reg = locate(r, t, ff.sensor_coords[ff.sensor[i]])
        assert int(ff.sensor[i]) in reg.sensors
        assert reg.t_begin <= ff.timestep[i] <= reg.t_end
