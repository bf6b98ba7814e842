from __future__ import annotations

from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdstr.errors import ComplexityExceedsData, OutsideModelDomain
from kdstr.modeling import (
    FitInput,
    fit,
    fit_cluster,
    fitted_values,
    model_storage_cost,
    monomial_exponents,
    predict,
    sse,
    standardize,
)

BOX3 = ((0.0, 0.0, 0.0), (10.0, 10.0, 10.0))


def _inp(x, y, box=None):
    x = np.asarray(x, dtype=float)
    if box is None:
        box = (tuple(x.min(axis=0)), tuple(x.max(axis=0)))
    return FitInput(x, y, box)


def _dct_matrix(n):
    """Orthonormal DCT-II matrix written out from its definition."""
    m = np.zeros((n, n))
    for k in range(n):
        scale = np.sqrt(1.0 / n) if k == 0 else np.sqrt(2.0 / n)
        for i in range(n):
            m[k, i] = scale * np.cos(np.pi * k * (2 * i + 1) / (2 * n))
    return m


@pytest.mark.parametrize("technique", ["plr", "dct", "dtr"])
def test_constant_responses(technique):
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, size=(12, 3))
    inp = _inp(x, np.full((12, 2), 4.5))
    m = fit(technique, inp, 1)
    np.testing.assert_allclose(fitted_values(m, inp), 4.5, atol=1e-12)
    assert np.all(sse(m, inp) <= 1e-20)
    assert m.saturated


def test_plr_linear_in_time_is_exact():
    t = np.arange(20.0) * 3600.0 + 1.7e9
    x = np.column_stack([t, np.zeros(20), np.zeros(20)])
    inp = _inp(x, 0.002 * (t - 1.7e9) + 5.0)
    m = fit("plr", inp, 2)
    assert np.max(np.abs(fitted_values(m, inp)[:, 0] - inp.responses[:, 0])) <= 1e-9


def test_plr_interpolates_analytic_function():
    rng = np.random.default_rng(1)
    x = np.column_stack([rng.uniform(0, 10, 30), rng.uniform(0, 10, 30), rng.uniform(0, 10, 30)])
    f = lambda p: 2 * p[:, 0] + 3 * p[:, 1]
    m = fit("plr", _inp(x, f(x), BOX3), 2)
    q = rng.uniform(1, 9, size=(50, 3))
    np.testing.assert_allclose(predict(m, q)[:, 0], f(q), atol=1e-6)


def test_plr_order_zero_predicts_means():
    rng = np.random.default_rng(2)
    y = rng.normal(size=(15, 2))
    m = fit("plr", _inp(rng.uniform(0, 10, (15, 3)), y, BOX3), 1)
    out = predict(m, rng.uniform(-50, 50, size=(7, 3)))
    np.testing.assert_allclose(out, np.broadcast_to(y.mean(axis=0), (7, 2)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 4))
def test_plr_satisfies_normal_equations(seed, c):
    rng = np.random.default_rng(seed)
    n = 40
    x = rng.uniform(0, 10, size=(n, 3))
    y = rng.normal(size=(n, 2))
    inp = _inp(x, y, BOX3)
    m = fit("plr", inp, c)
    z = standardize(x, BOX3)
    design = np.column_stack([np.prod(z ** np.array(e), axis=1) for e in monomial_exponents(3, c - 1)])
    resid = y - fitted_values(m, inp)
    np.testing.assert_allclose(design.T @ resid, 0.0, atol=1e-8)


def test_dct_single_basis_vector():
    n = 8
    basis = _dct_matrix(n)[3]
    inp = _inp(np.column_stack([np.arange(n), np.zeros(n), np.zeros(n)]), 5 * basis)
    m = fit("dct", inp, 1)
    assert np.max(np.abs(fitted_values(m, inp)[:, 0] - 5 * basis)) <= 1e-9
    assert m.payload["idx"] == [[3]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 6))
def test_dct_recovers_c_term_cosines(seed, c):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(c + 1, 40))
    mat = _dct_matrix(n)
    ks = rng.choice(n, size=c, replace=False)
    amps = rng.uniform(1, 5, size=c) * rng.choice([-1, 1], size=c)
    seq = amps @ mat[ks]
    inp = _inp(np.column_stack([np.arange(n), np.zeros(n), np.zeros(n)]), seq)
    m = fit("dct", inp, c)
    assert np.max(np.abs(fitted_values(m, inp)[:, 0] - seq)) <= 1e-9
    # brute-force transform: kept coefficients are the c largest in magnitude
    coefs = mat @ seq
    assert sorted(m.payload["idx"][0]) == sorted(np.argsort(-np.abs(coefs), kind="stable")[:c].tolist())


def test_dct_rejects_complexity_above_length():
    inp = _inp(np.column_stack([np.arange(4.0), np.zeros(4), np.zeros(4)]), np.arange(4.0))
    with pytest.raises(ComplexityExceedsData):
        fit("dct", inp, 5)


def test_dct_needs_positions():
    inp = _inp(np.column_stack([np.arange(4.0), np.zeros(4), np.zeros(4)]), np.arange(4.0))
    m = fit("dct", inp, 2)
    with pytest.raises(OutsideModelDomain):
        predict(m, np.zeros((1, 3)))
    with pytest.raises(OutsideModelDomain):
        predict(m, positions=[4])


def test_storage_cost_examples():
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 10, size=(20, 3))
    assert fit("plr", _inp(x, rng.normal(size=20), BOX3), 1).coefficient_count == 1
    m = fit("dct", _inp(x, rng.normal(size=(20, 2)), BOX3), 3)
    assert m.coefficient_count == 14 == model_storage_cost(m)
    y = np.where(x[:, 0] < 5, 1.0, 2.0)[:, None] * np.ones((1, 6))
    tree = fit("dtr", _inp(x, y, BOX3), 1)
    assert tree.coefficient_count == 14 == model_storage_cost(tree)
    for c in range(1, 4):
        p = fit("plr", _inp(x, rng.normal(size=(20, 2)), BOX3), c)
        assert p.coefficient_count == 2 * comb(3 + c - 1, 3) == model_storage_cost(p)


def test_dtr_depth_one_semantics():
    t = np.arange(10.0)
    x = np.column_stack([t, np.zeros(10), np.zeros(10)])
    y = np.where(t < 4, 1.0, 7.0)
    m = fit("dtr", _inp(x, y, ((0.0, 0.0, 0.0), (9.0, 1.0, 1.0))), 1)
    assert predict(m, [[3.0, 0.0, 0.0]])[0, 0] == 1.0
    assert predict(m, [[4.0, 0.0, 0.0]])[0, 0] == 7.0
    assert predict(m, [[3.4, 0.5, 0.5]])[0, 0] == 1.0
    assert predict(m, [[3.6, 0.5, 0.5]])[0, 0] == 7.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_dtr_root_split_is_best_possible(seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 6, size=(25, 3)).astype(float)
    y = rng.normal(size=(25, 2))
    inp = _inp(x, y, ((0.0,) * 3, (5.0,) * 3))
    m = fit("dtr", inp, 1)
    # brute force over every axis-aligned split
    best = float(np.sum((y - y.mean(0)) ** 2))
    for dim in range(3):
        for thr in np.unique(x[:, dim])[1:]:
            left = x[:, dim] < thr
            s = np.sum((y[left] - y[left].mean(0)) ** 2) + np.sum((y[~left] - y[~left].mean(0)) ** 2)
            best = min(best, float(s))
    assert float(np.sum(sse(m, inp))) == pytest.approx(best, rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["plr", "dct", "dtr"]))
def test_ladder_error_never_increases(seed, technique):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 10, size=(30, 3))
    inp = _inp(x, rng.normal(size=(30, 2)), BOX3)
    last = np.inf
    for c in range(1, 6):
        m = fit(technique, inp, c)
        e = float(np.sum(sse(m, inp)))
        assert e <= last + 1e-9
        last = e
        if m.saturated:
            break


def test_single_instance_is_saturated():
    m = fit("dtr", _inp([[1.0, 2.0, 3.0]], [[4.0]], BOX3), 5)
    assert m.complexity == 1 and m.saturated


def test_fit_cluster_examples():
    rng = np.random.default_rng(4)
    a = _inp(rng.uniform(0, 5, (6, 3)), np.full(6, 3.0), BOX3)
    b = _inp(rng.uniform(5, 10, (6, 3)), np.full(6, 3.0), BOX3)
    single = fit_cluster("plr", [a], 2)
    assert single == fit("plr", a, 2)
    both = fit_cluster("plr", [a, b], 1)
    assert both.complexity == 1 and both.payload["coef"][0][0] == pytest.approx(3.0)
    c = _inp(rng.uniform(5, 10, (6, 3)), np.full(6, 9.0), BOX3)
    mean = fit_cluster("plr", [a, c], 1)
    assert predict(mean, [[1.0, 1.0, 1.0]])[0, 0] == pytest.approx(6.0)
