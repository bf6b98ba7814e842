from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import grid_dataset
from kdstr.geometry import (
    build_adjacency,
    discretize_time,
    point_in_outline,
    region_outline,
    ring_area,
    voronoi_cells,
)

UNIT_CORNERS = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)])


def test_discretize_examples():
    np.testing.assert_allclose(discretize_time([0, 1, 2]), [-0.5, 0.5, 1.5, 2.5])
    np.testing.assert_allclose(discretize_time([7]), [6.5, 7.5])
    np.testing.assert_allclose(discretize_time([0, 1, 10]), [-0.5, 0.5, 5.5, 10.5])


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=30, unique=True))
def test_discretize_each_time_inside_its_own_step(ts):
    t = np.sort(np.asarray(ts))
    if len(t) > 1 and np.min(np.diff(t)) < 1e-6:
        return
    b = discretize_time(t)
    assert len(b) == len(t) + 1
    assert np.all(np.diff(b) > 0)
    assert np.all((b[:-1] < t) & (t < b[1:]))


def test_single_sensor_cell_is_window():
    (cell,) = voronoi_cells(np.array([[0.0, 0.0]]), window=((-1, -1), (1, 1)))
    assert cell.neighbors == frozenset()
    assert abs(ring_area(cell.vertices)) == pytest.approx(4.0)


def test_two_sensor_bisector():
    cells = voronoi_cells(np.array([[0.0, 0.0], [2.0, 0.0]]), window=((-1, -1), (3, 1)))
    assert cells[0].neighbors == {1} and cells[1].neighbors == {0}
    assert max(v[0] for v in cells[0].vertices) == pytest.approx(1.0)
    assert min(v[0] for v in cells[1].vertices) == pytest.approx(1.0)
    assert ring_area(cells[0].vertices) == pytest.approx(4.0)


def _raster_owner(coords, lo, hi, res):
    xs = lo[0] + (np.arange(res) + 0.5) * (hi[0] - lo[0]) / res
    ys = lo[1] + (np.arange(res) + 0.5) * (hi[1] - lo[1]) / res
    gx, gy = np.meshgrid(xs, ys, indexing="xy")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    d2 = ((pts[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    return pts, d2.argmin(axis=1)


def test_quadrants_against_rasterization():
    lo, hi = np.array([-1.0, -1.0]), np.array([2.0, 2.0])
    cells = voronoi_cells(UNIT_CORNERS, window=(lo, hi))
    pts, owner = _raster_owner(UNIT_CORNERS, lo, hi, 1000)
    pixel = np.prod(hi - lo) / 1000**2
    for c in cells:
        assert len(c.neighbors) == 2
        assert ring_area(c.vertices) == pytest.approx(np.sum(owner == c.sensor) * pixel, rel=1e-9)
    # diagonal corners touch at a point only
    assert 3 not in cells[0].neighbors and 2 not in cells[1].neighbors


def _rasterized_neighbors(coords, lo, hi, res):
    _, owner = _raster_owner(coords, lo, hi, res)
    img = owner.reshape(res, res)
    pairs = set()
    for a, b in ((img[:, :-1], img[:, 1:]), (img[:-1, :], img[1:, :])):
        diff = a != b
        for i, j in zip(a[diff].tolist(), b[diff].tolist()):
            pairs.add((min(i, j), max(i, j)))
    return pairs


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_cells_contain_their_sensor_and_tile_the_window(seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 10, size=(int(rng.integers(2, 25)), 2))
    lo, hi = np.array([-1.0, -1.0]), np.array([11.0, 11.0])
    cells = voronoi_cells(coords, window=(lo, hi))
    total = sum(ring_area(c.vertices) for c in cells)
    assert total == pytest.approx(144.0, rel=1e-9)
    for c in cells:
        assert ring_area(c.vertices) > 0  # counter-clockwise
        assert point_in_outline(coords[c.sensor], c.vertices)
    # every sampled point lies in the cell of its nearest sensor
    pts = rng.uniform(lo, hi, size=(10_000, 2))
    nearest = ((pts[:, None] - coords[None]) ** 2).sum(axis=2).argmin(axis=1)
    for p, s in zip(pts[:300], nearest[:300]):
        assert point_in_outline(p, cells[s].vertices)


def test_neighbors_match_rasterization_on_random_layout():
    rng = np.random.default_rng(3)
    coords = rng.uniform(0, 10, size=(12, 2))
    lo, hi = np.array([-1.0, -1.0]), np.array([11.0, 11.0])
    cells = voronoi_cells(coords, window=(lo, hi))
    ours = {(min(c.sensor, o), max(c.sensor, o)) for c in cells for o in c.neighbors}
    raster = _rasterized_neighbors(coords, lo, hi, 1200)
    # the raster can miss very short shared edges but never invents adjacency
    assert raster <= ours
    assert len(ours - raster) <= 2


def test_one_dimensional_cells_are_intervals():
    cells = voronoi_cells(np.array([[0.0], [4.0], [1.0]]), window=((-1.0,), (5.0,)))
    assert cells[0].vertices == ((-1.0,), (0.5,))
    assert cells[2].vertices == ((0.5,), (2.5,))
    assert cells[1].vertices == ((2.5,), (5.0,))
    assert cells[2].neighbors == {0, 1}
    assert cells[0].neighbors == {2}


def test_adjacency_examples():
    d = grid_dataset([(0.0, 0.0)], [0, 1, 2], np.ones((3, 1)))
    g = build_adjacency(d, voronoi_cells(d.sensor_coords))
    assert g.n_edges == 2
    d2 = grid_dataset([(0.0, 0.0), (1.0, 0.0)], [0], np.ones((1, 2)))
    g2 = build_adjacency(d2, voronoi_cells(d2.sensor_coords))
    assert g2.edge_set() == {(0, 1)}


def test_footfall_adjacency_matches_exhaustive_pair_check(ff, ff_prepared):
    cells = ff_prepared.cells
    graph = ff_prepared.graph
    spatial = {(min(c.sensor, o), max(c.sensor, o)) for c in cells for o in c.neighbors}
    assert graph.n_edges == 11 * 2 + 3 * len(spatial)
    # exhaustive check: two sensors are adjacent exactly when their rings share an edge
    def edges(c):
        ring = c.vertex_ids
        return {frozenset(e) for e in zip(ring, ring[1:] + ring[:1])}
    for a, b in itertools.combinations(range(ff.n_sensors), 2):
        assert ((a, b) in spatial) == bool(edges(cells[a]) & edges(cells[b]))
    degree = np.bincount(graph.edges.ravel(), minlength=ff.n_instances)
    assert degree.min() >= 1
    # the qualitative layout: rows A B E H / C D F G / I K J
    names = ff.sensor_names
    sid = {n: i for i, n in enumerate(names)}
    for u, v in [("A", "B"), ("A", "C"), ("C", "D"), ("D", "F"), ("F", "G"), ("G", "H"), ("I", "K"), ("K", "J")]:
        assert (min(sid[u], sid[v]), max(sid[u], sid[v])) in spatial
    assert (min(sid["A"], sid["J"]), max(sid["A"], sid["J"])) not in spatial


def test_outline_examples():
    lo, hi = np.array([-0.5, -0.5]), np.array([1.5, 1.5])
    cells = voronoi_cells(UNIT_CORNERS, window=(lo, hi))
    assert set(region_outline([0], cells)) == set(cells[0].vertices)
    merged = region_outline([0, 1], cells)  # the two bottom quadrants
    assert len(merged) == 4
    assert abs(ring_area(merged)) == pytest.approx(2.0)
    ell = region_outline([0, 1, 2], cells)
    assert len(ell) == 6
    assert abs(ring_area(ell)) == pytest.approx(3.0)
    assert point_in_outline((0.0, 0.0), ell) and not point_in_outline((1.2, 1.2), ell)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_outline_is_union_of_cells(seed):
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0, 10, size=(15, 2))
    cells = voronoi_cells(coords)
    # grow a connected sensor set
    members = {0}
    for _ in range(int(rng.integers(0, 8))):
        frontier = sorted({o for m in members for o in cells[m].neighbors} - members)
        if not frontier:
            break
        members.add(int(rng.choice(frontier)))
    ring = region_outline(sorted(members), cells)
    area = sum(ring_area(cells[m].vertices) for m in members)
    # outline area equals total cell area unless the set encloses a hole
    assert abs(ring_area(ring)) >= area * (1 - 1e-9)
    for m in members:
        assert point_in_outline(coords[m], ring)
