"""Region models: polynomial regression (PLR), truncated DCT and regression trees.

Each technique has a complexity ladder starting at 1:

* PLR level ``c`` fits every monomial of total degree ``<= c - 1`` in the
  ``k`` predictors (time first, then coordinates).
* DCT level ``c`` keeps the ``c`` largest orthonormal DCT-II coefficients
  of each feature's sequence in canonical instance order.
* DTR level ``c`` is a greedy least-squares tree of depth at most ``c``
  predicting the whole feature vector at each leaf.

PLR and DTR work on predictors rescaled to ``[-1, 1]`` over the model's
domain box. The box follows from the stored region bounds, so it costs no
storage units.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Sequence

import numpy as np
from scipy.fft import dct, idct

from .errors import ComplexityExceedsData, DataError, OutsideModelDomain
from .geometry import outline_extent
from .types import TECHNIQUES, Dataset, ModelArtifact, Region

Box = tuple[tuple[float, ...], tuple[float, ...]]


@dataclass(frozen=True, eq=False)
class FitInput:
    """Predictors (raw time, coordinates...) and responses in canonical order."""

    predictors: np.ndarray
    responses: np.ndarray
    domain: Box

    def __post_init__(self) -> None:
        x = np.asarray(self.predictors, dtype=float)
        y = np.asarray(self.responses, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if len(x) == 0 or len(x) != len(y):
            raise DataError("a fit needs at least one instance and matching predictor/response rows")
        object.__setattr__(self, "predictors", x)
        object.__setattr__(self, "responses", y)
        lo, hi = self.domain
        object.__setattr__(self, "domain", (tuple(map(float, lo)), tuple(map(float, hi))))

    @property
    def n(self) -> int:
        return len(self.predictors)

    @property
    def k(self) -> int:
        return self.predictors.shape[1]

    @property
    def n_features(self) -> int:
        return self.responses.shape[1]


def region_rows(d: Dataset, region: Region) -> np.ndarray:
    """Row indices of the instances inside ``region``'s block, canonical order."""
    block = d.grid[region.t_begin : region.t_end + 1, list(region.sensors)]
    return np.sort(block[block >= 0])


def region_domain(region: Region, times: Sequence[float]) -> Box:
    t = np.asarray(times, dtype=float)
    lo, hi = outline_extent(region.outline)
    return (float(t[region.t_begin]), *map(float, lo)), (float(t[region.t_end]), *map(float, hi))


def union_domain(boxes: Sequence[Box]) -> Box:
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    return tuple(map(float, lo)), tuple(map(float, hi))


def region_input(d: Dataset, region: Region) -> FitInput:
    rows = region_rows(d, region)
    return FitInput(d.predictors[rows], d.values[rows], region_domain(region, d.times))


def cluster_input(inputs: Sequence[FitInput]) -> FitInput:
    """Concatenate per-region inputs (callers pass them in ascending region id)."""
    if not inputs:
        raise DataError("a cluster model needs at least one region")
    if len(inputs) == 1:
        return inputs[0]
    return FitInput(
        np.concatenate([i.predictors for i in inputs]),
        np.concatenate([i.responses for i in inputs]),
        union_domain([i.domain for i in inputs]),
    )


def standardize(x: np.ndarray, domain: Box) -> np.ndarray:
    lo = np.asarray(domain[0], dtype=float)
    hi = np.asarray(domain[1], dtype=float)
    span = hi - lo
    out = np.zeros_like(np.asarray(x, dtype=float))
    ok = span > 0
    out[:, ok] = 2.0 * (x[:, ok] - lo[ok]) / span[ok] - 1.0
    return out


def _sse_tol(y: np.ndarray) -> float:
    scale = float(np.max(np.abs(y))) if y.size else 0.0
    return 1e-20 * max(scale, 1.0) ** 2 * y.size


# --------------------------------------------------------------------------
# PLR


def monomial_exponents(k: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent vectors of total degree <= ``degree``, by degree then lexicographically descending."""
    out = []
    for total in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(k), total):
            e = [0] * k
            for j in combo:
                e[j] += 1
            out.append(tuple(e))
    return out


def _design(z: np.ndarray, exps: Sequence[tuple[int, ...]]) -> np.ndarray:
    cols = np.ones((len(z), len(exps)))
    for j, e in enumerate(exps):
        for dim, p in enumerate(e):
            if p:
                cols[:, j] *= z[:, dim] ** p
    return cols


def _fit_plr(inp: FitInput, complexity: int) -> ModelArtifact:
    degree = complexity - 1
    exps = monomial_exponents(inp.k, degree)
    a = _design(standardize(inp.predictors, inp.domain), exps)
    coef, _, rank, _ = np.linalg.lstsq(a, inp.responses, rcond=None)
    resid = inp.responses - a @ coef
    saturated = rank >= inp.n or float(np.sum(resid**2)) <= _sse_tol(inp.responses)
    return ModelArtifact(
        "plr",
        complexity,
        {"degree": degree, "coef": coef.tolist()},
        inp.n_features * comb(inp.k + degree, inp.k),
        inp.domain,
        bool(saturated),
    )


def _predict_plr(m: ModelArtifact, x: np.ndarray) -> np.ndarray:
    coef = np.asarray(m.payload["coef"], dtype=float)
    exps = monomial_exponents(x.shape[1], int(m.payload["degree"]))
    return _design(standardize(x, m.domain), exps) @ coef


# --------------------------------------------------------------------------
# DCT


def _fit_dct(inp: FitInput, complexity: int) -> ModelArtifact:
    n = inp.n
    if complexity > n:
        raise ComplexityExceedsData(f"DCT complexity {complexity} exceeds sequence length {n}")
    coefs = dct(inp.responses, type=2, norm="ortho", axis=0)
    idx, val = [], []
    kept_energy = 0.0
    for f in range(inp.n_features):
        order = np.argsort(-np.abs(coefs[:, f]), kind="stable")[:complexity]
        order = np.sort(order)
        idx.append(order.tolist())
        val.append(coefs[order, f].tolist())
        kept_energy += float(np.sum(coefs[order, f] ** 2))
    sse = max(float(np.sum(coefs**2)) - kept_energy, 0.0)
    saturated = complexity >= n or sse <= _sse_tol(inp.responses)
    return ModelArtifact(
        "dct",
        complexity,
        {"n": n, "idx": idx, "val": val},
        inp.n_features * (1 + 2 * complexity),
        inp.domain,
        bool(saturated),
    )


def dct_sequence(m: ModelArtifact) -> np.ndarray:
    """Reconstructed (n x |F|) sequence of a DCT model."""
    n = int(m.payload["n"])
    spectrum = np.zeros((n, len(m.payload["idx"])))
    for f, (idx, val) in enumerate(zip(m.payload["idx"], m.payload["val"])):
        spectrum[np.asarray(idx, dtype=np.int64), f] = val
    return idct(spectrum, type=2, norm="ortho", axis=0)


# --------------------------------------------------------------------------
# DTR


def _best_split(z: np.ndarray, y: np.ndarray) -> tuple[float, int, float] | None:
    """(sse, dim, threshold) of the best binary split, or None when no split helps."""
    n = len(y)
    total = float(np.sum((y - y.mean(axis=0)) ** 2))
    best: tuple[float, int, float] | None = None
    for dim in range(z.shape[1]):
        order = np.argsort(z[:, dim], kind="stable")
        zs = z[order, dim]
        ys = y[order]
        cut = np.nonzero(np.diff(zs) > 0)[0]  # split after position cut
        if cut.size == 0:
            continue
        csum = np.cumsum(ys, axis=0)
        csq = np.cumsum(np.sum(ys**2, axis=1))
        nl = (cut + 1).astype(float)
        nr = n - nl
        sl = csum[cut]
        sr = csum[-1] - sl
        sse = (csq[-1]) - np.sum(sl**2, axis=1) / nl - np.sum(sr**2, axis=1) / nr
        j = int(np.argmin(sse))
        cand = float(sse[j])
        if best is None or cand < best[0]:
            best = (cand, dim, float((zs[cut[j]] + zs[cut[j] + 1]) / 2.0))
    if best is None or best[0] >= total - 1e-12 * max(total, 1e-300) or total <= _sse_tol(y):
        return None
    return best


def _grow_tree(z: np.ndarray, y: np.ndarray, depth: int, max_depth: int, stats: dict) -> list:
    if depth < max_depth and len(y) > 1:
        split = _best_split(z, y)
        if split is not None:
            _, dim, thr = split
            left = z[:, dim] < thr
            stats["internal"] += 1
            return [
                dim,
                thr,
                _grow_tree(z[left], y[left], depth + 1, max_depth, stats),
                _grow_tree(z[~left], y[~left], depth + 1, max_depth, stats),
            ]
    stats["leaves"] += 1
    if depth == max_depth and len(y) > 1 and _best_split(z, y) is not None:
        stats["open"] = True
    return [y.mean(axis=0).tolist()]


def _fit_dtr(inp: FitInput, complexity: int) -> ModelArtifact:
    z = standardize(inp.predictors, inp.domain)
    stats = {"internal": 0, "leaves": 0, "open": False}
    tree = _grow_tree(z, inp.responses, 0, complexity, stats)
    return ModelArtifact(
        "dtr",
        complexity,
        {"tree": tree},
        2 * stats["internal"] + inp.n_features * stats["leaves"],
        inp.domain,
        not stats["open"],
    )


def _predict_dtr(m: ModelArtifact, x: np.ndarray) -> np.ndarray:
    z = standardize(x, m.domain)
    out = []
    for row in z:
        node = m.payload["tree"]
        while len(node) == 4:
            node = node[2] if row[node[0]] < node[1] else node[3]
        out.append(node[0])
    return np.asarray(out, dtype=float).reshape(len(z), -1)


def tree_counts(tree: list) -> tuple[int, int]:
    """(internal nodes, leaves) of a serialized tree."""
    if len(tree) == 4:
        a = tree_counts(tree[2])
        b = tree_counts(tree[3])
        return 1 + a[0] + b[0], a[1] + b[1]
    return 0, 1


# --------------------------------------------------------------------------
# public surface

_FIT = {"plr": _fit_plr, "dct": _fit_dct, "dtr": _fit_dtr}


def fit(technique: str, inp: FitInput, complexity: int) -> ModelArtifact:
    """Fit ``technique`` at ladder level ``complexity``.

    A single-instance input always yields the saturated complexity-1 model.
    """
    if technique not in TECHNIQUES:
        raise DataError(f"unknown technique {technique!r}")
    if complexity < 1:
        raise DataError("complexity must be >= 1")
    if inp.n == 1:
        m = _FIT[technique](inp, 1)
        return ModelArtifact(m.technique, 1, m.payload, m.coefficient_count, m.domain, True)
    return _FIT[technique](inp, complexity)


def fit_cluster(technique: str, inputs: Sequence[FitInput], complexity: int) -> ModelArtifact:
    """One model over the concatenated instances of a cluster's regions."""
    return fit(technique, cluster_input(inputs), complexity)


def predict(m: ModelArtifact, predictors=None, positions=None) -> np.ndarray:
    """Model output, one row per query.

    PLR and DTR take raw ``predictors`` rows (time, coordinates...). DCT is
    indexed by position in the fitted sequence and takes ``positions``.
    """
    if m.technique == "dct":
        if positions is None:
            raise OutsideModelDomain("DCT models are evaluated at sequence positions only")
        pos = np.asarray(positions, dtype=np.int64).ravel()
        n = int(m.payload["n"])
        if pos.size and (pos.min() < 0 or pos.max() >= n):
            raise OutsideModelDomain(f"DCT positions must lie in [0, {n})")
        return dct_sequence(m)[pos]
    if predictors is None:
        raise DataError("predictors are required for PLR and DTR models")
    x = np.asarray(predictors, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if m.technique == "plr":
        return _predict_plr(m, x)
    return _predict_dtr(m, x)


def fitted_values(m: ModelArtifact, inp: FitInput) -> np.ndarray:
    """In-sample predictions in the input's canonical order."""
    if m.technique == "dct":
        return dct_sequence(m)
    return predict(m, inp.predictors)


def sse(m: ModelArtifact, inp: FitInput) -> np.ndarray:
    """Per-feature sum of squared residuals on the fitted input."""
    return np.sum((inp.responses - fitted_values(m, inp)) ** 2, axis=0)


def model_storage_cost(m: ModelArtifact) -> int:
    """Recount storage units from the payload alone."""
    if m.technique == "plr":
        coef = np.asarray(m.payload["coef"])
        return int(coef.size)
    if m.technique == "dct":
        return sum(1 + 2 * len(idx) for idx in m.payload["idx"])
    internal, leaves = tree_counts(m.payload["tree"])
    n_features = len(_first_leaf(m.payload["tree"]))
    return 2 * internal + n_features * leaves


def _first_leaf(tree: list) -> list:
    while len(tree) == 4:
        tree = tree[2]
    return tree[0]
