"""Error metrics, reconstruction and imputation from a reduction."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import KeyMismatch, OutsideAllRegions, TechniqueCannotImpute, UnassignedInstance, ZeroValueInData
from .geometry import discretize_time, point_in_outline, ring_area
from .modeling import dct_sequence, predict, region_rows
from .types import Dataset, Reduction, Region


def _check_keys(d: Dataset, d_prime: Dataset) -> None:
    if not d.same_keys(d_prime):
        raise KeyMismatch("datasets differ in instance keys or feature count")


def nrmse_details(d: Dataset, d_prime: Dataset) -> dict:
    """Per-feature RMSE/range plus the mean over features with non-zero range.

    Features whose range is 0 cannot be normalised; they are left out of the
    mean and listed under ``excluded`` with their raw RMSE.
    """
    _check_keys(d, d_prime)
    if d.n_instances == 0:
        return {"nrmse": 0.0, "per_feature": [], "excluded": {}}
    diff = d.values - d_prime.values
    rmse = np.sqrt(np.mean(diff**2, axis=0))
    rng = d.values.max(axis=0) - d.values.min(axis=0)
    per_feature, excluded = [], {}
    for f, name in enumerate(d.feature_names):
        if rng[f] > 0:
            per_feature.append(float(rmse[f] / rng[f]))
        else:
            excluded[name] = float(rmse[f])
    value = float(np.mean(per_feature)) if per_feature else 0.0
    return {"nrmse": value, "per_feature": per_feature, "excluded": excluded}


def nrmse(d: Dataset, d_prime: Dataset) -> float:
    return nrmse_details(d, d_prime)["nrmse"]


def check_mape_defined(d: Dataset) -> None:
    if np.any(d.values == 0):
        raise ZeroValueInData("MAPE is undefined when a feature value is 0")


def mape(d: Dataset, d_prime: Dataset) -> float:
    _check_keys(d, d_prime)
    check_mape_defined(d)
    if d.n_instances == 0:
        return 0.0
    return float(np.mean(np.abs((d.values - d_prime.values) / d.values)))


def error(metric: str, d: Dataset, d_prime: Dataset) -> float:
    return mape(d, d_prime) if metric == "mape" else nrmse(d, d_prime)


def model_groups(r: Reduction) -> dict[int, list[Region]]:
    """Regions linked to each model index, in ascending region id."""
    groups: dict[int, list[Region]] = {}
    for reg in sorted(r.regions, key=lambda reg: reg.id):
        groups.setdefault(r.region_model[reg.id], []).append(reg)
    return groups


def reconstruct_values(d: Dataset, r: Reduction) -> np.ndarray:
    if d.n_times and len(r.times) != d.n_times:
        raise KeyMismatch("reduction and dataset have different time axes")
    out = np.full((d.n_instances, len(r.feature_names)), np.nan)
    covered = np.zeros(d.n_instances, dtype=np.int64)
    for mi, regions in model_groups(r).items():
        m = r.models[mi]
        rows = [region_rows(d, reg) for reg in regions]
        allrows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
        if m.technique == "dct":
            seq = dct_sequence(m)
            if len(seq) != len(allrows):
                raise KeyMismatch("DCT sequence length does not match its regions' instances")
            out[allrows] = seq
        elif len(allrows):
            out[allrows] = predict(m, d.predictors[allrows])
        covered[allrows] += 1
    if np.any(covered != 1):
        i = int(np.argmax(covered != 1))
        raise UnassignedInstance(
            f"instance (timestep {d.timestep[i]}, sensor {d.sensor[i]}) is covered by {covered[i]} regions"
        )
    return out


def reconstruct(d: Dataset, r: Reduction) -> Dataset:
    """The dataset as modelled by ``r``: same keys, modelled feature values."""
    if d.n_features != len(r.feature_names):
        raise KeyMismatch("feature count differs between dataset and reduction")
    return d.with_values(reconstruct_values(d, r))


def _outline_size(outline: Sequence[Sequence[float]]) -> float:
    if len(outline) == 2 and len(outline[0]) == 1:
        return abs(outline[1][0] - outline[0][0])
    return abs(ring_area(outline))


def locate(r: Reduction, time: float, location: Sequence[float]) -> Region:
    """Region whose closed block contains the query.

    When several outlines contain the point (an outer ring may enclose a
    region sitting in a hole of another), the smallest outline wins, then the
    lowest id.
    """
    bounds = discretize_time(r.times)
    loc = np.atleast_1d(np.asarray(location, dtype=float))
    if loc.size != r.spatial_dims:
        raise KeyMismatch(f"location must have {r.spatial_dims} coordinates")
    hits = []
    for reg in r.regions:
        if not bounds[reg.t_begin] <= time <= bounds[reg.t_end + 1]:
            continue
        if point_in_outline(loc, reg.outline):
            hits.append((_outline_size(reg.outline), reg.id, reg))
    if not hits:
        raise OutsideAllRegions(f"no region contains time {time} at {tuple(loc)}")
    return min(hits, key=lambda h: (h[0], h[1]))[2]


def impute(r: Reduction, time: float, location: Sequence[float]) -> np.ndarray:
    """Model value at an arbitrary point inside some region's block."""
    if r.technique == "dct":
        raise TechniqueCannotImpute("DCT models are sequence-indexed and cannot impute off-sample points")
    reg = locate(r, time, location)
    m = r.model_for(reg.id)
    x = np.concatenate([[float(time)], np.atleast_1d(np.asarray(location, dtype=float))])
    return predict(m, x[None, :])[0]
