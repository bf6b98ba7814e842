"""Parameter sweeps and the lossless-compression baseline."""

from __future__ import annotations

import csv
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from typing import IO, Iterable, Sequence

import numpy as np

from .engine import Prepared, ReductionConfig, prepare, reduce
from .errors import KDSTRError
from .metrics import nrmse, reconstruct
from .types import LINK_MODES, TECHNIQUES, Dataset

DEFAULT_ALPHAS = (0.1, 0.25, 0.5, 0.75, 0.9)
SWEEP_COLUMNS = (
    "alpha",
    "technique",
    "link_mode",
    "nrmse",
    "storage_ratio",
    "regions",
    "models",
    "max_complexity_used",
    "iterations",
    "strict_descent",
    "wall_time",
    "status",
    "message",
)


def _strictly_decreasing(hs: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(hs, hs[1:]))


def _run_cell(d: Dataset, prepared: Prepared, cfg: ReductionConfig) -> dict:
    started = time.perf_counter()
    row = {"alpha": cfg.alpha, "technique": cfg.technique, "link_mode": cfg.link_mode}
    try:
        r = reduce(d, cfg, prepared)
        row.update(
            nrmse=nrmse(d, reconstruct(d, r)),
            storage_ratio=r.final_storage_ratio,
            regions=len(r.regions),
            models=len(r.models),
            max_complexity_used=max(m.complexity for m in r.models),
            iterations=r.meta["iterations"],
            strict_descent=_strictly_decreasing([e["h"] for e in r.meta["log"]]),
            status="ok",
            message="",
        )
    except KDSTRError as exc:
        row.update(status="error", message=f"{type(exc).__name__}: {exc}")
    row["wall_time"] = time.perf_counter() - started
    return row


def _run_cell_star(args):
    return _run_cell(*args)


def run_sweep(
    d: Dataset,
    alphas: Sequence[float] = DEFAULT_ALPHAS,
    techniques: Sequence[str] = TECHNIQUES,
    link_modes: Sequence[str] = LINK_MODES,
    error_metric: str = "nrmse",
    seed: int | None = None,
    max_complexity: int | None = None,
    jobs: int = 1,
    prepared: Prepared | None = None,
) -> list[dict]:
    """One reduction per (alpha, technique, link mode) cell.

    A failing cell becomes a row with ``status="error"``; the sweep goes on.
    Rows come back in grid order regardless of ``jobs``.
    """
    prepared = prepared if prepared is not None else prepare(d)
    extra = {} if max_complexity is None else {"max_complexity": max_complexity}
    cfgs = [
        ReductionConfig(alpha=a, technique=t, link_mode=lm, error_metric=error_metric, seed=seed, **extra)
        for a in alphas
        for t in techniques
        for lm in link_modes
    ]
    if jobs > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_cell_star, [(d, prepared, c) for c in cfgs]))
    return [_run_cell(d, prepared, c) for c in cfgs]


def write_rows(rows: Iterable[dict], stream: IO[str], columns: Sequence[str] = SWEEP_COLUMNS) -> None:
    writer = csv.DictWriter(stream, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)


def raw_table_bytes(d: Dataset) -> bytes:
    """Canonical binary layout: one little-endian float64 row (time, coordinates, features) per instance."""
    table = np.column_stack([d.predictors, d.values]) if d.n_instances else np.empty((0, d.k + d.n_features))
    return np.ascontiguousarray(table, dtype="<f8").tobytes()


def deflate_baseline(d: Dataset, level: int = 9) -> dict:
    """DEFLATE-compressed size of the raw table.

    The result is in bytes. Logical storage ratios count stored scalars, not
    bytes, so the two figures are not directly comparable.
    """
    raw = raw_table_bytes(d)
    packed = zlib.compress(raw, level)
    return {
        "raw_bytes": len(raw),
        "compressed_bytes": len(packed),
        "compression_ratio": len(packed) / len(raw) if raw else float("nan"),
        "basis": "bytes",
    }
