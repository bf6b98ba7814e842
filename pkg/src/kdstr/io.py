"""CSV input and output.

One row per instance. The time column holds epoch seconds (integer or
decimal) or ISO-8601 timestamps. Sensors are identified by their
coordinates; ids follow first appearance in the file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .errors import DuplicateInstance, NonFiniteValue, ParseError
from .types import Dataset


@dataclass(frozen=True)
class CsvSchema:
    """Column mapping.

    ``features=None`` takes every unmapped column, except that a column named
    ``sensor`` is then read as the sensor label rather than as a feature.
    """

    time: str = "time"
    coords: tuple[str, ...] = ("x", "y")
    features: tuple[str, ...] | None = None
    sensor: str | None = None


def parse_time(text: str) -> float:
    s = text.strip()
    try:
        return float(int(s))
    except ValueError:
        pass
    try:
        v = float(s)
    except ValueError:
        v = None
    if v is not None:
        return v
    try:
        dt = datetime.fromisoformat(s.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValueError(f"unreadable time {text!r}") from exc
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _number(text: str, what: str) -> float:
    try:
        return float(text.strip())
    except ValueError as exc:
        raise ValueError(f"{what} {text!r} is not a number") from exc


def read_csv(stream: IO[str], schema: CsvSchema | None = None) -> Dataset:
    schema = schema or CsvSchema()
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file: a header row is required") from None
    if schema.sensor is None and schema.features is None and "sensor" in header:
        schema = CsvSchema(schema.time, schema.coords, None, "sensor")
    missing = [c for c in (schema.time, *schema.coords) if c not in header]
    if schema.sensor is not None and schema.sensor not in header:
        missing.append(schema.sensor)
    if missing:
        raise ParseError(f"line 1: missing column(s) {', '.join(missing)}")
    mapped = {schema.time, *schema.coords} | ({schema.sensor} if schema.sensor else set())
    features = schema.features if schema.features is not None else tuple(h for h in header if h not in mapped)
    absent = [f for f in features if f not in header]
    if absent:
        raise ParseError(f"line 1: missing feature column(s) {', '.join(absent)}")
    if not features:
        raise ParseError("line 1: no feature columns")
    col = {h: i for i, h in enumerate(header)}

    sensor_ids: dict[tuple[float, ...], int] = {}
    sensor_names: list[str] = []
    times, sensors, values, lines = [], [], [], []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"line {line}: expected {len(header)} fields, found {len(row)}")
        try:
            t = parse_time(row[col[schema.time]])
            xy = tuple(_number(row[col[c]], c) for c in schema.coords)
            vals = [_number(row[col[f]], f) for f in features]
        except ValueError as exc:
            raise ParseError(f"line {line}: {exc}") from None
        if not all(math.isfinite(v) for v in (t, *xy)):
            raise NonFiniteValue(f"line {line}: non-finite time or coordinate")
        if not all(math.isfinite(v) for v in vals):
            raise NonFiniteValue(f"line {line}: non-finite feature value")
        sid = sensor_ids.get(xy)
        if sid is None:
            sid = sensor_ids[xy] = len(sensor_ids)
            sensor_names.append(row[col[schema.sensor]].strip() if schema.sensor else str(sid))
        times.append(t)
        sensors.append(sid)
        values.append(vals)
        lines.append(line)
    if not times:
        raise ParseError("no data rows")

    uniq, ts = np.unique(np.asarray(times), return_inverse=True)
    ss = np.asarray(sensors, dtype=np.int64)
    seen: dict[tuple[int, int], int] = {}
    for i, key in enumerate(zip(ts.tolist(), ss.tolist())):
        if key in seen:
            raise DuplicateInstance(
                f"lines {lines[seen[key]]} and {lines[i]} share time {uniq[key[0]]} and sensor {sensor_names[key[1]]}"
            )
        seen[key] = i
    coords = np.array(list(sensor_ids), dtype=float).reshape(len(sensor_ids), len(schema.coords))
    return Dataset(coords, uniq, tuple(features), ts, ss, np.asarray(values, dtype=float), tuple(sensor_names))


def load_csv(path: str | Path, schema: CsvSchema | None = None) -> Dataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_csv(fh, schema)


def write_csv(d: Dataset, stream: IO[str], coord_names: Sequence[str] | None = None) -> None:
    """Inverse of :func:`read_csv` with numeric times and a ``sensor`` column."""
    coord_names = list(coord_names or (["x", "y"] if d.spatial_dims == 2 else [f"x{i}" for i in range(d.spatial_dims)]))
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(["sensor", "time", *coord_names, *d.feature_names])
    names = d.sensor_names or tuple(str(i) for i in range(d.n_sensors))
    for t, s, v in zip(d.timestep, d.sensor, d.values):
        w.writerow([names[s], repr(float(d.times[t])), *(repr(float(c)) for c in d.sensor_coords[s]), *(repr(float(x)) for x in v)])
