"""Reduction file formats.

Binary container::

    magic   6 bytes  b"KDSTR\\0"
    major   uint16   little-endian
    minor   uint16
    crc32   uint32   of the compressed body
    length  uint64   of the compressed body
    body    zlib-compressed UTF-8 JSON document

The JSON document is also available on its own (``to_json``) for
inspection. Both are lossless: floats are written with ``repr`` precision.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

from .errors import CorruptPayload, VersionMismatch
from .types import ModelArtifact, Reduction, Region

MAGIC = b"KDSTR\x00"
FORMAT_MAJOR = 1
FORMAT_MINOR = 0
_HEADER = struct.Struct("<6sHHIQ")


def to_document(r: Reduction) -> dict:
    return {
        "format": {"major": FORMAT_MAJOR, "minor": FORMAT_MINOR},
        "header": {
            "k": r.k,
            "spatial_dims": r.spatial_dims,
            "n_features": len(r.feature_names),
            "feature_names": list(r.feature_names),
            "alpha": r.alpha,
            "technique": r.technique,
            "link_mode": r.link_mode,
            "error_metric": r.error_metric,
            "times": list(r.times),
            "final_error": r.final_error,
            "final_storage_ratio": r.final_storage_ratio,
        },
        "regions": [
            {
                "id": reg.id,
                "sensors": list(reg.sensors),
                "t_begin": reg.t_begin,
                "t_end": reg.t_end,
                "outline": [list(p) for p in reg.outline],
                "cluster": reg.cluster,
                "model": r.region_model[reg.id],
            }
            for reg in r.regions
        ],
        "models": [
            {
                "technique": m.technique,
                "complexity": m.complexity,
                "coefficient_count": m.coefficient_count,
                "domain": [list(m.domain[0]), list(m.domain[1])],
                "saturated": m.saturated,
                "payload": m.payload,
            }
            for m in r.models
        ],
        "meta": dict(r.meta),
    }


def from_document(doc: dict) -> Reduction:
    try:
        fmt = doc["format"]
        if int(fmt["major"]) != FORMAT_MAJOR:
            raise VersionMismatch(f"file format {fmt['major']}.{fmt['minor']} is not readable by {FORMAT_MAJOR}.x")
        h = doc["header"]
        regions = tuple(
            Region(
                id=int(x["id"]),
                sensors=tuple(int(s) for s in x["sensors"]),
                t_begin=int(x["t_begin"]),
                t_end=int(x["t_end"]),
                outline=tuple(tuple(float(c) for c in p) for p in x["outline"]),
                cluster=int(x["cluster"]),
            )
            for x in doc["regions"]
        )
        models = tuple(
            ModelArtifact(
                technique=m["technique"],
                complexity=int(m["complexity"]),
                payload=m["payload"],
                coefficient_count=int(m["coefficient_count"]),
                domain=(tuple(map(float, m["domain"][0])), tuple(map(float, m["domain"][1]))),
                saturated=bool(m["saturated"]),
            )
            for m in doc["models"]
        )
        region_model = {int(x["id"]): int(x["model"]) for x in doc["regions"]}
        if any(not 0 <= mi < len(models) for mi in region_model.values()):
            raise CorruptPayload("region links to a missing model")
        return Reduction(
            regions=regions,
            models=models,
            link_mode=h["link_mode"],
            region_model=region_model,
            alpha=float(h["alpha"]),
            error_metric=h["error_metric"],
            technique=h["technique"],
            feature_names=tuple(h["feature_names"]),
            times=tuple(float(t) for t in h["times"]),
            spatial_dims=int(h["spatial_dims"]),
            final_error=float(h["final_error"]),
            final_storage_ratio=float(h["final_storage_ratio"]),
            meta=doc.get("meta", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, (VersionMismatch, CorruptPayload)):
            raise
        raise CorruptPayload(f"malformed reduction document: {exc!r}") from exc


def to_json(r: Reduction, indent: int | None = 1) -> str:
    return json.dumps(to_document(r), indent=indent)


def from_json(text: str) -> Reduction:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorruptPayload(f"not a JSON reduction: {exc}") from exc
    return from_document(doc)


def serialize(r: Reduction) -> bytes:
    body = zlib.compress(json.dumps(to_document(r), separators=(",", ":")).encode("utf-8"), 9)
    return _HEADER.pack(MAGIC, FORMAT_MAJOR, FORMAT_MINOR, zlib.crc32(body), len(body)) + body


def deserialize(data: bytes) -> Reduction:
    if len(data) < _HEADER.size:
        raise CorruptPayload("file is shorter than the header")
    magic, major, minor, crc, length = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptPayload("not a reduction file (bad magic)")
    if major != FORMAT_MAJOR:
        raise VersionMismatch(f"file format {major}.{minor} is not readable by {FORMAT_MAJOR}.x")
    body = data[_HEADER.size :]
    if len(body) != length:
        raise CorruptPayload(f"body is {len(body)} bytes, header says {length}")
    if zlib.crc32(body) != crc:
        raise CorruptPayload("checksum mismatch")
    try:
        text = zlib.decompress(body).decode("utf-8")
    except (zlib.error, UnicodeDecodeError) as exc:
        raise CorruptPayload(f"cannot decompress body: {exc}") from exc
    return from_json(text)


def write_reduction(path: str | Path, r: Reduction, fmt: str = "binary") -> None:
    p = Path(path)
    if fmt == "json":
        p.write_text(to_json(r), encoding="utf-8")
    else:
        p.write_bytes(serialize(r))


def read_reduction(path: str | Path) -> Reduction:
    """Read either format; the binary one is recognised by its magic bytes."""
    data = Path(path).read_bytes()
    if data.startswith(MAGIC):
        return deserialize(data)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorruptPayload("neither a binary nor a JSON reduction") from exc
    return from_json(text)
