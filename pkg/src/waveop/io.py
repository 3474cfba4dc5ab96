"""Binary field files, JSON summaries and CSV tables."""

import csv
import dataclasses
import json
import logging
import math
import struct
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import FieldFormatError
from .fields import Grid3, ScalarField

LOG = logging.getLogger("waveop.io")

MAGIC = b"WOPF"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sIId")
RAW_ARRAY_MARKER = 0


def _encode(values: np.ndarray) -> bytes:
    flat = np.asarray(values, dtype=np.complex128).ravel(order="F")
    return flat.astype("<c16").tobytes()


def write_field(path: Path, f: ScalarField) -> None:
    """Write a field: header then little-endian (re, im) pairs, x fastest."""
    path = Path(path)
    header = HEADER.pack(MAGIC, FORMAT_VERSION, f.grid.n_per_axis, f.grid.box_length)
    path.write_bytes(header + _encode(f.values))
    LOG.debug("Wrote field %s (n=%d)", path, f.grid.n_per_axis)


def _read_payload(path: Path) -> tuple[int, float, np.ndarray]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as e:
        LOG.error("Field file not found: %s", e)
        raise
    except PermissionError as e:
        LOG.error("Permission denied when reading field file: %s", e)
        raise
    except OSError as e:
        LOG.error("I/O error while reading field file: %s", e)
        raise
    if len(data) < HEADER.size:
        raise FieldFormatError(f"{path} is too short for a field header", path=str(path))
    magic, version, n, box = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"{path} is not a field file (magic {magic!r})", path=str(path))
    if version != FORMAT_VERSION:
        raise FieldFormatError(f"unsupported field format version {version}", path=str(path), version=version)
    body = data[HEADER.size :]
    if len(body) % 16:
        raise FieldFormatError(f"{path} has a truncated payload", path=str(path))
    return n, box, np.frombuffer(body, dtype="<c16").astype(np.complex128)


def read_field(path: Path) -> ScalarField:
    n, box, flat = _read_payload(path)
    if n == RAW_ARRAY_MARKER:
        raise FieldFormatError(f"{path} holds a raw array, not a grid field", path=str(path))
    if flat.size != n**3 or not math.isfinite(box):
        raise FieldFormatError(f"{path}: payload does not match n={n}", path=str(path))
    return ScalarField(Grid3(n, box), flat.reshape((n, n, n), order="F"))


def write_array(path: Path, values: np.ndarray) -> None:
    """Write an arbitrary complex array with the field header (n = 0 marks raw data)."""
    header = HEADER.pack(MAGIC, FORMAT_VERSION, RAW_ARRAY_MARKER, 0.0)
    Path(path).write_bytes(header + _encode(values))


def read_array(path: Path, shape: Sequence[int]) -> np.ndarray:
    n, _box, flat = _read_payload(path)
    if n != RAW_ARRAY_MARKER:
        raise FieldFormatError(f"{path} holds a grid field, not a raw array", path=str(path))
    if flat.size != int(np.prod(shape)):
        raise FieldFormatError(f"{path}: payload size {flat.size} does not match shape {tuple(shape)}")
    return flat.reshape(tuple(shape), order="F")


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": _jsonable(float(value.real)), "im": _jsonable(float(value.imag))}
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return _jsonable({f.name: getattr(value, f.name) for f in dataclasses.fields(value)})
    if isinstance(value, Path):
        return str(value)
    return value


def to_json(payload: Any) -> str:
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True)


def write_json(path: Path, payload: Any) -> None:
    Path(path).write_text(to_json(payload) + "\n", encoding="utf-8")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
