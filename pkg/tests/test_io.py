"""Tests for binary field files, JSON summaries and CSV tables."""

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from waveop.errors import FieldFormatError
from waveop.fields import Grid3, ScalarField, gaussian_field
from waveop.io import (
    HEADER,
    MAGIC,
    read_array,
    read_field,
    to_json,
    write_array,
    write_csv,
    write_field,
    write_json,
)


# ---------- Field files ----------


def test_field_file_layout(tmp_path, tiny_grid):
    f = gaussian_field(tiny_grid, 0.6, momentum=(1.0, 0.0, 0.0))
    path = tmp_path / "field.wopf"
    write_field(path, f)
    data = path.read_bytes()
    assert data[:4] == MAGIC
    assert len(data) == HEADER.size + 16 * tiny_grid.size
    loaded = read_field(path)
    assert loaded.grid == tiny_grid
    assert np.array_equal(loaded.values, f.values)


def test_field_file_is_x_fastest(tmp_path, tiny_grid):
    values = np.zeros(tiny_grid.shape, dtype=complex)
    values[1, 0, 0] = 2.0 + 3.0j
    write_field(tmp_path / "f.wopf", ScalarField(tiny_grid, values))
    body = np.frombuffer((tmp_path / "f.wopf").read_bytes()[HEADER.size :], dtype="<c16")
    assert body[1] == 2.0 + 3.0j


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.wopf"
    path.write_bytes(HEADER.pack(b"NOPE", 1, 2, 1.0) + bytes(16 * 8))
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_unsupported_version(tmp_path):
    path = tmp_path / "v9.wopf"
    path.write_bytes(HEADER.pack(MAGIC, 9, 2, 1.0) + bytes(16 * 8))
    with pytest.raises(FieldFormatError) as excinfo:
        read_field(path)
    assert excinfo.value.details["version"] == 9


def test_truncated_payload(tmp_path):
    path = tmp_path / "short.wopf"
    path.write_bytes(HEADER.pack(MAGIC, 1, 2, 1.0) + bytes(16 * 7))
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_header_too_short(tmp_path):
    path = tmp_path / "tiny.wopf"
    path.write_bytes(MAGIC)
    with pytest.raises(FieldFormatError):
        read_field(path)


def test_missing_field_file_is_logged(tmp_path, caplog):
    with caplog.at_level(logging.ERROR, logger="waveop.io"):
        with pytest.raises(FileNotFoundError):
            read_field(tmp_path / "absent.wopf")
    assert "not found" in caplog.text


# ---------- Raw arrays ----------


def test_raw_array_round_trip(tmp_path):
    values = np.arange(12, dtype=float).reshape(3, 4) * (1.0 - 0.5j)
    write_array(tmp_path / "a.wopf", values)
    assert np.array_equal(read_array(tmp_path / "a.wopf", (3, 4)), values)


def test_raw_array_is_not_a_field(tmp_path):
    write_array(tmp_path / "a.wopf", np.ones(8))
    with pytest.raises(FieldFormatError):
        read_field(tmp_path / "a.wopf")
    with pytest.raises(FieldFormatError):
        read_array(tmp_path / "a.wopf", (3, 3))


def test_field_is_not_a_raw_array(tmp_path, tiny_grid):
    write_field(tmp_path / "f.wopf", ScalarField.zeros(tiny_grid))
    with pytest.raises(FieldFormatError):
        read_array(tmp_path / "f.wopf", (tiny_grid.size,))


# ---------- JSON and CSV ----------


@dataclass
class _Row:
    name: str
    value: complex


def test_json_encodes_numeric_types():
    payload = {
        "z": 1.0 + 2.0j,
        "big": math.inf,
        "small": -math.inf,
        "nan": math.nan,
        "array": np.array([1, 2]),
        "flag": np.bool_(True),
        "path": Path("out/x.json"),
        "row": _Row("a", 1j),
    }
    decoded = json.loads(to_json(payload))
    assert decoded["z"] == {"re": 1.0, "im": 2.0}
    assert decoded["big"] == "inf"
    assert decoded["small"] == "-inf"
    assert decoded["nan"] == "nan"
    assert decoded["array"] == [1, 2]
    assert decoded["flag"] is True
    assert decoded["path"] == "out/x.json"
    assert decoded["row"] == {"name": "a", "value": {"re": 0.0, "im": 1.0}}


def test_write_json_ends_with_newline(tmp_path):
    write_json(tmp_path / "s.json", {"b": 1, "a": 2})
    text = (tmp_path / "s.json").read_text(encoding="utf-8")
    assert text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')


def test_csv_keeps_full_float_precision(tmp_path):
    write_csv(tmp_path / "t.csv", ["name", "value"], [("third", 1.0 / 3.0), ("n", 4)])
    with (tmp_path / "t.csv").open(newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["name", "value"]
    assert float(rows[1][1]) == 1.0 / 3.0
    assert rows[2] == ["n", "4"]


def test_grid_survives_round_trip_with_non_integer_box(tmp_path):
    grid = Grid3(2, 0.3)
    f = ScalarField(grid, np.full(8, 0.25 + 0.0j))
    write_field(tmp_path / "g.wopf", f)
    assert read_field(tmp_path / "g.wopf").grid == grid
