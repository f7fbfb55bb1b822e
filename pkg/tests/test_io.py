import json

import numpy as np
import pytest

from liouville_lab import io as lio
from liouville_lab.errors import UsageError


def test_field_csv_roundtrip(tmp_path, lat16):
    u = np.random.default_rng(0).standard_normal(lat16.n)
    lio.write_field_csv(tmp_path / "u.csv", lat16, u)
    pts, vals = lio.read_field_csv(tmp_path / "u.csv")
    assert np.array_equal(vals, u) and np.array_equal(pts, lat16.points)


def test_field_binary_roundtrip(tmp_path, lat16):
    u = np.random.default_rng(1).standard_normal(lat16.n)
    lio.write_field_binary(tmp_path / "u.bin", lat16, u)
    h, vals = lio.read_field_binary(tmp_path / "u.bin")
    assert h == lat16.h and np.array_equal(vals, u)
    raw = (tmp_path / "u.bin").read_bytes()
    assert raw[:8] == lio.MAGIC and len(raw) == 24 + 8 * lat16.n


def test_binary_rejects_garbage(tmp_path, lat16):
    (tmp_path / "x.bin").write_bytes(b"NOTAFILE" + bytes(16))
    with pytest.raises(UsageError):
        lio.read_field_binary(tmp_path / "x.bin")
    lio.write_field_binary(tmp_path / "y.bin", lat16, np.zeros(lat16.n))
    (tmp_path / "z.bin").write_bytes((tmp_path / "y.bin").read_bytes()[:-8])
    with pytest.raises(UsageError):
        lio.read_field_binary(tmp_path / "z.bin")
    with pytest.raises(UsageError):
        lio.write_field_csv(tmp_path / "w.csv", lat16, np.zeros(3))


def test_json_conversion(tmp_path):
    payload = {"a": np.float64(1.5), "b": np.arange(3), "c": np.bool_(True), "d": float("nan"),
               "e": (np.int32(2),)}
    lio.write_json(tmp_path / "p.json", payload)
    back = json.loads((tmp_path / "p.json").read_text())
    assert back == {"a": 1.5, "b": [0, 1, 2], "c": True, "d": "nan", "e": [2]}


def test_table_csv_column_order(tmp_path):
    lio.write_table_csv(tmp_path / "t.csv", [{"b": 1, "a": 2}, {"a": 3, "c": 4}])
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "b,a,c"


def test_measure_csv(tmp_path, lat8):
    lio.write_measure_csv(tmp_path / "m.csv", lat8, np.ones(lat8.n))
    assert (tmp_path / "m.csv").read_text().splitlines()[0] == "x,y,weight"
