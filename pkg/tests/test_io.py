import math

import numpy as np
import pytest

from bdsoc import io


def test_csv_roundtrip_with_meta(tmp_path):
    rows = [[1, 0.1, True], [np.int64(2), np.float64(1e-17), 0]]
    path = io.write_csv(tmp_path / "a" / "t.csv", ["i", "x", "flag"], rows, {"seed": 3, "model": "zero"})
    meta, cols, rows = io.read_csv(path)
    assert meta == {"model": "zero", "seed": "3"}
    assert cols == ["i", "x", "flag"]
    assert rows == [["1", "0.1", "1"], ["2", "1e-17", "0"]]
    assert float(rows[1][1]) == 1e-17


def test_csv_bytes_are_deterministic(tmp_path):
    rows = [[0.1 + 0.2, 1 / 3]]
    a = io.write_csv(tmp_path / "a.csv", ["x", "y"], rows, {"b": 1, "a": 2}).read_bytes()
    b = io.write_csv(tmp_path / "b.csv", ["x", "y"], rows, {"a": 2, "b": 1}).read_bytes()
    assert a == b
    assert a.startswith(b"# a=2\n# b=1\n")


def test_read_csv_without_header(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("# k=v\n")
    with pytest.raises(ValueError):
        io.read_csv(p)


def test_json_roundtrip_and_non_finite(tmp_path):
    p = io.write_json(tmp_path / "s.json", {"b": [1.0, math.nan, -math.inf], "a": np.float64(2.5),
                                            "c": np.bool_(True), "d": np.float64(np.inf)})
    assert io.read_json(p) == {"a": 2.5, "b": [1.0, None, "-inf"], "c": True, "d": "inf"}


def test_config_and_values(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('model = "martingale"\n[simulation]\nseed = 3\nx0 = [0.5]\n')
    cfg = io.load_config(p)
    assert cfg["model"] == "martingale" and cfg["simulation"]["x0"] == [0.5]
    assert io.parse_value("0.5") == 0.5
    assert io.parse_value("[1, 2]") == [1, 2]
    assert io.parse_value("true") is True
    assert io.parse_value("grid-DP") == "grid-DP"
