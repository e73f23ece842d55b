import json

import numpy as np
import pytest

from inhomfield import io
from inhomfield.covariance import green_matrix
from inhomfield.errors import ConfigError
from inhomfield.geometry import BoxSpec


def test_matrix_round_trip(tmp_path):
    G = green_matrix(BoxSpec(3)).matrix
    p = io.write_matrix(tmp_path / "g.bin", G, 8)
    M, index = io.read_matrix(p)
    assert np.array_equal(M, G)
    assert tuple(index[9]) == (1, 1)


def test_matrix_shape_guard(tmp_path):
    with pytest.raises(ConfigError):
        io.write_matrix(tmp_path / "x.bin", np.eye(5), 2)


def test_matrix_csv(tmp_path):
    p = io.write_matrix_csv(tmp_path / "m.csv", np.arange(16.0).reshape(4, 4), 2)
    rows = io.read_csv(p)
    assert len(rows) == 16
    assert rows[7] == {"ux": "0", "uy": "1", "vx": "1", "vy": "1", "cov": "7.0"}


def test_field_round_trip(tmp_path, rng):
    V = rng.standard_normal((3, 8, 8))
    p = io.write_field(tmp_path / "f.bin", V, "mibrw", seed=7, replica=2, params={"N": 8})
    W, head = io.read_field(p)
    assert np.array_equal(V, W)
    assert head == {"model": "mibrw", "N": 8, "count": 3, "seed": 7, "replica": 2, "component": 0}
    assert json.loads((tmp_path / "f.bin.json").read_text())["params"] == {"N": 8}


def test_bad_magic(tmp_path):
    (tmp_path / "z").write_bytes(b"\0" * 64)
    with pytest.raises(ConfigError):
        io.read_matrix(tmp_path / "z")
    with pytest.raises(ConfigError):
        io.read_field(tmp_path / "z")


def test_json_numpy_and_csv_floats(tmp_path):
    obj = {"a": np.float64(0.1), "b": np.arange(3), "c": None}
    assert io.read_json(io.write_json(tmp_path / "o.json", obj)) == {"a": 0.1, "b": [0, 1, 2], "c": None}
    rows = io.read_csv(io.write_csv(tmp_path / "t.csv", [{"x": 1 / 3, "y": None}]))
    assert float(rows[0]["x"]) == 1 / 3 and rows[0]["y"] == ""


def test_sha256(tmp_path):
    (tmp_path / "e").write_bytes(b"")
    assert io.sha256_file(tmp_path / "e").startswith("e3b0c442")
