import json

import numpy as np
import pytest

from fracfp.io import (
    atomic_write_json,
    read_field_binary,
    read_field_csv,
    sha256_file,
    write_field_binary,
    write_field_csv,
)
from fracfp.spectral import Field, Grid


@pytest.mark.parametrize("dim", [1, 2])
def test_csv_roundtrip_is_exact(tmp_path, dim):
    g = Grid(dim, 16, 1.5)
    f = Field(g, np.random.default_rng(0).standard_normal(g.shape))
    back = read_field_csv(write_field_csv(f, tmp_path / "f.csv"))
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_binary_roundtrip_and_size_check(tmp_path):
    g = Grid(3, 8, 2.0)
    f = Field(g, np.arange(g.size, dtype=float).reshape(g.shape))
    p = write_field_binary(f, tmp_path / "f.bin")
    assert p.stat().st_size == 24 + 8 * g.size
    back = read_field_binary(p)
    assert back.grid == g and np.array_equal(back.values, f.values)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError):
        read_field_binary(p)


def test_checksum_is_deterministic(tmp_path):
    g = Grid(1, 16, 1.0)
    f = Field.from_function(g, np.sin)
    a = sha256_file(write_field_csv(f, tmp_path / "a.csv"))
    b = sha256_file(write_field_csv(f, tmp_path / "b.csv"))
    assert a == b and len(a) == 64


def test_atomic_json_handles_numpy(tmp_path):
    p = atomic_write_json({"x": np.float64(1.5), "a": np.arange(3), "p": tmp_path}, tmp_path / "r.json")
    data = json.loads(p.read_text())
    assert data["x"] == 1.5 and data["a"] == [0, 1, 2]
    assert not (tmp_path / "r.json.tmp").exists()
