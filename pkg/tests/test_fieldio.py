import numpy as np
import pytest

from degparlog import ConfigurationError, Field, build_grid
from degparlog.fieldio import field_to_csv, load_field, read_raw, save_field


def test_roundtrip_1d(tmp_path):
    g = build_grid(1, (0, 1), 5)
    f = Field(g, [0.1, -2.5, 3.25, 0.0, 1e-12])
    path = tmp_path / "f.rdvi"
    save_field(path, f)
    back = load_field(path, g)
    assert np.array_equal(back.values, f.values)


def test_roundtrip_2d(tmp_path):
    g = build_grid(2, ((0, 2), (0, 1)), (4, 3))
    rng = np.random.RandomState(0)
    f = Field(g, rng.randn(12))
    path = tmp_path / "f.rdvi"
    save_field(path, f)
    dim, n, values = read_raw(path)
    assert (dim, n) == (2, (4, 3))
    assert np.array_equal(values, f.values)


def test_header_layout(tmp_path):
    g = build_grid(1, (0, 1), 3)
    path = tmp_path / "f.rdvi"
    save_field(path, Field(g, [1.0, 2.0, 3.0]))
    raw = path.read_bytes()
    assert raw[:5] == b"RDVI1"
    assert int.from_bytes(raw[5:9], "little") == 1
    assert int.from_bytes(raw[9:13], "little") == 3
    assert np.frombuffer(raw[13:], dtype="<f8").tolist() == [1.0, 2.0, 3.0]


def test_bad_magic_and_shape(tmp_path):
    path = tmp_path / "junk.rdvi"
    path.write_bytes(b"NOPE!" + b"\x00" * 20)
    with pytest.raises(ConfigurationError):
        read_raw(path)
    g = build_grid(1, (0, 1), 3)
    save_field(tmp_path / "f.rdvi", Field(g, [1.0, 2.0, 3.0]))
    with pytest.raises(ConfigurationError):
        load_field(tmp_path / "f.rdvi", build_grid(1, (0, 1), 4))


def test_csv_export(tmp_path):
    g = build_grid(2, ((0, 1), (0, 1)), (2, 2))
    f = Field(g, [1.0, 2.0, 3.0, 4.0])
    path = tmp_path / "f.csv"
    field_to_csv(path, f)
    lines = path.read_text().strip().splitlines()
    assert len(lines) == 4
    x, y, v = (float(t) for t in lines[0].split(","))
    assert (x, y, v) == (1 / 3, 1 / 3, 1.0)
