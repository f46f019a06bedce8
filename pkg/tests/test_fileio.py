"""Container formats: cubes, fields, library CSV, key=value files, PGM renders."""

import numpy as np
import pytest

from csunmix import GridGeometry, HyperCube, Library
from csunmix.fileio import (
    field_plane,
    read_cube,
    read_field,
    read_kv,
    read_library_csv,
    write_cube,
    write_field,
    write_kv,
    write_library_csv,
    write_pgm,
)


def _cube(seed=0, n_l=5, n_row=3, n_col=4):
    gen = np.random.default_rng(seed)
    return HyperCube(gen.random((n_l, n_row * n_col)), n_row, n_col)


# ----------------------------------------------------------------- cubes

def test_cube_roundtrip_bit_exact(tmp_path):
    cube = _cube()
    p = tmp_path / "scene.csucube"
    write_cube(p, cube)
    back = read_cube(p)
    assert np.array_equal(back.data, cube.data)
    assert (back.n_row, back.n_col) == (3, 4)
    # write(read(write(x))) is byte-identical to write(x)
    p2 = tmp_path / "again.csucube"
    write_cube(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_cube_header_is_plain_text(tmp_path):
    p = tmp_path / "scene.csucube"
    write_cube(p, _cube())
    head = p.read_bytes().split(b"end_header\n")[0]
    assert head.startswith(b"CSUCUBE1\n")
    assert b"bands=5" in head and b"rows=3" in head and b"cols=4" in head


@pytest.mark.parametrize(
    "mutate",
    [
        lambda b: b.replace(b"CSUCUBE1", b"CSUCUBE9"),          # bad magic
        lambda b: b[:-8],                                        # truncated payload
        lambda b: b + b"\x00" * 8,                               # oversize payload
        lambda b: b.replace(b"dtype=float64", b"dtype=float32"),
        lambda b: b.replace(b"bands=5", b"bands=x"),
        lambda b: b.replace(b"bands=5\n", b""),                  # missing key
    ],
)
def test_cube_read_rejects_corruption(tmp_path, mutate):
    p = tmp_path / "scene.csucube"
    write_cube(p, _cube())
    (tmp_path / "bad.csucube").write_bytes(mutate(p.read_bytes()))
    with pytest.raises(ValueError):
        read_cube(tmp_path / "bad.csucube")


def test_cube_read_missing_file(tmp_path):
    with pytest.raises(OSError):
        read_cube(tmp_path / "nope.csucube")


# ---------------------------------------------------------------- fields

def test_support_field_roundtrip(tmp_path):
    geom = GridGeometry(3, 4)
    z = (np.random.default_rng(1).random((2, 12)) < 0.5).astype(np.uint8)
    p = tmp_path / "z.csufield"
    write_field(p, z, geom, "support")
    arr, geom2, kind = read_field(p)
    assert kind == "support" and arr.dtype == np.uint8
    assert np.array_equal(arr, z)
    assert (geom2.n_row, geom2.n_col) == (3, 4)


@pytest.mark.parametrize("kind", ["abundance", "map"])
def test_float_field_roundtrip(tmp_path, kind):
    geom = GridGeometry(2, 5)
    vals = np.random.default_rng(2).random((3, 10))
    p = tmp_path / "a.csufield"
    write_field(p, vals, geom, kind)
    arr, geom2, kind2 = read_field(p)
    assert kind2 == kind
    assert np.array_equal(arr, vals)  # float64 payload is lossless
    p2 = tmp_path / "b.csufield"
    write_field(p2, arr, geom2, kind2)
    assert p.read_bytes() == p2.read_bytes()


def test_write_field_validation(tmp_path):
    geom = GridGeometry(2, 2)
    with pytest.raises(ValueError):
        write_field(tmp_path / "x", np.ones((2, 4)), geom, "image")
    with pytest.raises(ValueError):
        write_field(tmp_path / "x", np.ones((2, 3)), geom, "map")
    with pytest.raises(ValueError):
        write_field(tmp_path / "x", np.full((2, 4), 2.0), geom, "support")
    with pytest.raises(ValueError):
        write_field(tmp_path / "x", np.full((2, 4), np.nan), geom, "map")


def test_read_field_rejects_nonbinary_support(tmp_path):
    geom = GridGeometry(1, 2)
    p = tmp_path / "z.csufield"
    write_field(p, np.array([[1, 0]], dtype=np.uint8), geom, "support")
    raw = bytearray(p.read_bytes())
    raw[-1] = 7  # corrupt one payload byte
    (tmp_path / "bad.csufield").write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        read_field(tmp_path / "bad.csufield")


def test_read_field_rejects_wrong_kind_or_size(tmp_path):
    geom = GridGeometry(1, 2)
    p = tmp_path / "z.csufield"
    write_field(p, np.array([[1, 0]], dtype=np.uint8), geom, "support")
    raw = p.read_bytes()
    (tmp_path / "k.csufield").write_bytes(raw.replace(b"kind=support", b"kind=picture"))
    with pytest.raises(ValueError):
        read_field(tmp_path / "k.csufield")
    (tmp_path / "s.csufield").write_bytes(raw + b"\x01")
    with pytest.raises(ValueError):
        read_field(tmp_path / "s.csufield")


# --------------------------------------------------------------- library

def test_library_csv_roundtrip(tmp_path):
    gen = np.random.default_rng(3)
    lib = Library(0.05 + gen.random((6, 3)), names=("quartz", "calcite", "gypsum"))
    p = tmp_path / "lib.csv"
    write_library_csv(p, lib)
    back = read_library_csv(p)
    assert back.names == lib.names
    assert np.array_equal(back.data, lib.data)  # %.17g is float64-lossless
    p2 = tmp_path / "lib2.csv"
    write_library_csv(p2, back)
    assert p.read_bytes() == p2.read_bytes()


def test_library_csv_default_names(tmp_path):
    lib = Library(np.ones((4, 2)))
    p = tmp_path / "lib.csv"
    write_library_csv(p, lib)
    assert p.read_text().splitlines()[0] == "em_1,em_2"


def test_library_csv_rejects_malformed(tmp_path):
    p = tmp_path / "lib.csv"
    p.write_text("a,b\n1.0,2.0\n3.0\n")
    with pytest.raises(ValueError):
        read_library_csv(p)
    p.write_text("a,b\n1.0,zzz\n")
    with pytest.raises(ValueError):
        read_library_csv(p)
    p.write_text("")
    with pytest.raises(ValueError):
        read_library_csv(p)


# --------------------------------------------------------------- key=value

def test_kv_roundtrip_and_formatting(tmp_path):
    p = tmp_path / "manifest.txt"
    write_kv(p, {"rows": 30, "beta": 0.30000000000000004, "auto": True, "name": "x"})
    text = p.read_text()
    assert "beta=0.30000000000000004" in text  # full precision
    assert "auto=true" in text
    back = read_kv(p)
    assert back == {
        "rows": "30",
        "beta": "0.30000000000000004",
        "auto": "true",
        "name": "x",
    }
    assert float(back["beta"]) == 0.30000000000000004


def test_kv_comments_and_blanks_skipped(tmp_path):
    p = tmp_path / "conf.txt"
    p.write_text("# a comment\n\nkey = value \n#another\nn=3\n")
    assert read_kv(p) == {"key": "value", "n": "3"}
    p.write_text("no separator here\n")
    with pytest.raises(ValueError):
        read_kv(p)


def test_kv_empty_dict(tmp_path):
    p = tmp_path / "empty.txt"
    write_kv(p, {})
    assert p.read_bytes() == b""
    assert read_kv(p) == {}


# ------------------------------------------------------------------- PGM

def test_pgm_golden_bytes(tmp_path):
    img = np.array([[0.0, 1.0], [0.5, 0.25]])
    p = tmp_path / "img.pgm"
    write_pgm(p, img)
    want = b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64])
    assert p.read_bytes() == want
    scale = read_kv(str(p) + ".scale")
    assert scale == {"vmin": "0", "vmax": "1"}


def test_pgm_explicit_range_clips(tmp_path):
    img = np.array([[-1.0, 0.5, 2.0]])
    p = tmp_path / "img.pgm"
    write_pgm(p, img, vmin=0.0, vmax=1.0)
    assert p.read_bytes()[-3:] == bytes([0, 128, 255])


def test_pgm_degenerate_range(tmp_path):
    p = tmp_path / "flat.pgm"
    write_pgm(p, np.full((2, 2), 3.0))
    assert p.read_bytes()[-4:] == bytes([0, 0, 0, 0])
    scale = read_kv(str(p) + ".scale")
    assert scale["vmin"] == "3" and scale["vmax"] == "4"


def test_pgm_validation(tmp_path):
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.ones(4))
    with pytest.raises(ValueError):
        write_pgm(tmp_path / "x.pgm", np.full((2, 2), np.nan))


# ----------------------------------------------------------- image planes

def test_field_plane_column_major_layout():
    geom = GridGeometry(2, 3)
    # pixel index n = row + n_row * col
    vals = np.arange(6, dtype=np.float64)[None, :]
    plane = field_plane(vals, geom, 0)
    assert plane.tolist() == [[0.0, 2.0, 4.0], [1.0, 3.0, 5.0]]
    with pytest.raises(ValueError):
        field_plane(vals, geom, 1)
