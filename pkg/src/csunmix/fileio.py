"""On-disk formats.

All formats are deterministic byte-for-byte: floats are serialised with
%.17g (lossless for float64) and binary payloads are little-endian,
C-order.  write(read(write(x))) is byte-identical to write(x).

* Cube container (magic ``CSUCUBE1``): text header followed by the raw
  (L, N) float64 band-major payload.
* Field container (magic ``CSUFIELD1``): per-endmember image planes,
  uint8 for supports, float64 for abundances and generic maps.
* Library CSV: one header row of endmember names, then one row per
  band.
* Flat ``key=value`` text files for configs, manifests and reports.
* Binary 8-bit PGM (P5) renders with a ``.scale`` sidecar recording the
  value range mapped onto 0..255.
"""

from __future__ import annotations

import numpy as np

from .types import GridGeometry, HyperCube, Library
from .validation import require_finite

CUBE_MAGIC = b"CSUCUBE1"
FIELD_MAGIC = b"CSUFIELD1"
FIELD_KINDS = ("support", "abundance", "map")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _read_header(fh, magic: bytes) -> dict:
    first = fh.readline().rstrip(b"\n")
    if first != magic:
        raise ValueError(f"bad magic {first!r}, expected {magic.decode()}")
    fields = {}
    while True:
        line = fh.readline()
        if not line:
            raise ValueError("truncated header: no end_header line")
        line = line.rstrip(b"\n")
        if line == b"end_header":
            return fields
        if b"=" not in line:
            raise ValueError(f"malformed header line {line!r}")
        key, _, val = line.partition(b"=")
        fields[key.decode()] = val.decode()


def _header_int(fields: dict, key: str) -> int:
    try:
        return int(fields[key])
    except KeyError:
        raise ValueError(f"header missing {key}") from None
    except ValueError:
        raise ValueError(f"header field {key}={fields[key]!r} is not an integer") from None


def write_cube(path, cube: HyperCube) -> None:
    with open(path, "wb") as fh:
        fh.write(CUBE_MAGIC + b"\n")
        fh.write(f"bands={cube.n_bands}\n".encode())
        fh.write(f"rows={cube.n_row}\n".encode())
        fh.write(f"cols={cube.n_col}\n".encode())
        fh.write(b"dtype=float64\n")
        fh.write(b"byteorder=little\n")
        fh.write(b"end_header\n")
        fh.write(np.ascontiguousarray(cube.data, dtype="<f8").tobytes())


def read_cube(path) -> HyperCube:
    with open(path, "rb") as fh:
        fields = _read_header(fh, CUBE_MAGIC)
        bands = _header_int(fields, "bands")
        rows = _header_int(fields, "rows")
        cols = _header_int(fields, "cols")
        if fields.get("dtype") != "float64" or fields.get("byteorder") != "little":
            raise ValueError("cube payload must be little-endian float64")
        payload = fh.read()
    expect = 8 * bands * rows * cols
    if len(payload) != expect:
        raise ValueError(f"payload is {len(payload)} bytes, expected {expect}")
    data = np.frombuffer(payload, dtype="<f8").reshape(bands, rows * cols)
    return HyperCube(data.astype(np.float64), rows, cols)


def write_field(path, values: np.ndarray, geom: GridGeometry, kind: str) -> None:
    """Write an (R, N) per-endmember plane stack."""
    if kind not in FIELD_KINDS:
        raise ValueError(f"kind must be one of {FIELD_KINDS}, got {kind!r}")
    arr = np.asarray(values)
    if arr.ndim != 2 or arr.shape[1] != geom.n_pixels:
        raise ValueError(f"values shape {arr.shape} does not match the grid")
    if kind == "support":
        if not np.all((arr == 0) | (arr == 1)):
            raise ValueError("support fields must be binary")
        arr = arr.astype(np.uint8)
        dtype, raw = "uint8", arr.tobytes()
    else:
        arr = arr.astype(np.float64)
        require_finite(arr, "values")
        dtype, raw = "float64", np.ascontiguousarray(arr, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC + b"\n")
        fh.write(f"kind={kind}\n".encode())
        fh.write(f"components={arr.shape[0]}\n".encode())
        fh.write(f"rows={geom.n_row}\n".encode())
        fh.write(f"cols={geom.n_col}\n".encode())
        fh.write(f"dtype={dtype}\n".encode())
        fh.write(b"byteorder=little\n")
        fh.write(b"end_header\n")
        fh.write(raw)


def read_field(path) -> tuple[np.ndarray, GridGeometry, str]:
    with open(path, "rb") as fh:
        fields = _read_header(fh, FIELD_MAGIC)
        kind = fields.get("kind", "")
        if kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {kind!r}")
        comp = _header_int(fields, "components")
        rows = _header_int(fields, "rows")
        cols = _header_int(fields, "cols")
        dtype = fields.get("dtype")
        if fields.get("byteorder") != "little":
            raise ValueError("field payload must be little-endian")
        payload = fh.read()
    n = rows * cols
    if kind == "support":
        if dtype != "uint8":
            raise ValueError("support fields must be uint8")
        if len(payload) != comp * n:
            raise ValueError("field payload size mismatch")
        arr = np.frombuffer(payload, dtype=np.uint8).reshape(comp, n).copy()
        if not np.all(arr <= 1):
            raise ValueError("support payload contains non-binary bytes")
    else:
        if dtype != "float64":
            raise ValueError(f"{kind} fields must be float64")
        if len(payload) != 8 * comp * n:
            raise ValueError("field payload size mismatch")
        arr = np.frombuffer(payload, dtype="<f8").reshape(comp, n).astype(np.float64)
    return arr, GridGeometry(rows, cols), kind


def write_library_csv(path, lib: Library) -> None:
    lines = [",".join(lib.names)]
    for row in lib.data:
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_library_csv(path) -> Library:
    with open(path, "r") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError("library CSV is empty")
    names = tuple(cell.strip() for cell in lines[0].split(","))
    rows = []
    for i, ln in enumerate(lines[1:], start=2):
        cells = ln.split(",")
        if len(cells) != len(names):
            raise ValueError(f"line {i}: {len(cells)} cells for {len(names)} endmembers")
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise ValueError(f"line {i}: non-numeric cell") from None
    return Library(np.asarray(rows), names=names)


def write_kv(path, items: dict) -> None:
    """Flat key=value file; values are serialised with _fmt."""
    lines = [f"{k}={_fmt(v)}" for k, v in items.items()]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + ("\n" if lines else ""))


def read_kv(path) -> dict:
    out: dict[str, str] = {}
    with open(path, "r") as fh:
        for i, ln in enumerate(fh, start=1):
            ln = ln.rstrip("\n")
            if not ln or ln.startswith("#"):
                continue
            if "=" not in ln:
                raise ValueError(f"line {i}: expected key=value, got {ln!r}")
            key, _, val = ln.partition("=")
            out[key.strip()] = val.strip()
    return out


def write_pgm(path, image: np.ndarray, vmin: float | None = None, vmax: float | None = None) -> None:
    """8-bit binary PGM plus a ``.scale`` sidecar with the value range.

    ``image`` is (n_row, n_col); values map linearly from [vmin, vmax]
    (defaulting to the data range) onto 0..255.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"image must be 2-d, got shape {img.shape}")
    require_finite(img, "image")
    lo = float(img.min()) if vmin is None else float(vmin)
    hi = float(img.max()) if vmax is None else float(vmax)
    if hi <= lo:
        hi = lo + 1.0
    scaled = np.clip(np.rint((img - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(scaled.tobytes())
    with open(str(path) + ".scale", "w", newline="\n") as fh:
        fh.write(f"vmin={lo:.17g}\nvmax={hi:.17g}\n")


def field_plane(values: np.ndarray, geom: GridGeometry, r: int) -> np.ndarray:
    """Component ``r`` of an (R, N) field as an (n_row, n_col) image."""
    if not (0 <= r < values.shape[0]):
        raise ValueError(f"component {r} outside [0, {values.shape[0]})")
    return values[r].reshape(geom.n_row, geom.n_col, order="F")
