"""Point-cloud file I/O and grid quantization.

Supported formats:

* PLY, ``format ascii 1.0`` or ``format binary_little_endian 1.0``; only the
  vertex positions are read, and x/y/z must be ``float`` or ``double``.
* XYZ text: one whitespace-separated ``x y z`` triple per line, ``#`` starts
  a comment line.

Quantization maps raw coordinates onto an N-bit cubic grid: the origin is the
per-axis minimum and a single uniform scale is taken from the longest axis so
octree cells stay cubic.  Points are deduplicated after rounding; a decoded
cloud is compared against that deduplicated set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError

_PLY_DTYPES = {
    "float": "<f4", "float32": "<f4",
    "double": "<f8", "float64": "<f8",
    "char": "<i1", "int8": "<i1",
    "uchar": "<u1", "uint8": "<u1",
    "short": "<i2", "int16": "<i2",
    "ushort": "<u2", "uint16": "<u2",
    "int": "<i4", "int32": "<i4",
    "uint": "<u4", "uint32": "<u4",
}


@dataclass
class RawPointCloud:
    """Unquantized positions in source units, shape (n, 3) float64."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return len(self.points)


@dataclass
class PointCloud:
    """Deduplicated integer positions on an N-bit grid.

    ``origin`` and ``scale`` recover source units: real = origin + scale * p.
    """

    points: np.ndarray
    precision: int
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.int64).reshape(-1, 3)
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.scale = float(self.scale)
        if not 1 <= self.precision <= 16:
            raise ConfigError(f"precision must be in [1, 16], got {self.precision}")
        hi = (1 << self.precision) - 1
        if len(self.points) and (self.points.min() < 0 or self.points.max() > hi):
            raise ConfigError(f"coordinates outside [0, {hi}] for precision {self.precision}")

    def __len__(self):
        return len(self.points)

    def point_set(self):
        return {tuple(p) for p in self.points.tolist()}


def _detect_format(path, fmt=None):
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("ply", "xyz"):
            raise ConfigError(f"unknown point-cloud format {fmt!r}")
        return fmt
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return "ply"
    if suffix in (".xyz", ".txt"):
        return "xyz"
    raise ConfigError(f"cannot infer format from {path!r}; pass format explicitly")


def read_point_cloud(path, fmt=None) -> RawPointCloud:
    """Read a PLY or XYZ file; non-position attributes are ignored."""
    fmt = _detect_format(path, fmt)
    if fmt == "xyz":
        return _read_xyz(path)
    return _read_ply(path)


def write_point_cloud(path, cloud, fmt=None, binary=False):
    """Write positions to PLY (ascii or binary little-endian) or XYZ."""
    fmt = _detect_format(path, fmt)
    pts = cloud.points if isinstance(cloud, (RawPointCloud, PointCloud)) else np.asarray(cloud)
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
    if fmt == "xyz":
        with open(path, "w") as fh:
            for x, y, z in pts.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n")
        return
    _write_ply(path, pts, binary=binary)


def _read_xyz(path) -> RawPointCloud:
    rows = []
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 3:
                raise ParseError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
    pts = np.asarray(rows, dtype=np.float64).reshape(-1, 3)
    if not np.isfinite(pts).all():
        raise ParseError(f"{path}: non-finite coordinate")
    return RawPointCloud(pts)


def _read_ply(path) -> RawPointCloud:
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise ParseError(f"{path}: not a PLY file (missing 'ply'/'end_header')")
    nl = data.find(b"\n", end)
    if nl < 0:
        raise ParseError(f"{path}: header not terminated")
    header = data[: nl + 1].decode("ascii", errors="replace")
    body_offset = nl + 1

    fmt = None
    elements = []  # (name, count, [(prop_name, dtype_str)])
    for lineno, line in enumerate(header.splitlines(), 1):
        tokens = line.split()
        if not tokens or tokens[0] in ("ply", "comment", "obj_info", "end_header"):
            continue
        if tokens[0] == "format":
            if len(tokens) < 2 or tokens[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"{path}:{lineno}: unsupported PLY format {' '.join(tokens[1:])!r}")
            fmt = tokens[1]
        elif tokens[0] == "element":
            if len(tokens) != 3 or not tokens[2].isdigit():
                raise ParseError(f"{path}:{lineno}: malformed element declaration")
            elements.append([tokens[1], int(tokens[2]), []])
        elif tokens[0] == "property":
            if not elements:
                raise ParseError(f"{path}:{lineno}: property before any element")
            if tokens[1] == "list":
                elements[-1][2].append((tokens[-1], "list"))
            else:
                if len(tokens) != 3:
                    raise ParseError(f"{path}:{lineno}: malformed property declaration")
                elements[-1][2].append((tokens[2], tokens[1]))
        else:
            raise ParseError(f"{path}:{lineno}: unknown header keyword {tokens[0]!r}")
    if fmt is None:
        raise ParseError(f"{path}: missing 'format' line in header")

    vertex = next((e for e in elements if e[0] == "vertex"), None)
    if vertex is None:
        raise ParseError(f"{path}: no vertex element")
    names = [p[0] for p in vertex[2]]
    for axis in ("x", "y", "z"):
        if axis not in names:
            raise ParseError(f"{path}: vertex element lacks property {axis!r}")
        kind = vertex[2][names.index(axis)][1]
        if kind not in ("float", "float32", "double", "float64"):
            raise ParseError(f"{path}: vertex property {axis!r} has unsupported type {kind!r}")

    if fmt == "ascii":
        return _read_ply_ascii(path, data[body_offset:], header.count("\n") + 1, elements, vertex)
    return _read_ply_binary(path, data, body_offset, elements, vertex)


def _read_ply_ascii(path, body, first_lineno, elements, vertex):
    lines = body.decode("ascii", errors="replace").splitlines()
    cursor = 0
    for elem in elements:
        name, count, props = elem
        if name == "vertex":
            names = [p[0] for p in props]
            ix, iy, iz = names.index("x"), names.index("y"), names.index("z")
            pts = np.empty((count, 3), dtype=np.float64)
            for i in range(count):
                if cursor >= len(lines):
                    raise ParseError(f"{path}: vertex element truncated (expected {count} rows)")
                parts = lines[cursor].split()
                cursor += 1
                if len(parts) < len(props):
                    raise ParseError(
                        f"{path}:{first_lineno + cursor}: expected {len(props)} values, got {len(parts)}"
                    )
                try:
                    pts[i] = (float(parts[ix]), float(parts[iy]), float(parts[iz]))
                except ValueError as exc:
                    raise ParseError(f"{path}:{first_lineno + cursor}: {exc}") from None
            return RawPointCloud(pts)
        cursor += count  # skip a preceding non-vertex element
    raise ParseError(f"{path}: no vertex element")  # pragma: no cover


def _read_ply_binary(path, data, offset, elements, vertex):
    pos = offset
    for elem in elements:
        name, count, props = elem
        if any(kind == "list" for _, kind in props):
            if name == "vertex":
                raise ParseError(f"{path}: list property in vertex element is unsupported")
            raise ParseError(f"{path}: cannot skip element {name!r} with list properties")
        try:
            dtype = np.dtype([(pname, _PLY_DTYPES[kind]) for pname, kind in props])
        except KeyError as exc:
            raise ParseError(f"{path}: unsupported property type {exc.args[0]!r}") from None
        nbytes = dtype.itemsize * count
        if pos + nbytes > len(data):
            raise ParseError(
                f"{path}: element {name!r} truncated at byte {len(data)} (need {pos + nbytes})"
            )
        if name == "vertex":
            rec = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
            pts = np.stack(
                [rec["x"].astype(np.float64), rec["y"].astype(np.float64), rec["z"].astype(np.float64)],
                axis=1,
            )
            return RawPointCloud(pts)
        pos += nbytes
    raise ParseError(f"{path}: no vertex element")  # pragma: no cover


def _write_ply(path, pts, binary):
    n = len(pts)
    head = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        "end_header",
    ]
    if binary:
        with open(path, "wb") as fh:
            fh.write(("\n".join(head) + "\n").encode("ascii"))
            fh.write(np.ascontiguousarray(pts, dtype="<f8").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write("\n".join(head) + "\n")
            for x, y, z in pts.tolist():
                fh.write(f"{x!r} {y!r} {z!r}\n")


def quantize(raw: RawPointCloud, precision: int) -> PointCloud:
    """Snap raw coordinates to the N-bit grid spanned by their bounding box.

    scale = (longest axis extent) / (2^N - 1), or 1.0 for a degenerate box,
    so the farthest boundary point rounds to 2^N - 1 exactly.  Rounded values
    are clamped into range (guards float noise only) and deduplicated.
    """
    if not 1 <= precision <= 16:
        raise ConfigError(f"precision must be in [1, 16], got {precision}")
    pts = np.asarray(raw.points, dtype=np.float64)
    if pts.size == 0:
        raise ConfigError("cannot quantize an empty point cloud")
    if not np.isfinite(pts).all():
        raise ConfigError("point cloud has non-finite coordinates")
    origin = pts.min(axis=0)
    extent = float((pts.max(axis=0) - origin).max())
    hi = (1 << precision) - 1
    scale = extent / hi if extent > 0 else 1.0
    q = np.floor((pts - origin) / scale + 0.5).astype(np.int64)
    q = np.clip(q, 0, hi)
    q = np.unique(q, axis=0)
    return PointCloud(q, precision, origin, scale)


def dequantize(pc: PointCloud) -> RawPointCloud:
    """Exact inverse affine map: real = origin + scale * p."""
    return RawPointCloud(pc.origin[None, :] + pc.scale * pc.points.astype(np.float64))
