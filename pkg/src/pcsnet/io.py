"""Readers and writers for point clouds (XYZ, PLY) and triangle meshes
(OBJ, PLY), plus area-weighted surface sampling.

Supported subsets:

* XYZ: one ``x y z [saliency]`` line per point, all lines the same width.
* OBJ: ``v`` and ``f`` records; faces are 1-based, ``a/b/c`` tokens use the
  vertex part, polygons are fan-triangulated. Other records are ignored.
* PLY: ``ascii 1.0`` and ``binary_little_endian 1.0``. The vertex element
  must carry ``x, y, z`` and may carry ``saliency``; other scalar vertex
  properties are read and discarded. Faces use a list property named
  ``vertex_indices`` (or ``vertex_index``). Writers emit ``double`` scalars
  so that ASCII and binary round-trips are exact.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._errors import DataError, FormatError, PcsError
from .geometry import PointCloud
from .validation import check_count, make_rng

logger = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}
_INT_CODES = {"i1", "u1", "i2", "u2", "i4", "u4"}


@dataclass
class TriangleMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        V = np.asarray(self.vertices, dtype=np.float64)
        T = np.asarray(self.triangles)
        if V.ndim != 2 or V.shape[1] != 3 or len(V) < 1:
            raise DataError("invalid-mesh", f"vertices must be (n, 3) with n >= 1, got {V.shape}")
        if T.ndim != 2 or T.shape[1] != 3 or len(T) < 1:
            raise DataError("invalid-mesh", f"triangles must be (t, 3) with t >= 1, got {T.shape}")
        if not np.all(np.isfinite(V)):
            raise DataError("non-finite", "mesh vertices contain NaN or Inf")
        if not np.issubdtype(T.dtype, np.integer):
            raise DataError("invalid-mesh", "triangle indices must be integers")
        if T.min() < 0 or T.max() >= len(V):
            raise DataError("index-out-of-range", f"triangle index outside [0, {len(V)})")
        self.vertices = np.ascontiguousarray(V)
        self.triangles = np.ascontiguousarray(T, dtype=np.int64)

    def corners(self):
        """``(t, 3, 3)`` array of triangle corner coordinates."""
        return self.vertices[self.triangles]

    def areas(self):
        A, B, C = np.moveaxis(self.corners(), 1, 0)
        return 0.5 * np.linalg.norm(np.cross(B - A, C - A), axis=1)


def drop_degenerate(vertices, triangles):
    """Remove zero-area triangles; returns ``(mesh, n_dropped)``."""
    V = np.asarray(vertices, dtype=np.float64)
    T = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    if len(T):
        A, B, C = V[T[:, 0]], V[T[:, 1]], V[T[:, 2]]
        keep = np.linalg.norm(np.cross(B - A, C - A), axis=1) > 0.0
    else:
        keep = np.zeros(0, dtype=bool)
    dropped = int((~keep).sum())
    if dropped:
        logger.warning("dropped %d degenerate triangle(s)", dropped)
    if not keep.any():
        raise DataError("degenerate-mesh", "no triangle with nonzero area")
    return TriangleMesh(V, T[keep]), dropped


def _fan(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _parse_obj(text):
    verts, tris, tri_lines = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) not in (4, 5):
                raise FormatError("malformed", "vertex needs 3 coordinates", line=lineno)
            try:
                verts.append([float(t) for t in parts[1:4]])
            except ValueError:
                raise FormatError("malformed", f"bad coordinate in {raw!r}", line=lineno) from None
        elif tag == "f":
            if len(parts) < 4:
                raise FormatError("malformed", "face needs at least 3 vertices", line=lineno)
            try:
                poly = [int(t.split("/", 1)[0]) for t in parts[1:]]
            except ValueError:
                raise FormatError("malformed", f"bad face index in {raw!r}", line=lineno) from None
            if min(poly) < 1:
                raise FormatError("malformed", "OBJ face indices are 1-based", line=lineno)
            for tri in _fan([i - 1 for i in poly]):
                tris.append(tri)
                tri_lines.append(lineno)
    if not verts:
        raise FormatError("malformed", "no vertices")
    if not tris:
        raise FormatError("malformed", "no faces")
    T = np.array(tris, dtype=np.int64)
    bad = np.flatnonzero(T.max(axis=1) >= len(verts))
    if len(bad):
        raise FormatError("malformed", "face index beyond vertex count", line=tri_lines[bad[0]])
    return np.array(verts, dtype=np.float64), T


class _PlyHeader:
    def __init__(self):
        self.fmt = None
        self.elements = []  # [name, count, [(name, dtype) | (name, ('list', count_t, item_t))]]
        self.body_offset = 0

    def element(self, name):
        for el in self.elements:
            if el[0] == name:
                return el
        return None


def _parse_ply_header(data):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or end < 0:
        raise FormatError("malformed", "missing ply magic or end_header")
    nl = data.find(b"\n", end)
    header = _PlyHeader()
    header.body_offset = len(data) if nl < 0 else nl + 1
    try:
        lines = data[:end].decode("ascii").splitlines()
    except UnicodeDecodeError:
        raise FormatError("malformed", "non-ascii header") from None
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts or parts[0] in ("ply", "comment", "obj_info"):
            continue
        if parts[0] == "format":
            if len(parts) != 3 or parts[2] != "1.0":
                raise FormatError("malformed", f"bad format line {line!r}", line=lineno)
            if parts[1] not in ("ascii", "binary_little_endian"):
                raise FormatError("unsupported-format", parts[1], line=lineno)
            header.fmt = parts[1]
        elif parts[0] == "element":
            if len(parts) != 3 or not parts[2].isdigit():
                raise FormatError("malformed", f"bad element line {line!r}", line=lineno)
            header.elements.append([parts[1], int(parts[2]), []])
        elif parts[0] == "property":
            if not header.elements:
                raise FormatError("malformed", "property before element", line=lineno)
            props = header.elements[-1][2]
            if len(parts) == 3:
                if parts[1] not in _PLY_TYPES:
                    raise FormatError("unsupported-property", f"type {parts[1]!r}", line=lineno)
                props.append((parts[2], _PLY_TYPES[parts[1]]))
            elif len(parts) == 5 and parts[1] == "list":
                if parts[2] not in _PLY_TYPES or parts[3] not in _PLY_TYPES:
                    raise FormatError("unsupported-property", f"list types in {line!r}", line=lineno)
                if _PLY_TYPES[parts[2]] not in _INT_CODES:
                    raise FormatError("unsupported-property", "list count must be an integer type", line=lineno)
                props.append((parts[4], ("list", _PLY_TYPES[parts[2]], _PLY_TYPES[parts[3]])))
            else:
                raise FormatError("malformed", f"bad property line {line!r}", line=lineno)
        else:
            raise FormatError("malformed", f"unknown header keyword {parts[0]!r}", line=lineno)
    if header.fmt is None:
        raise FormatError("malformed", "missing format line")
    for name, _, props in header.elements:
        if name == "vertex":
            if any(isinstance(t, tuple) for _, t in props):
                raise FormatError("unsupported-property", "list property on vertex element")
            names = [p for p, _ in props]
            if not all(c in names for c in "xyz"):
                raise FormatError("unsupported-property", "vertex element lacks x, y, z")
        elif name == "face":
            lists = [p for p, t in props if isinstance(t, tuple)]
            if lists not in (["vertex_indices"], ["vertex_index"]):
                raise FormatError("unsupported-property", f"face lists {lists}")
    return header


def _read_ply_ascii(data, header):
    tokens_by_line = data[header.body_offset:].decode("ascii").splitlines()
    pos = 0
    out = {}
    for name, count, props in header.elements:
        rows = []
        for _ in range(count):
            while pos < len(tokens_by_line) and not tokens_by_line[pos].strip():
                pos += 1
            if pos >= len(tokens_by_line):
                raise FormatError("malformed", f"truncated {name} element")
            lineno = pos + 1
            toks = tokens_by_line[pos].split()
            pos += 1
            row, t = {}, 0
            try:
                for pname, ptype in props:
                    if isinstance(ptype, tuple):
                        n = int(toks[t])
                        if n < 0 or t + 1 + n > len(toks):
                            raise IndexError
                        row[pname] = [int(v) for v in toks[t + 1:t + 1 + n]]
                        t += 1 + n
                    else:
                        row[pname] = int(toks[t]) if ptype in _INT_CODES else float(toks[t])
                        t += 1
            except (ValueError, IndexError):
                raise FormatError("malformed", f"bad {name} record", line=lineno) from None
            if t != len(toks):
                raise FormatError("malformed", f"extra values in {name} record", line=lineno)
            rows.append(row)
        out[name] = rows
    vertex = out.get("vertex")
    if not vertex:
        raise FormatError("malformed", "no vertex element")
    vprops = [p for p, _ in header.element("vertex")[2]]
    cols = {p: np.array([r[p] for r in vertex], dtype=np.float64) for p in vprops}
    faces = [r[_face_key(header)] for r in out.get("face", [])]
    return cols, faces


def _face_key(header):
    el = header.element("face")
    return next(p for p, t in el[2] if isinstance(t, tuple)) if el else None


def _read_ply_binary(data, header):
    buf = memoryview(data)[header.body_offset:]
    off = 0
    cols, faces = None, []
    for name, count, props in header.elements:
        if all(not isinstance(t, tuple) for _, t in props):
            dt = np.dtype([(p, "<" + t) for p, t in props])
            need = dt.itemsize * count
            if off + need > len(buf):
                raise FormatError("malformed", f"truncated {name} element")
            arr = np.frombuffer(buf, dtype=dt, count=count, offset=off)
            off += need
            if name == "vertex":
                cols = {p: arr[p].astype(np.float64) for p, _ in props}
            continue
        rows, off = _read_binary_rows(buf, off, count, props, name)
        if name == "face":
            key = _face_key(header)
            faces = [r[key] for r in rows]
    if cols is None or len(cols["x"]) == 0:
        raise FormatError("malformed", "no vertex element")
    return cols, faces


def _read_binary_rows(buf, off, count, props, name):
    rows = []
    for _ in range(count):
        row = {}
        for pname, ptype in props:
            if isinstance(ptype, tuple):
                _, ct, it = ptype
                cdt, idt = np.dtype("<" + ct), np.dtype("<" + it)
                if off + cdt.itemsize > len(buf):
                    raise FormatError("malformed", f"truncated {name} element")
                n = int(np.frombuffer(buf, cdt, 1, off)[0])
                off += cdt.itemsize
                if n < 0 or off + n * idt.itemsize > len(buf):
                    raise FormatError("malformed", f"truncated {name} element")
                row[pname] = np.frombuffer(buf, idt, n, off).tolist()
                off += n * idt.itemsize
            else:
                dt = np.dtype("<" + ptype)
                if off + dt.itemsize > len(buf):
                    raise FormatError("malformed", f"truncated {name} element")
                row[pname] = np.frombuffer(buf, dt, 1, off)[0].item()
                off += dt.itemsize
        rows.append(row)
    return rows, off


def _read_ply(data):
    header = _parse_ply_header(data)
    if header.element("vertex") is None:
        raise FormatError("malformed", "no vertex element")
    if header.fmt == "ascii":
        return _read_ply_ascii(data, header)
    return _read_ply_binary(data, header)


def _guarded(fn, *args):
    try:
        return fn(*args)
    except PcsError:
        raise
    except (ValueError, IndexError, KeyError, TypeError, OverflowError,
            UnicodeDecodeError, struct.error, MemoryError) as exc:
        raise FormatError("malformed", f"{type(exc).__name__}: {exc}") from None


def _suffix(path):
    return Path(path).suffix.lower()


def read_mesh(path):
    """Load an OBJ or PLY triangle mesh, dropping zero-area triangles."""
    data = Path(path).read_bytes()
    suffix = _suffix(path)
    if suffix == ".obj":
        V, T = _guarded(lambda: _parse_obj(data.decode("utf-8")))
    elif suffix == ".ply":
        cols, faces = _guarded(_read_ply, data)
        if not faces:
            raise FormatError("malformed", "PLY has no faces")
        V = np.column_stack([cols["x"], cols["y"], cols["z"]])
        tris = []
        for f in faces:
            if len(f) < 3:
                raise FormatError("malformed", "face with fewer than 3 vertices")
            tris.extend(_fan(f))
        T = np.array(tris, dtype=np.int64)
        if T.min() < 0 or T.max() >= len(V):
            raise FormatError("malformed", "face index out of range")
    else:
        raise DataError("unsupported-format", f"unknown mesh extension {suffix!r}")
    if not np.all(np.isfinite(V)):
        raise FormatError("malformed", "non-finite vertex coordinate")
    mesh, _ = drop_degenerate(V, T)
    return mesh


def write_mesh(mesh, path):
    suffix = _suffix(path)
    V, T = mesh.vertices, mesh.triangles
    if suffix == ".obj":
        lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in V]
        lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in T]
        Path(path).write_text("\n".join(lines) + "\n")
    elif suffix == ".ply":
        head = [
            "ply", "format ascii 1.0",
            f"element vertex {len(V)}",
            "property double x", "property double y", "property double z",
            f"element face {len(T)}",
            "property list uchar int vertex_indices",
            "end_header",
        ]
        body = [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in V]
        body += [f"3 {a} {b} {c}" for a, b, c in T]
        Path(path).write_text("\n".join(head + body) + "\n")
    else:
        raise DataError("unsupported-format", f"unknown mesh extension {suffix!r}")


def _parse_xyz(text):
    rows, width = [], None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.replace(",", " ").split()
        if len(toks) not in (3, 4):
            raise FormatError("malformed", f"expected 3 or 4 columns, got {len(toks)}", line=lineno)
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise FormatError("ragged-columns", f"expected {width} columns, got {len(toks)}", line=lineno)
        try:
            rows.append([float(t) for t in toks])
        except ValueError:
            raise FormatError("malformed", f"bad number in {raw!r}", line=lineno) from None
    if not rows:
        raise FormatError("malformed", "empty cloud file")
    A = np.array(rows, dtype=np.float64)
    return A[:, :3], (A[:, 3] if width == 4 else None)


def read_cloud(path):
    """Load an XYZ (``.xyz``/``.txt``) or PLY point cloud."""
    data = Path(path).read_bytes()
    suffix = _suffix(path)
    if suffix == ".ply":
        cols, _ = _guarded(_read_ply, data)
        P = np.column_stack([cols["x"], cols["y"], cols["z"]])
        s = cols.get("saliency")
    elif suffix in (".xyz", ".txt", ".pts"):
        P, s = _guarded(lambda: _parse_xyz(data.decode("utf-8")))
    else:
        raise DataError("unsupported-format", f"unknown cloud extension {suffix!r}")
    try:
        return PointCloud(P, s)
    except DataError as exc:
        raise FormatError("malformed", str(exc)) from None


def write_cloud(cloud, path, *, binary=False):
    """Write ``cloud`` as XYZ text or PLY (ASCII, or little-endian binary)."""
    if not isinstance(cloud, PointCloud):
        cloud = PointCloud(cloud)
    P, s = cloud.points, cloud.saliency
    cols = P if s is None else np.column_stack([P, s])
    suffix = _suffix(path)
    if suffix in (".xyz", ".txt", ".pts"):
        fmt = " ".join(["%.17g"] * cols.shape[1])
        np.savetxt(path, cols, fmt=fmt)
        return
    if suffix != ".ply":
        raise DataError("unsupported-format", f"unknown cloud extension {suffix!r}")
    names = ["x", "y", "z"] + (["saliency"] if s is not None else [])
    head = ["ply", "format " + ("binary_little_endian" if binary else "ascii") + " 1.0",
            f"element vertex {len(P)}"] + [f"property double {n}" for n in names] + ["end_header"]
    if binary:
        body = np.ascontiguousarray(cols, dtype="<f8").tobytes()
        Path(path).write_bytes(("\n".join(head) + "\n").encode("ascii") + body)
    else:
        lines = [" ".join(f"{v:.17g}" for v in row) for row in cols]
        Path(path).write_text("\n".join(head + lines) + "\n")


def sample_mesh_surface(mesh, count, rng=None):
    """Draw ``count`` points uniformly by area from the mesh surface."""
    count = check_count(count, "count")
    rng = make_rng(rng)
    areas = mesh.areas()
    total = areas.sum()
    if not total > 0.0:
        raise DataError("degenerate-mesh", "mesh has zero total area")
    tri = rng.choice(len(areas), size=count, p=areas / total)
    r1 = np.sqrt(rng.random(count))
    r2 = rng.random(count)
    A, B, C = np.moveaxis(mesh.corners()[tri], 1, 0)
    u, v, w = 1.0 - r1, r1 * (1.0 - r2), r1 * r2
    P = u[:, None] * A + v[:, None] * B + w[:, None] * C
    return PointCloud(P)
