"""Mesh and point-cloud file I/O: Wavefront OBJ and PLY.

OBJ support is the geometry subset: ``v`` and ``f`` records.  Normals,
texture coordinates, materials, groups and smoothing state are skipped on
read and never written.  Polygon faces are fan-triangulated.  Face indices
are 1-based; negative indices count back from the current vertex list.

PLY supports ASCII and binary little-endian, element ``vertex`` with
x/y/z (any float width) plus an optional integer ``label`` property, and
element ``face`` with a ``vertex_indices`` (or ``vertex_index``) list.
Files written here use double-precision coordinates so geometry round-trips
exactly; float formatting uses ``repr`` (shortest round-trip form).
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import ParseError
from .geom import PointCloud, TriMesh


def _fmt(x: float) -> str:
    return repr(float(x))


# -------------------------------------------------------------------- OBJ


def read_obj(path) -> TriMesh:
    verts: list[tuple[float, float, float]] = []
    faces: list[list[int]] = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tag, *rest = line.split()
            if tag == "v":
                if len(rest) < 3:
                    raise ParseError("vertex needs 3 coordinates", line=lineno)
                try:
                    verts.append((float(rest[0]), float(rest[1]), float(rest[2])))
                except ValueError:
                    raise ParseError("bad vertex coordinate", line=lineno) from None
            elif tag == "f":
                if len(rest) < 3:
                    raise ParseError("face needs at least 3 vertices", line=lineno)
                idx = []
                for token in rest:
                    head = token.split("/", 1)[0]
                    try:
                        i = int(head)
                    except ValueError:
                        raise ParseError(f"bad face index {head!r}", line=lineno) from None
                    if i > 0:
                        i -= 1
                    elif i < 0:
                        i += len(verts)
                    else:
                        raise ParseError("face index 0 is invalid", line=lineno)
                    if i < 0 or i >= len(verts):
                        raise ParseError(f"face index {head} out of range", line=lineno)
                    idx.append(i)
                for k in range(1, len(idx) - 1):  # fan triangulation
                    faces.append([idx[0], idx[k], idx[k + 1]])
            # vn / vt / vp / o / g / s / usemtl / mtllib: skipped
    return TriMesh(
        np.asarray(verts, dtype=np.float64).reshape(-1, 3),
        np.asarray(faces, dtype=np.int64).reshape(-1, 3),
    )


def write_obj(path, mesh: TriMesh) -> None:
    lines = []
    for v in mesh.vertices:
        lines.append(f"v {_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")


# -------------------------------------------------------------------- PLY

_PLY_SCALAR = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class _Element:
    def __init__(self, name: str, count: int):
        self.name = name
        self.count = count
        self.properties: list[tuple] = []  # ("scalar", name, dt) | ("list", name, count_dt, item_dt)


def _parse_ply_header(fh):
    magic = fh.readline()
    if magic.strip() != b"ply":
        raise ParseError("not a PLY file (missing 'ply' magic)", line=1)
    fmt = None
    elements: list[_Element] = []
    lineno = 1
    while True:
        raw = fh.readline()
        if not raw:
            raise ParseError("unexpected end of PLY header")
        lineno += 1
        parts = raw.decode("ascii", errors="replace").split()
        if not parts or parts[0] == "comment" or parts[0] == "obj_info":
            continue
        if parts[0] == "format":
            if len(parts) < 2 or parts[1] not in ("ascii", "binary_little_endian"):
                raise ParseError(f"unsupported PLY format {parts[1:]!r}", line=lineno)
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append(_Element(parts[1], int(parts[2])))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("property before any element", line=lineno)
            if parts[1] == "list":
                if parts[2] not in _PLY_SCALAR or parts[3] not in _PLY_SCALAR:
                    raise ParseError(f"unknown list types {parts[2]}/{parts[3]}", line=lineno)
                elements[-1].properties.append(
                    ("list", parts[4], _PLY_SCALAR[parts[2]], _PLY_SCALAR[parts[3]])
                )
            else:
                if parts[1] not in _PLY_SCALAR:
                    raise ParseError(f"unknown property type {parts[1]!r}", line=lineno)
                elements[-1].properties.append(("scalar", parts[2], _PLY_SCALAR[parts[1]]))
        elif parts[0] == "end_header":
            break
        else:
            raise ParseError(f"unknown header keyword {parts[0]!r}", line=lineno)
    if fmt is None:
        raise ParseError("PLY header has no format line")
    return fmt, elements


def _read_ply_ascii(fh, elements):
    rows = {}
    text = fh.read().decode("ascii", errors="replace").split()
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(text):
            raise ParseError("unexpected end of PLY data")
        tok = text[pos]
        pos += 1
        return tok

    for el in elements:
        data = []
        for _ in range(el.count):
            row = {}
            for prop in el.properties:
                if prop[0] == "scalar":
                    val = float(take())
                    row[prop[1]] = val
                else:
                    n = int(float(take()))
                    row[prop[1]] = [int(float(take())) for _ in range(n)]
            data.append(row)
        rows[el.name] = data
    return rows


def _read_ply_binary(fh, elements):
    buf = fh.read()
    rows = {}
    offset = 0
    for el in elements:
        data = []
        all_scalar = all(p[0] == "scalar" for p in el.properties)
        if all_scalar:
            dt = np.dtype([(p[1], "<" + p[2]) for p in el.properties])
            arr = np.frombuffer(buf, dtype=dt, count=el.count, offset=offset)
            offset += dt.itemsize * el.count
            for i in range(el.count):
                data.append({p[1]: arr[p[1]][i] for p in el.properties})
        else:
            for _ in range(el.count):
                row = {}
                for prop in el.properties:
                    if prop[0] == "scalar":
                        dt = np.dtype("<" + prop[2])
                        (val,) = np.frombuffer(buf, dtype=dt, count=1, offset=offset)
                        offset += dt.itemsize
                        row[prop[1]] = val
                    else:
                        cnt_dt = np.dtype("<" + prop[2])
                        (n,) = np.frombuffer(buf, dtype=cnt_dt, count=1, offset=offset)
                        offset += cnt_dt.itemsize
                        item_dt = np.dtype("<" + prop[3])
                        vals = np.frombuffer(buf, dtype=item_dt, count=int(n), offset=offset)
                        offset += item_dt.itemsize * int(n)
                        row[prop[1]] = vals.tolist()
                data.append(row)
        rows[el.name] = data
    return rows


def read_ply(path):
    """Read a PLY file.

    Returns a :class:`TriMesh` when a non-empty face element is present,
    otherwise a :class:`PointCloud` (with labels when the vertex element
    carries an integer ``label`` property).
    """
    with open(path, "rb") as fh:
        fmt, elements = _parse_ply_header(fh)
        rows = _read_ply_ascii(fh, elements) if fmt == "ascii" else _read_ply_binary(fh, elements)
    by_name = {el.name: el for el in elements}
    if "vertex" not in by_name:
        raise ParseError("PLY file has no vertex element")
    vrows = rows["vertex"]
    names = [p[1] for p in by_name["vertex"].properties]
    for req in ("x", "y", "z"):
        if req not in names:
            raise ParseError(f"PLY vertex element lacks property {req!r}")
    verts = np.array([[r["x"], r["y"], r["z"]] for r in vrows], dtype=np.float64).reshape(-1, 3)

    faces = []
    for fr in rows.get("face", []):
        key = "vertex_indices" if "vertex_indices" in fr else "vertex_index"
        if key not in fr:
            raise ParseError("PLY face element lacks vertex index list")
        idx = [int(i) for i in fr[key]]
        for k in range(1, len(idx) - 1):
            faces.append([idx[0], idx[k], idx[k + 1]])
    if faces:
        return TriMesh(verts, np.asarray(faces, dtype=np.int64))

    labels = None
    if "label" in names:
        labels = np.array([int(r["label"]) for r in vrows], dtype=np.int64)
    return PointCloud(verts, labels)


def _ply_header(count_vertex: int, has_label: bool, count_face: int, binary: bool) -> str:
    lines = [
        "ply",
        "format binary_little_endian 1.0" if binary else "format ascii 1.0",
        f"element vertex {count_vertex}",
        "property double x",
        "property double y",
        "property double z",
    ]
    if has_label:
        lines.append("property int label")
    if count_face:
        lines.append(f"element face {count_face}")
        lines.append("property list uchar int vertex_indices")
    lines.append("end_header")
    return "\n".join(lines) + "\n"


def write_ply(path, data, binary: bool = True) -> None:
    """Write a :class:`PointCloud` or :class:`TriMesh` as PLY."""
    if isinstance(data, TriMesh):
        verts, labels, faces = data.vertices, None, data.faces
    elif isinstance(data, PointCloud):
        verts, labels, faces = data.points, data.labels, np.zeros((0, 3), dtype=np.int64)
    else:
        raise TypeError(f"cannot write {type(data).__name__} as PLY")
    header = _ply_header(verts.shape[0], labels is not None, faces.shape[0], binary)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if binary:
            if labels is not None:
                dt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8"), ("label", "<i4")])
                rec = np.empty(verts.shape[0], dtype=dt)
                rec["x"], rec["y"], rec["z"] = verts[:, 0], verts[:, 1], verts[:, 2]
                rec["label"] = labels.astype(np.int32)
            else:
                dt = np.dtype([("x", "<f8"), ("y", "<f8"), ("z", "<f8")])
                rec = np.empty(verts.shape[0], dtype=dt)
                rec["x"], rec["y"], rec["z"] = verts[:, 0], verts[:, 1], verts[:, 2]
            fh.write(rec.tobytes())
            for f in faces:
                fh.write(struct.pack("<Biii", 3, int(f[0]), int(f[1]), int(f[2])))
        else:
            out = []
            for i, v in enumerate(verts):
                row = f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}"
                if labels is not None:
                    row += f" {int(labels[i])}"
                out.append(row)
            for f in faces:
                out.append(f"3 {f[0]} {f[1]} {f[2]}")
            fh.write(("\n".join(out) + "\n").encode("ascii"))
