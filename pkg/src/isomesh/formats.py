"""Mesh text format, legacy VTK export and SVG drawings.

The text format is line oriented and versioned::

    ISOMESH 1
    N 10
    DOMAIN x0 x1 y0 y1          (or ``DOMAIN none``)
    FIELD {"id": ..., "params": ...}   (optional)
    VERTICES n
    id x y constraint
    MACROS m
    id v1 v2 v3                 (subvertex ids of the corners, right angle first)
    SUBTRIS k
    id owner v1 v2 v3
    SUBEDGES e
    id v1 v2 class
    END

Floats are written with ``%.17g`` so a read/write cycle reproduces the file
byte for byte. Connectivity is rebuilt by re-subdividing the macro
triangles and checked against the stored subtriangles and subedges.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .mesh import MacroMesh, SubdividedMesh, subdivide

__all__ = [
    "FORMAT_VERSION",
    "MeshFormatError",
    "write_mesh",
    "read_mesh",
    "dumps_mesh",
    "loads_mesh",
    "write_vtk",
    "write_svg",
    "quality_color",
]

FORMAT_VERSION = 1


class MeshFormatError(ValueError):
    pass


def _f(v) -> str:
    return "%.17g" % float(v)


def dumps_mesh(mesh: SubdividedMesh, field_spec: dict | None = None) -> str:
    if mesh.n_points == 0:
        raise MeshFormatError("empty mesh")
    out = [f"ISOMESH {FORMAT_VERSION}", f"N {mesh.N}"]
    dom = mesh.macro.domain
    out.append("DOMAIN none" if dom is None else "DOMAIN " + " ".join(_f(v) for v in dom))
    if field_spec is not None:
        out.append("FIELD " + json.dumps(field_spec, sort_keys=True))
    out.append(f"VERTICES {mesh.n_points}")
    for i, ((x, y), c) in enumerate(zip(mesh.points, mesh.constraints)):
        out.append(f"{i} {_f(x)} {_f(y)} {int(c)}")
    corners = corner_ids(mesh)
    out.append(f"MACROS {len(corners)}")
    for t, (a, b, c) in enumerate(corners):
        out.append(f"{t} {a} {b} {c}")
    out.append(f"SUBTRIS {len(mesh.tris)}")
    for k, (o, (a, b, c)) in enumerate(zip(mesh.tri_owner, mesh.tris)):
        out.append(f"{k} {o} {a} {b} {c}")
    out.append(f"SUBEDGES {len(mesh.edges)}")
    for k, ((a, b), c) in enumerate(zip(mesh.edges, mesh.edge_class)):
        out.append(f"{k} {a} {b} {int(c)}")
    out.append("END")
    return "\n".join(out) + "\n"


def corner_ids(mesh: SubdividedMesh) -> np.ndarray:
    """Subvertex ids of each macrotriangle's corners in macro order."""
    N = mesh.N
    # local ids of (i, j) = (0, 0), (N, 0), (0, N) in the row-major barycentric layout
    return mesh.macro_nodes[:, [0, N, (N + 1) * (N + 2) // 2 - 1]]


def write_mesh(path, mesh: SubdividedMesh, field_spec: dict | None = None) -> None:
    Path(path).write_text(dumps_mesh(mesh, field_spec))


class _Lines:
    def __init__(self, text):
        self.lines = [ln for ln in text.splitlines() if ln.strip()]
        self.pos = 0

    def next(self):
        if self.pos >= len(self.lines):
            raise MeshFormatError("unexpected end of file")
        ln = self.lines[self.pos]
        self.pos += 1
        return ln.split()

    def peek(self):
        return self.lines[self.pos].split()[0] if self.pos < len(self.lines) else None

    def section(self, name, ncols):
        head = self.next()
        if head[0] != name or len(head) != 2:
            raise MeshFormatError(f"expected section {name}, got {' '.join(head)!r}")
        n = int(head[1])
        rows = []
        for i in range(n):
            parts = self.next()
            if len(parts) != ncols or int(parts[0]) != i:
                raise MeshFormatError(f"bad row {i} in section {name}")
            rows.append(parts[1:])
        return rows


def loads_mesh(text: str):
    """Parse a mesh file; returns ``(mesh, field_spec or None)``."""
    r = _Lines(text)
    head = r.next()
    if head[0] != "ISOMESH":
        raise MeshFormatError("missing ISOMESH header")
    if int(head[1]) != FORMAT_VERSION:
        raise MeshFormatError(f"unsupported format version {head[1]}")
    key, val = r.next()
    if key != "N":
        raise MeshFormatError("missing N")
    N = int(val)
    dom = r.next()
    if dom[0] != "DOMAIN":
        raise MeshFormatError("missing DOMAIN")
    domain = None if dom[1] == "none" else tuple(float(v) for v in dom[1:5])
    field_spec = None
    if r.peek() == "FIELD":
        line = r.lines[r.pos]
        r.pos += 1
        field_spec = json.loads(line[len("FIELD"):].strip())

    verts = r.section("VERTICES", 4)
    if not verts:
        raise MeshFormatError("empty mesh")
    points = np.array([[float(x), float(y)] for x, y, _ in verts])
    constraints = np.array([int(c) for _, _, c in verts], dtype=np.int8)
    macros = np.array(r.section("MACROS", 4), dtype=np.int64).reshape(-1, 3)
    subtris = np.array(r.section("SUBTRIS", 5), dtype=np.int64).reshape(-1, 4)
    subedges = np.array(r.section("SUBEDGES", 4), dtype=np.int64).reshape(-1, 3)
    if r.next()[0] != "END":
        raise MeshFormatError("missing END")

    # relabel corner subvertices as macro vertices; numbering of the
    # subdivision depends only on triangle order and corner order
    ids = np.unique(macros)
    remap = {int(v): k for k, v in enumerate(ids)}
    tri = np.vectorize(remap.get)(macros) if len(macros) else macros
    macro = MacroMesh(points[ids].copy(), tri.astype(np.int64), _boundary(tri), domain)
    mesh = subdivide(macro, N)
    if mesh.n_points != len(points):
        raise MeshFormatError("vertex count does not match the macro subdivision")
    if not (np.array_equal(mesh.tris, subtris[:, 1:]) and np.array_equal(mesh.tri_owner, subtris[:, 0])):
        raise MeshFormatError("subtriangles do not match the macro subdivision")
    if not np.array_equal(mesh.edges, subedges[:, :2]):
        raise MeshFormatError("subedges do not match the macro subdivision")
    if not np.array_equal(corner_ids(mesh), macros):
        raise MeshFormatError("macro corners do not match")
    mesh.points = points
    mesh.constraints = constraints
    mesh.edge_class = subedges[:, 2].astype(np.int8)
    return mesh, field_spec


def _boundary(tris):
    count = {}
    for a, b, c in tris:
        for p, q in ((a, b), (b, c), (c, a)):
            key = (int(min(p, q)), int(max(p, q)))
            count[key] = count.get(key, 0) + 1
    return {k for k, v in count.items() if v == 1}


def read_mesh(path):
    """Read a mesh file; returns ``(mesh, field_spec or None)``."""
    return loads_mesh(Path(path).read_text())


# -- VTK ------------------------------------------------------------------------


def write_vtk(path, mesh: SubdividedMesh, quality=None, title: str = "isomesh") -> None:
    """Legacy ASCII unstructured grid with per-cell quality and owner scalars."""
    if mesh.n_points == 0 or len(mesh.tris) == 0:
        raise MeshFormatError("empty mesh")
    n, k = mesh.n_points, len(mesh.tris)
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {n} double"]
    out += [f"{_f(x)} {_f(y)} 0" for x, y in mesh.points]
    out.append(f"CELLS {k} {4 * k}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.tris]
    out.append(f"CELL_TYPES {k}")
    out += ["5"] * k
    out.append(f"CELL_DATA {k}")
    if quality is not None:
        q = np.asarray(quality, dtype=float)
        if q.shape != (k,):
            raise ValueError("one quality value per subtriangle expected")
        out += ["SCALARS quality double 1", "LOOKUP_TABLE default"]
        out += [_f(v) for v in q]
    out += ["SCALARS macro int 1", "LOOKUP_TABLE default"]
    out += [str(int(o)) for o in mesh.tri_owner]
    Path(path).write_text("\n".join(out) + "\n")


# -- SVG ------------------------------------------------------------------------

# a few viridis stops, interpolated linearly
_STOPS = np.array([
    [0.267, 0.005, 0.329],
    [0.230, 0.322, 0.546],
    [0.128, 0.567, 0.551],
    [0.369, 0.789, 0.383],
    [0.993, 0.906, 0.144],
])


def quality_color(q, lo: float = 0.5, hi: float = 1.0) -> str:
    t = np.clip((float(q) - lo) / (hi - lo), 0.0, 1.0) if np.isfinite(q) else 0.0
    x = np.linspace(0, 1, len(_STOPS))
    rgb = [int(round(255 * np.interp(t, x, _STOPS[:, c]))) for c in range(3)]
    return "#%02x%02x%02x" % tuple(rgb)


def write_svg(path, mesh: SubdividedMesh, quality=None, geodesics=None, width: int = 800) -> None:
    """Subtriangle wireframe with quality fills, bold macroedges and geodesic overlays.

    ``geodesics`` is an iterable of (m, 2) point arrays drawn as red polylines.
    """
    if mesh.n_points == 0 or len(mesh.tris) == 0:
        raise MeshFormatError("empty mesh")
    P = mesh.points
    lo, hi = P.min(axis=0), P.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    pad = 0.03 * span.max()
    scale = width / (span[0] + 2 * pad)
    height = int(np.ceil((span[1] + 2 * pad) * scale))

    def xy(p):
        return (p[..., 0] - lo[0] + pad) * scale, (hi[1] + pad - p[..., 1]) * scale

    def pts(arr):
        X, Y = xy(np.asarray(arr))
        return " ".join(f"{x:.3f},{y:.3f}" for x, y in zip(X, Y))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           '<g stroke="#404040" stroke-width="0.3">']
    for k, t in enumerate(mesh.tris):
        fill = quality_color(quality[k]) if quality is not None else "none"
        out.append(f'<polygon points="{pts(P[t])}" fill="{fill}"/>')
    out.append("</g>")
    out.append('<g stroke="black" stroke-width="1.6" fill="none">')
    for _, chain in mesh.macro_edge_chains():
        out.append(f'<polyline points="{pts(P[chain])}"/>')
    out.append("</g>")
    if geodesics is not None:
        out.append('<g stroke="#e4002b" stroke-width="0.9" fill="none" class="geodesics">')
        for g in geodesics:
            if g is not None and len(g):
                out.append(f'<polyline points="{pts(g)}"/>')
        out.append("</g>")
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")
