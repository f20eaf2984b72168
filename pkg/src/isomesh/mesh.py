"""Macro triangulations and their uniform N^2 subdivision.

Connectivity is built once and never changes; only ``SubdividedMesh.points``
moves during optimisation.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

__all__ = [
    "EdgeClass",
    "Constraint",
    "MacroMesh",
    "SubdividedMesh",
    "build_uniform_grid",
    "subdivide",
    "classify_edges",
    "apply_initial_rotation",
    "set_constraints",
    "signed_areas",
]


class EdgeClass(IntEnum):
    UNIT = 0
    LEG = 1
    HYPOTENUSE = 2


class Constraint(IntEnum):
    FREE = 0
    FIXED = 1
    SLIDE_X = 2  # moves along x, y held constant
    SLIDE_Y = 3  # moves along y, x held constant


def signed_areas(points, tris):
    p0, p1, p2 = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    a = p1 - p0
    b = p2 - p0
    return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


@dataclass
class MacroMesh:
    """Coarse triangulation; each triangle lists its right-angle corner first."""

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: set = field(default_factory=set)
    domain: tuple | None = None

    def incident_counts(self) -> np.ndarray:
        return np.bincount(self.triangles.ravel(), minlength=len(self.vertices))


def build_uniform_grid(domain, nx: int, ny: int) -> MacroMesh:
    """Split each cell of an ``nx`` x ``ny`` grid along its lower-left/upper-right diagonal."""
    x0, x1, y0, y1 = map(float, domain)
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate rectangle {domain}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    for j in range(ny):
        for i in range(nx):
            ll, lr, ur, ul = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((lr, ur, ll))
            tris.append((ul, ll, ur))
    boundary = set()
    for i in range(nx):
        boundary.add(tuple(sorted((vid(i, 0), vid(i + 1, 0)))))
        boundary.add(tuple(sorted((vid(i, ny), vid(i + 1, ny)))))
    for j in range(ny):
        boundary.add(tuple(sorted((vid(0, j), vid(0, j + 1)))))
        boundary.add(tuple(sorted((vid(nx, j), vid(nx, j + 1)))))
    return MacroMesh(vertices, np.array(tris, dtype=np.int64), boundary, (x0, x1, y0, y1))


def _local_index(N):
    lid = -np.ones((N + 1, N + 1), dtype=np.int64)
    k = 0
    for j in range(N + 1):
        for i in range(N + 1 - j):
            lid[i, j] = k
            k += 1
    return lid


@dataclass
class SubdividedMesh:
    """Macro mesh plus shared subvertices and per-macro subtriangles.

    ``tri_index[k] = (i, j, up)`` locates subtriangle ``k`` inside its owner in
    barycentric steps of ``1/N``; ``edge_kind`` records whether a subedge is a
    leg or the hypotenuse of the reference right triangle, and ``edge_class``
    is the class used by the energy for the chosen tiling.
    """

    macro: MacroMesh
    N: int
    points: np.ndarray
    tris: np.ndarray
    tri_owner: np.ndarray
    tri_index: np.ndarray
    edges: np.ndarray
    edge_kind: np.ndarray
    edge_class: np.ndarray
    constraints: np.ndarray
    macro_nodes: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.points)

    def copy(self) -> "SubdividedMesh":
        return replace(self, points=self.points.copy(), edge_class=self.edge_class.copy(),
                       constraints=self.constraints.copy())

    def with_points(self, points) -> "SubdividedMesh":
        return replace(self, points=np.array(points, dtype=float))

    def signed_areas(self) -> np.ndarray:
        return signed_areas(self.points, self.tris)

    def edge_triangle_counts(self) -> np.ndarray:
        """Number of subtriangles incident to each subedge."""
        lookup = {tuple(e): k for k, e in enumerate(self.edges)}
        counts = np.zeros(len(self.edges), dtype=np.int64)
        for t in self.tris:
            for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
                counts[lookup[(min(a, b), max(a, b))]] += 1
        return counts

    def free_mask(self) -> np.ndarray:
        """(n, 2) array of ones where a coordinate may move."""
        mask = np.ones((self.n_points, 2))
        c = self.constraints
        mask[c == Constraint.FIXED] = 0.0
        mask[c == Constraint.SLIDE_X, 1] = 0.0
        mask[c == Constraint.SLIDE_Y, 0] = 0.0
        return mask

    def local_lookup(self) -> np.ndarray:
        return _local_index(self.N)

    def macro_edge_chains(self):
        """Unique macro edges as ``((a, b), chain)`` with ``chain`` the N+1 subvertex ids from a to b."""
        N = self.N
        lid = _local_index(N)
        ks = np.arange(N + 1)
        seen = {}
        for t, nodes in enumerate(self.macro_nodes):
            sides = (
                nodes[lid[ks, 0]],
                nodes[lid[N - ks, ks]],
                nodes[lid[0, N - ks]],
            )
            for chain in sides:
                a, b = int(chain[0]), int(chain[-1])
                key = (min(a, b), max(a, b))
                if key not in seen:
                    seen[key] = chain if a < b else chain[::-1]
        return [(k, np.asarray(v)) for k, v in sorted(seen.items())]


def subdivide(mesh: MacroMesh, N: int) -> SubdividedMesh:
    """Uniformly subdivide every macrotriangle into ``N**2`` subtriangles.

    Subvertices on shared macro edges and vertices are merged using integer
    barycentric keys, so no floating-point tolerance is involved.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    lid = _local_index(N)
    nloc = (N + 1) * (N + 2) // 2
    keys = {}
    coords = []
    macro_nodes = np.empty((len(mesh.triangles), nloc), dtype=np.int64)

    for t, (v0, v1, v2) in enumerate(mesh.triangles):
        P0, P1, P2 = mesh.vertices[v0], mesh.vertices[v1], mesh.vertices[v2]
        for j in range(N + 1):
            for i in range(N + 1 - j):
                w = {int(v0): N - i - j, int(v1): i, int(v2): j}
                nz = sorted(v for v, c in w.items() if c > 0)
                if len(nz) == 1:
                    key = ("v", nz[0])
                elif len(nz) == 2:
                    key = ("e", nz[0], nz[1], w[nz[1]])
                else:
                    key = ("t", t, i, j)
                idx = keys.get(key)
                if idx is None:
                    idx = len(coords)
                    keys[key] = idx
                    coords.append(P0 + (i / N) * (P1 - P0) + (j / N) * (P2 - P0))
                macro_nodes[t, lid[i, j]] = idx

    tris, owner, index = [], [], []
    edge_kind = {}
    leg, hyp = EdgeClass.LEG, EdgeClass.HYPOTENUSE
    for t in range(len(mesh.triangles)):
        nodes = macro_nodes[t]
        for j in range(N):
            for i in range(N - j):
                a, b, c = nodes[lid[i, j]], nodes[lid[i + 1, j]], nodes[lid[i, j + 1]]
                tris.append((a, b, c))
                owner.append(t)
                index.append((i, j, 1))
                kinds = ((a, b, leg), (b, c, hyp), (c, a, leg))
                if i + j <= N - 2:
                    d = nodes[lid[i + 1, j + 1]]
                    tris.append((b, d, c))
                    owner.append(t)
                    index.append((i, j, 0))
                    kinds += ((b, d, leg), (d, c, leg), (c, b, hyp))
                for p, q, kind in kinds:
                    key = (int(min(p, q)), int(max(p, q)))
                    prev = edge_kind.setdefault(key, kind)
                    if prev != kind:
                        raise ValueError(f"inconsistent edge kind for macro mesh at subedge {key}")

    edges = np.array(sorted(edge_kind), dtype=np.int64)
    kind = np.array([edge_kind[tuple(e)] for e in edges], dtype=np.int8)
    return SubdividedMesh(
        macro=mesh,
        N=N,
        points=np.array(coords, dtype=float),
        tris=np.array(tris, dtype=np.int64),
        tri_owner=np.array(owner, dtype=np.int64),
        tri_index=np.array(index, dtype=np.int64),
        edges=edges,
        edge_kind=kind,
        edge_class=np.full(len(edges), EdgeClass.UNIT, dtype=np.int8),
        constraints=np.zeros(len(coords), dtype=np.int8),
        macro_nodes=macro_nodes,
    )


def classify_edges(mesh: SubdividedMesh, tiling: str) -> SubdividedMesh:
    """Assign edge classes in place for ``'equilateral'`` or ``'right'`` tiling."""
    if tiling == "equilateral":
        mesh.edge_class[:] = EdgeClass.UNIT
    elif tiling == "right":
        mesh.edge_class[:] = mesh.edge_kind
    else:
        raise ValueError(f"unknown tiling {tiling!r}")
    return mesh


def apply_initial_rotation(mesh: SubdividedMesh, theta: float, center=None) -> SubdividedMesh:
    """Rigidly rotate all subvertices by ``theta`` about ``center`` (default: bounding-box centre)."""
    if theta == 0:
        return mesh.with_points(mesh.points)
    if center is None:
        lo, hi = mesh.points.min(axis=0), mesh.points.max(axis=0)
        center = 0.5 * (lo + hi)
    center = np.asarray(center, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    return mesh.with_points((mesh.points - center) @ R.T + center)


def set_constraints(mesh: SubdividedMesh, mode: str = "free", tol: float = 1e-12) -> SubdividedMesh:
    """Tag subvertices according to ``mode`` in ``{'free', 'pin_corners', 'slide_boundary'}``.

    Tags are derived from the current coordinates, so call this on the fresh grid.
    """
    c = mesh.constraints
    c[:] = Constraint.FREE
    if mode == "free":
        return mesh
    if mesh.macro.domain is None:
        raise ValueError("constraint modes need a rectangular macro domain")
    x0, x1, y0, y1 = mesh.macro.domain
    x, y = mesh.points[:, 0], mesh.points[:, 1]
    on_l, on_r = np.abs(x - x0) < tol, np.abs(x - x1) < tol
    on_b, on_t = np.abs(y - y0) < tol, np.abs(y - y1) < tol
    corners = (on_l | on_r) & (on_b | on_t)
    if mode == "pin_corners":
        c[corners] = Constraint.FIXED
    elif mode == "slide_boundary":
        c[on_b | on_t] = Constraint.SLIDE_X
        c[on_l | on_r] = Constraint.SLIDE_Y
        c[corners] = Constraint.FIXED
    else:
        raise ValueError(f"unknown constraint mode {mode!r}")
    return mesh
