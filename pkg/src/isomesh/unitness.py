"""Unit and quasi-unit classification of triangles against an ideal simplex.

Four tests, from strict to loose:

* linear unit: every edge has the ideal's metric length;
* Jacobian unit: ``J_K = M^{-1/2} R J_0`` at every sample for one rotation R;
* QU1: quality in ``[a, 1]`` and edge ratios in ``[1/sqrt 2, sqrt 2]``;
* QU2: edges close to geodesics, vertex angles within ``b`` of the ideal's,
  and the same edge-ratio window.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .geodesics import geodesic_bvp_batch, polyline_deviation
from .measures import (
    EQUILATERAL,
    RIGHT,
    IdealSimplex,
    TRIANGLE_RULES,
    affine_jacobian,
    edge_lengths_quadrature,
    inner_angle,
    quality_element,
)
from .mesh import SubdividedMesh, _local_index
from .metrics import MetricField, MetricTensor, evaluate, sqrt_inverse

__all__ = [
    "QU1Result",
    "QU2Result",
    "UnitnessReport",
    "is_unit_linear",
    "check_jacobian_unitness",
    "classify_qu1",
    "classify_qu2",
    "unitness_report",
    "ideal_jacobian",
    "macro_edge_polylines",
]

RATIO_LO, RATIO_HI = 1 / np.sqrt(2.0), np.sqrt(2.0)
_ORDER = ((0, 1), (1, 2), (2, 0))


@dataclass
class QU1Result:
    quality: float
    edge_ratios: np.ndarray
    passed: bool


@dataclass
class QU2Result:
    geodesic_deviations: np.ndarray
    edge_lengths: np.ndarray
    angles: np.ndarray
    angle_offsets: np.ndarray
    edge_ratios: np.ndarray
    verdict: str  # "pass", "fail" or "indeterminate"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


@dataclass
class UnitnessReport:
    is_unit_linear: bool
    jacobian_residual: float
    estimated_rotation: float
    qu1: QU1Result
    qu2: QU2Result | None = None
    extra: dict = dc_field(default_factory=dict)


def _vertices(k0) -> np.ndarray:
    if isinstance(k0, IdealSimplex):
        return k0.vertices
    return np.asarray(k0, dtype=float)


def _edge_lengths(tri, field, npts=16):
    tri = np.asarray(tri, dtype=float)
    return edge_lengths_quadrature(tri, np.array(_ORDER), field, npts)


def ideal_jacobian(k0=EQUILATERAL) -> np.ndarray:
    """Jacobian of the affine map from the reference right triangle onto ``k0``."""
    return affine_jacobian(RIGHT.vertices, _vertices(k0))


def is_unit_linear(tri, field: MetricField, tol: float = 1e-6, k0=EQUILATERAL) -> bool:
    """True when each edge's metric length matches the ideal's within ``tol`` (relative)."""
    ref = np.linalg.norm(np.roll(_vertices(k0), -1, axis=0) - _vertices(k0), axis=1)
    lengths = _edge_lengths(tri, field)
    return bool(np.all(np.abs(lengths / ref - 1.0) <= tol))


def _polar_rotation(A):
    U, _, Vt = np.linalg.svd(A)
    if np.linalg.det(U @ Vt) < 0:
        U[:, -1] = -U[:, -1]
    return U @ Vt


def _sqrt_metric(M: MetricTensor):
    w, P = np.linalg.eigh(M.matrix)
    return (P * np.sqrt(w)) @ P.T


def _pieces(obj):
    """(J_K, sample points) pairs for a triangle or a subdivided macrotriangle."""
    if isinstance(obj, tuple) and isinstance(obj[0], SubdividedMesh):
        mesh, t = obj
        sel = np.flatnonzero(mesh.tri_owner == t)
        out = []
        for s in sel:
            i, j, up = mesh.tri_index[s]
            N = mesh.N
            ref = (np.array([[i, j], [i + 1, j], [i, j + 1]]) if up else
                   np.array([[i + 1, j], [i + 1, j + 1], [i, j + 1]])) / N
            tri = mesh.points[mesh.tris[s]]
            out.append((affine_jacobian(ref, tri), [tri.mean(axis=0)]))
        return out
    tri = np.asarray(obj, dtype=float)
    nodes, _ = TRIANGLE_RULES[2]
    return [(affine_jacobian(RIGHT.vertices, tri), list(nodes @ tri))]


def check_jacobian_unitness(obj, field: MetricField, k0=EQUILATERAL, samples=None):
    """Estimate R in ``J_K = M^{-1/2} R J_0`` and the worst residual of that relation.

    ``obj`` is a triangle (3x2 array) or a ``(SubdividedMesh, macro_index)``
    pair; for the latter every subtriangle's affine Jacobian is compared at
    its centroid. ``samples`` overrides the evaluation points of a single
    triangle. R is the polar factor of ``M^{1/2} J_K J_0^{-1}`` at the first
    sample. Returns ``(R, residual)`` with the residual normalised by
    ``|J_0|_F``.
    """
    J0 = ideal_jacobian(k0)
    pieces = _pieces(obj)
    if samples is not None and not isinstance(obj, tuple):
        pieces = [(pieces[0][0], list(np.atleast_2d(np.asarray(samples, dtype=float))))]
    for JK, _ in pieces:
        if abs(np.linalg.det(JK)) < 1e-300:
            raise ValueError("singular element Jacobian")
    JK, pts = pieces[0]
    M = evaluate(field, pts[0])
    R = _polar_rotation(_sqrt_metric(M) @ JK @ np.linalg.inv(J0))
    norm0 = np.linalg.norm(J0)
    worst = 0.0
    for JK, pts in pieces:
        for p in pts:
            target = sqrt_inverse(evaluate(field, p)) @ R @ J0
            worst = max(worst, float(np.linalg.norm(JK - target) / norm0))
    return R, worst


def classify_qu1(k, k0, field: MetricField, a: float = 0.8, degree: int = 2) -> QU1Result:
    """Quality window ``[a, 1]`` plus homologous edge ratios in ``[1/sqrt 2, sqrt 2]``.

    ``k0`` must already be scaled to the target edge lengths.
    """
    k = np.asarray(k, dtype=float)
    v0 = _vertices(k0)
    ref = np.linalg.norm(np.roll(v0, -1, axis=0) - v0, axis=1)
    if np.any(ref == 0):
        raise ValueError("degenerate ideal simplex")
    q = quality_element(k, v0, field, degree)
    ratios = _edge_lengths(k, field) / ref
    ok = a <= q <= 1.0 + 1e-12 and bool(np.all((ratios >= RATIO_LO) & (ratios <= RATIO_HI)))
    return QU1Result(float(q), ratios, bool(ok))


def _as_polylines(k):
    if isinstance(k, (list, tuple)) and len(k) == 3 and np.ndim(k[0]) == 2:
        return [np.asarray(p, dtype=float) for p in k]
    tri = np.asarray(k, dtype=float)
    return [tri[[a, b]] for a, b in _ORDER]


def _ideal_angles(v0):
    out = []
    for i in range(3):
        u = v0[(i + 1) % 3] - v0[i]
        w = v0[(i - 1) % 3] - v0[i]
        out.append(inner_angle(u, w, np.eye(2)))
    return np.array(out)


def classify_qu2(k, k0, field: MetricField, b: float = np.radians(30.0), geo_tol: float = 0.05,
                 geodesics=None, tol: float = 1e-8, n_steps: int = 200) -> QU2Result:
    """Geodesic edges, angle window ``theta_0 +- b`` and the QU1 edge-ratio window.

    ``k`` is a triangle (3x2) or three edge polylines ordered v0->v1, v1->v2,
    v2->v0. ``geodesics`` may supply precomputed boundary-value solutions
    (one per edge, None for failures). A failed solve makes the verdict
    ``"indeterminate"`` unless another test already fails.
    """
    polys = _as_polylines(k)
    v0 = _vertices(k0)
    ref = np.linalg.norm(np.roll(v0, -1, axis=0) - v0, axis=1)
    lengths = np.array([
        float(edge_lengths_quadrature(p, np.column_stack([np.arange(len(p) - 1), np.arange(1, len(p))]),
                                      field).sum())
        for p in polys
    ])
    ratios = lengths / ref
    if geodesics is None:
        geodesics = geodesic_bvp_batch(field, np.array([p[0] for p in polys]), np.array([p[-1] for p in polys]),
                                       tol, n_steps)
    dev = np.array([np.nan if g is None else polyline_deviation(p, g.points) for p, g in zip(polys, geodesics)])

    angles = np.empty(3)
    for i in range(3):
        out_edge = polys[i]          # leaves vertex i
        in_edge = polys[(i - 1) % 3]  # arrives at vertex i
        u = out_edge[1] - out_edge[0]
        w = in_edge[-2] - in_edge[-1]
        angles[i] = inner_angle(u, w, evaluate(field, out_edge[0]))
    offsets = angles - _ideal_angles(v0)

    fails = (np.any(np.abs(offsets) > b)
             or np.any((ratios < RATIO_LO) | (ratios > RATIO_HI))
             or np.any(dev > geo_tol * lengths))
    if fails:
        verdict = "fail"
    elif np.any(np.isnan(dev)):
        verdict = "indeterminate"
    else:
        verdict = "pass"
    return QU2Result(dev, lengths, angles, offsets, ratios, verdict)


def macro_edge_polylines(mesh: SubdividedMesh, t: int):
    """Subvertex polylines of macrotriangle ``t`` ordered v0->v1, v1->v2, v2->v0."""
    N = mesh.N
    lid = _local_index(N)
    ks = np.arange(N + 1)
    nodes = mesh.macro_nodes[t]
    sides = (nodes[lid[ks, 0]], nodes[lid[N - ks, ks]], nodes[lid[0, N - ks]])
    return [mesh.points[s] for s in sides]


def unitness_report(k, k0, field: MetricField, a: float = 0.8, b: float = np.radians(30.0),
                    geo_tol: float = 0.05, unit_tol: float = 1e-6, with_qu2: bool = True) -> UnitnessReport:
    """All four classifications of one straight triangle ``k`` against ``k0``."""
    k = np.asarray(k, dtype=float)
    R, res = check_jacobian_unitness(k, field, k0)
    return UnitnessReport(
        is_unit_linear=is_unit_linear(k, field, unit_tol, k0),
        jacobian_residual=res,
        estimated_rotation=float(np.arctan2(R[1, 0], R[0, 0])),
        qu1=classify_qu1(k, k0, field, a),
        qu2=classify_qu2(k, k0, field, b, geo_tol) if with_qu2 else None,
    )
