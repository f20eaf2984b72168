"""Metric-weighted lengths, energies, areas, angles and element quality."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metrics import MetricTensor, MetricField

__all__ = [
    "IdealSimplex",
    "EQUILATERAL",
    "RIGHT",
    "J_EQ",
    "ideal_simplex",
    "segment_length_midpoint",
    "segment_length_quadrature",
    "edge_energy",
    "triangle_area_metric",
    "inner_angle",
    "affine_jacobian",
    "distortion_pointwise",
    "quality_element",
    "quality_closed_form",
    "edge_lengths_midpoint",
    "edge_lengths_quadrature",
    "metric_areas",
    "element_qualities",
    "TRIANGLE_RULES",
]

SQRT3 = np.sqrt(3.0)


@dataclass(frozen=True)
class IdealSimplex:
    kind: str
    vertices: np.ndarray

    @property
    def euclidean_area(self) -> float:
        a = self.vertices[1] - self.vertices[0]
        b = self.vertices[2] - self.vertices[0]
        return 0.5 * float(a[0] * b[1] - a[1] * b[0])

    @property
    def edge_lengths(self) -> np.ndarray:
        v = self.vertices
        return np.linalg.norm(v[[1, 2, 0]] - v, axis=1)


EQUILATERAL = IdealSimplex("equilateral", np.array([[0.0, 0.0], [1.0, 0.0], [0.5, SQRT3 / 2]]))
RIGHT = IdealSimplex("right", np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
# Jacobian of the affine map from the reference right triangle onto the equilateral one.
J_EQ = np.array([[1.0, 0.5], [0.0, SQRT3 / 2]])


def ideal_simplex(kind: str) -> IdealSimplex:
    return {"equilateral": EQUILATERAL, "right": RIGHT}[kind]


# Symmetric triangle rules as (barycentric nodes, weights summing to one).
_A, _B = 0.445948490915965, 0.091576213509771
TRIANGLE_RULES = {
    2: (np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
        np.full(3, 1 / 3)),
    4: (np.array([[1 - 2 * _A, _A, _A], [_A, 1 - 2 * _A, _A], [_A, _A, 1 - 2 * _A],
                  [1 - 2 * _B, _B, _B], [_B, 1 - 2 * _B, _B], [_B, _B, 1 - 2 * _B]]),
        np.array([0.223381589678011] * 3 + [0.109951743655322] * 3)),
}


def _mat(M):
    return M.matrix if isinstance(M, MetricTensor) else np.asarray(M, dtype=float)


def _quadratic_form(m, e):
    """e^T M e for component triples ``m`` and stacked vectors ``e`` (..., 2)."""
    m11, m12, m22 = m
    ex, ey = e[..., 0], e[..., 1]
    return m11 * ex * ex + 2 * m12 * ex * ey + m22 * ey * ey


# -- vectorised kernels ---------------------------------------------------------


def edge_lengths_midpoint(points, edges, field: MetricField) -> np.ndarray:
    p0, p1 = points[edges[:, 0]], points[edges[:, 1]]
    mid = 0.5 * (p0 + p1)
    return np.sqrt(_quadratic_form(field.components(mid[:, 0], mid[:, 1]), p1 - p0))


def _gauss(npts):
    t, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (t + 1), 0.5 * w


def edge_lengths_quadrature(points, edges, field: MetricField, npts: int = 16) -> np.ndarray:
    p0, p1 = points[edges[:, 0]], points[edges[:, 1]]
    return _segment_integral(p0, p1, field, npts, np.sqrt)


def _segment_integral(p0, p1, field, npts, g):
    if npts < 1:
        raise ValueError("npts must be >= 1")
    t, w = _gauss(npts)
    e = p1 - p0
    q = p0[:, None, :] + t[None, :, None] * e[:, None, :]
    m = field.components(q[..., 0], q[..., 1])
    vals = g(_quadratic_form(m, e[:, None, :]))
    return vals @ w


def metric_areas(points, tris, field: MetricField) -> np.ndarray:
    """Signed metric areas with the metric sampled at each centroid."""
    p0, p1, p2 = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    a, b = p1 - p0, p2 - p0
    area = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    c = (p0 + p1 + p2) / 3.0
    m11, m12, m22 = field.components(c[:, 0], c[:, 1])
    return np.sqrt(m11 * m22 - m12 * m12) * area


def _edge_matrices(p0, p1, p2):
    E = np.empty(p0.shape[:-1] + (2, 2))
    E[..., :, 0] = p1 - p0
    E[..., :, 1] = p2 - p0
    return E


def element_qualities(points, tris, ideal_tris, field: MetricField, degree: int = 2) -> np.ndarray:
    """Distortion-based quality of every linear triangle against its ideal counterpart.

    ``ideal_tris`` is an (n, 3, 2) array of ideal vertex coordinates with the
    same vertex correspondence as ``tris``. Inverted elements get quality 0.
    """
    nodes, weights = TRIANGLE_RULES[degree]
    k = points[tris]
    k0 = np.asarray(ideal_tris, dtype=float)
    Ek = _edge_matrices(k[:, 0], k[:, 1], k[:, 2])
    E0 = _edge_matrices(k0[:, 0], k0[:, 1], k0[:, 2])
    J = Ek @ np.linalg.inv(E0)
    detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    q = np.einsum("qa,nad->nqd", nodes, k)
    m11, m12, m22 = field.components(q[..., 0], q[..., 1])
    # trace(J^T M J) = sum over columns of J of c^T M c
    tr = _quadratic_form((m11, m12, m22), J[:, None, :, 0]) + _quadratic_form((m11, m12, m22), J[:, None, :, 1])
    sdet = np.abs(detJ)[:, None] * np.sqrt(m11 * m22 - m12 * m12)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = 0.5 * tr / sdet
        Q = (eta ** 2 @ weights) ** -0.5
    return np.where(detJ > 0, Q, 0.0)


# -- scalar API ---------------------------------------------------------------


def _pts(*ps):
    return [np.asarray(p, dtype=float).reshape(1, 2) for p in ps]


def segment_length_midpoint(p0, p1, field: MetricField) -> float:
    a, b = _pts(p0, p1)
    pts = np.vstack([a, b])
    return float(edge_lengths_midpoint(pts, np.array([[0, 1]]), field)[0])


def segment_length_quadrature(p0, p1, field: MetricField, npts: int = 16) -> float:
    a, b = _pts(p0, p1)
    return float(_segment_integral(a, b, field, npts, np.sqrt)[0])


def edge_energy(p0, p1, field: MetricField, npts: int = 16) -> float:
    a, b = _pts(p0, p1)
    return float(0.5 * _segment_integral(a, b, field, npts, lambda v: v)[0])


def triangle_area_metric(tri, field: MetricField) -> float:
    tri = np.asarray(tri, dtype=float)
    return float(metric_areas(tri, np.array([[0, 1, 2]]), field)[0])


def inner_angle(u, v, M) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    M = _mat(M)
    nu, nv = np.sqrt(u @ M @ u), np.sqrt(v @ M @ v)
    if nu == 0 or nv == 0:
        raise ValueError("angle undefined for a zero vector")
    return float(np.arccos(np.clip((u @ M @ v) / (nu * nv), -1.0, 1.0)))


def affine_jacobian(src, dst) -> np.ndarray:
    """Constant Jacobian J with J (src_i - src_0) = dst_i - dst_0."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    Es = _edge_matrices(src[0], src[1], src[2])
    if abs(np.linalg.det(Es)) < 1e-300:
        raise ValueError("degenerate source triangle")
    return _edge_matrices(dst[0], dst[1], dst[2]) @ np.linalg.inv(Es)


def distortion_pointwise(J, M) -> float:
    J = np.asarray(J, dtype=float)
    G = J.T @ _mat(M) @ J
    d = np.linalg.det(G)
    if np.linalg.det(J) == 0 or d <= 0:
        return np.inf
    return float(0.5 * np.trace(G) / np.sqrt(d))


def quality_element(k, k0, field: MetricField, degree: int = 2) -> float:
    k = np.asarray(k, dtype=float)
    k0 = np.asarray(k0, dtype=float)
    return float(element_qualities(k, np.array([[0, 1, 2]]), k0[None], field, degree)[0])


def quality_closed_form(k, k0, M) -> float:
    """Linear-element, constant-metric quality ``n |K|_M / (|K0| tr(J^T M J))``."""
    M = _mat(M)
    J = affine_jacobian(k0, k)
    area = np.sqrt(np.linalg.det(M)) * 0.5 * np.linalg.det(_edge_matrices(*np.asarray(k, dtype=float)))
    a0 = 0.5 * np.linalg.det(_edge_matrices(*np.asarray(k0, dtype=float)))
    return float(2.0 * area / (a0 * np.trace(J.T @ M @ J)))
