"""Edge-length energy plus log-barrier area penalty over a subdivided mesh.

The cost is ``E = edge_energy + barrier`` with

    edge_energy = 1/2 sum_e (l_M(e)^2 - t_e^2)^2
    barrier     = sum_k F_eps(|k|_M / |k|_target)
    F_eps(x)    = ln((x - eps) / (1 - eps))^2 + (x - 1)^2

Squared lengths use the metric at the edge midpoint and areas the metric at
the centroid, so both are smooth in the coordinates and the gradient below
is exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .mesh import EdgeClass, SubdividedMesh
from .metrics import MetricField

__all__ = [
    "TargetSpec",
    "CostBreakdown",
    "Objective",
    "barrier_function",
    "energy_term",
    "barrier_term",
    "cost",
    "gradient",
]


@dataclass(frozen=True)
class TargetSpec:
    tiling: str
    N: int

    def __post_init__(self):
        if self.tiling not in ("equilateral", "right"):
            raise ValueError(f"unknown tiling {self.tiling!r}")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    def length_target(self, edge_class) -> float:
        if EdgeClass(edge_class) == EdgeClass.HYPOTENUSE:
            return np.sqrt(2.0) / self.N
        return 1.0 / self.N

    def squared_length_targets(self, edge_class) -> np.ndarray:
        t = np.full(len(edge_class), 1.0 / self.N ** 2)
        t[np.asarray(edge_class) == EdgeClass.HYPOTENUSE] = 2.0 / self.N ** 2
        return t

    @property
    def area_target(self) -> float:
        if self.tiling == "equilateral":
            return np.sqrt(3.0) / (4 * self.N ** 2)
        return 1.0 / (2 * self.N ** 2)


@dataclass
class CostBreakdown:
    total: float
    energy: float
    barrier: float
    min_area_ratio: float
    max_abs_gradient: float = float("nan")


def barrier_function(x, eps: float):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.log((x - eps) / (1.0 - eps)) ** 2 + (x - 1.0) ** 2
    return np.where(x > eps, val, np.inf)


class Objective:
    """Cost and gradient of a fixed-connectivity mesh as functions of the coordinates.

    With ``normalize_lengths`` each edge term is divided by its squared
    target, ``(l^2 / t^2 - 1)^2``, which puts lengths and areas on the same
    scale; the default keeps the unnormalised ``(l^2 - t^2)^2``.
    """

    def __init__(self, mesh: SubdividedMesh, field: MetricField, targets: TargetSpec, eps: float = 0.0,
                 normalize_lengths: bool = False):
        if not 0.0 <= eps < 1.0:
            raise ValueError("eps must lie in [0, 1)")
        self.mesh = mesh
        self.field = field
        self.targets = targets
        self.eps = float(eps)
        self.n = mesh.n_points
        self.e0, self.e1 = mesh.edges[:, 0], mesh.edges[:, 1]
        self.t0, self.t1, self.t2 = mesh.tris[:, 0], mesh.tris[:, 1], mesh.tris[:, 2]
        self.sq_targets = targets.squared_length_targets(mesh.edge_class)
        self.area_target = targets.area_target
        self.mask = mesh.free_mask()
        # optional per-edge weights 1/t^4 turn each term into (l^2/t^2 - 1)^2
        self.normalize_lengths = bool(normalize_lengths)
        self.edge_weights = self.sq_targets ** -2 if normalize_lengths else np.ones(len(self.sq_targets))
        self._idx_edges = np.concatenate([self.e0, self.e1])
        self._idx_tris = np.concatenate([self.t0, self.t1, self.t2])

    # ---- pieces -----------------------------------------------------------

    def _edges(self, P, with_grad):
        p0, p1 = P[self.e0], P[self.e1]
        e = p1 - p0
        mid = 0.5 * (p0 + p1)
        m11, m12, m22 = self.field.components(mid[:, 0], mid[:, 1])
        ex, ey = e[:, 0], e[:, 1]
        Me_x = m11 * ex + m12 * ey
        Me_y = m12 * ex + m22 * ey
        L2 = ex * Me_x + ey * Me_y
        r = L2 - self.sq_targets
        wr = self.edge_weights * r
        energy = 0.5 * float(wr @ r)
        if not with_grad:
            return energy, None
        gx = 2 * Me_x
        gy = 2 * Me_y
        # derivative of the midpoint metric contributes equally to both ends
        hx = np.zeros_like(ex)
        hy = np.zeros_like(ey)
        if not self.field.is_constant:
            (a11, a12, a22), (b11, b12, b22) = self.field.component_derivatives(mid[:, 0], mid[:, 1])
            hx = 0.5 * (a11 * ex * ex + 2 * a12 * ex * ey + a22 * ey * ey)
            hy = 0.5 * (b11 * ex * ex + 2 * b12 * ex * ey + b22 * ey * ey)
        r = wr
        w_x = np.concatenate([r * (hx - gx), r * (hx + gx)])
        w_y = np.concatenate([r * (hy - gy), r * (hy + gy)])
        G = np.column_stack([np.bincount(self._idx_edges, w_x, self.n),
                             np.bincount(self._idx_edges, w_y, self.n)])
        return energy, G

    def _areas(self, P):
        p0, p1, p2 = P[self.t0], P[self.t1], P[self.t2]
        a, b = p1 - p0, p2 - p0
        area = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        c = (p0 + p1 + p2) / 3.0
        m11, m12, m22 = self.field.components(c[:, 0], c[:, 1])
        det = m11 * m22 - m12 * m12
        return p0, p1, p2, area, c, (m11, m12, m22), det

    def _barrier(self, P, with_grad):
        p0, p1, p2, area, c, (m11, m12, m22), det = self._areas(P)
        if not np.all(det > 0):
            return np.inf, np.nan, None
        s = np.sqrt(det)
        ratio = s * area / self.area_target
        rmin = float(ratio.min())
        eps = self.eps
        if rmin <= eps:
            return np.inf, rmin, None
        lg = np.log((ratio - eps) / (1.0 - eps))
        barrier = float(lg @ lg + (ratio - 1.0) @ (ratio - 1.0))
        if not with_grad:
            return barrier, rmin, None
        dF = (2 * lg / (ratio - eps) + 2 * (ratio - 1.0)) / self.area_target
        # d(area)/d(p_i) for the three corners
        dax = 0.5 * np.concatenate([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]])
        day = 0.5 * np.concatenate([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]])
        wx = np.tile(dF * s, 3) * dax
        wy = np.tile(dF * s, 3) * day
        if not self.field.is_constant:
            (a11, a12, a22), (b11, b12, b22) = self.field.component_derivatives(c[:, 0], c[:, 1])
            ddx = a11 * m22 + m11 * a22 - 2 * m12 * a12
            ddy = b11 * m22 + m11 * b22 - 2 * m12 * b12
            k = dF * area / (6.0 * s)  # (1/3) * d sqrt(det) = d det / (6 sqrt det)
            wx = wx + np.tile(k * ddx, 3)
            wy = wy + np.tile(k * ddy, 3)
        G = np.column_stack([np.bincount(self._idx_tris, wx, self.n),
                             np.bincount(self._idx_tris, wy, self.n)])
        return barrier, rmin, G

    def _feasible(self, P):
        return bool(np.all(np.isfinite(P))) and bool(np.all(self.field.contains(P[:, 0], P[:, 1])))

    # ---- public -----------------------------------------------------------

    def breakdown(self, points=None) -> CostBreakdown:
        P = self.mesh.points if points is None else np.asarray(points).reshape(-1, 2)
        if not self._feasible(P):
            return CostBreakdown(np.inf, np.inf, np.inf, np.nan)
        energy, _ = self._edges(P, False)
        barrier, rmin, _ = self._barrier(P, False)
        return CostBreakdown(energy + barrier, energy, barrier, rmin)

    def value(self, x) -> float:
        return self.breakdown(x).total

    def value_and_gradient(self, x):
        """Return ``(E, dE/dx)`` for flattened coordinates; gradient is None if E is infinite."""
        P = np.asarray(x, dtype=float).reshape(-1, 2)
        if not self._feasible(P):
            return np.inf, None
        energy, Ge = self._edges(P, True)
        barrier, _, Gb = self._barrier(P, True)
        if not np.isfinite(barrier):
            return np.inf, None
        G = (Ge + Gb) * self.mask
        return energy + barrier, G.ravel()

    __call__ = value_and_gradient

    def step_limit(self, x, d, fraction: float = 0.5) -> float:
        """Largest ``alpha <= 1`` moving no vertex by more than ``fraction`` of its shortest edge."""
        P = np.asarray(x, dtype=float).reshape(-1, 2)
        D = np.asarray(d, dtype=float).reshape(-1, 2)
        h = np.full(self.n, np.inf)
        lengths = np.linalg.norm(P[self.e1] - P[self.e0], axis=1)
        np.minimum.at(h, self.e0, lengths)
        np.minimum.at(h, self.e1, lengths)
        move = np.linalg.norm(D, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(move > 0, move / h, 0.0)
        worst = float(rel.max()) if rel.size else 0.0
        return 1.0 if worst <= fraction else fraction / worst

    def gauss_newton_solver(self, x, damping: float = 0.0, shift: float = 1e-8):
        """Factor a sparse Gauss-Newton model of the Hessian at ``x``.

        The model drops metric-derivative terms and clips the barrier's second
        derivative from below, so it is positive semi-definite; a relative
        diagonal ``shift`` removes the rigid-motion null space. Returns a
        function applying its inverse to a flattened vector, or None if ``x``
        is infeasible.
        """
        P = np.asarray(x, dtype=float).reshape(-1, 2)
        if not self._feasible(P):
            return None
        n2 = 2 * self.n
        rows, cols, vals = [], [], []

        def add_blocks(ia, ib, va, vb, w):
            # w * va vb^T for every pair of dof blocks (ia, ib)
            for a in range(2):
                for b in range(2):
                    rows.append(2 * ia + a)
                    cols.append(2 * ib + b)
                    vals.append(w * va[:, a] * vb[:, b])

        p0, p1 = P[self.e0], P[self.e1]
        e = p1 - p0
        mid = 0.5 * (p0 + p1)
        m11, m12, m22 = self.field.components(mid[:, 0], mid[:, 1])
        v = 2 * np.column_stack([m11 * e[:, 0] + m12 * e[:, 1], m12 * e[:, 0] + m22 * e[:, 1]])
        one = self.edge_weights
        add_blocks(self.e0, self.e0, v, v, one)
        add_blocks(self.e1, self.e1, v, v, one)
        add_blocks(self.e0, self.e1, v, v, -one)
        add_blocks(self.e1, self.e0, v, v, -one)

        q0, q1, q2, area, c, _, det = self._areas(P)
        if not np.all(det > 0):
            return None
        s = np.sqrt(det)
        ratio = s * area / self.area_target
        eps = self.eps
        with np.errstate(divide="ignore", invalid="ignore"):
            u = np.log((ratio - eps) / (1.0 - eps))
            w = 2 * (1 - u) / (ratio - eps) ** 2 + 2.0
        w = np.where(np.isfinite(w), np.maximum(w, 2.0), 2.0)
        k = s / (2 * self.area_target)
        grads = (
            k[:, None] * np.column_stack([q1[:, 1] - q2[:, 1], q2[:, 0] - q1[:, 0]]),
            k[:, None] * np.column_stack([q2[:, 1] - q0[:, 1], q0[:, 0] - q2[:, 0]]),
            k[:, None] * np.column_stack([q0[:, 1] - q1[:, 1], q1[:, 0] - q0[:, 0]]),
        )
        idx = (self.t0, self.t1, self.t2)
        for i in range(3):
            for j in range(3):
                add_blocks(idx[i], idx[j], grads[i], grads[j], w)

        H = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n2, n2)).tocsc()
        diag = H.diagonal()
        free = self.mask.ravel() > 0
        d = np.where(free, shift * max(float(diag[free].mean()) if free.any() else 1.0, 1e-300), 1.0)
        keep = sp.diags(free.astype(float))
        H = keep @ H @ keep + sp.diags(d + damping * diag * free)
        lu = splu(H.tocsc())

        def solve(vec):
            return lu.solve(vec * free) * free

        return solve


def energy_term(mesh: SubdividedMesh, field: MetricField, targets: TargetSpec) -> float:
    return Objective(mesh, field, targets)._edges(mesh.points, False)[0]


def barrier_term(mesh: SubdividedMesh, field: MetricField, targets: TargetSpec, eps: float = 0.0) -> float:
    return Objective(mesh, field, targets, eps)._barrier(mesh.points, False)[0]


def cost(mesh: SubdividedMesh, field: MetricField, targets: TargetSpec, eps: float = 0.0) -> CostBreakdown:
    obj = Objective(mesh, field, targets, eps)
    b = obj.breakdown()
    if np.isfinite(b.total):
        _, g = obj.value_and_gradient(mesh.points.ravel())
        b.max_abs_gradient = float(np.abs(g).max()) if g.size else 0.0
    return b


def gradient(mesh: SubdividedMesh, field: MetricField, targets: TargetSpec, eps: float = 0.0) -> np.ndarray:
    """Exact gradient as an (n, 2) array; constrained components are zeroed."""
    E, g = Objective(mesh, field, targets, eps).value_and_gradient(mesh.points.ravel())
    if g is None:
        raise ValueError("gradient undefined: cost is infinite at the current coordinates")
    return g.reshape(-1, 2)
