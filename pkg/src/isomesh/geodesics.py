"""Geodesics of a metric field: Christoffel symbols, RK4 shooting, and edge deviation.

The boundary-value solver shoots from ``x0`` with a launch angle measured
from the chord ``x1 - x0``. For each angle the speed is rescaled until the
endpoint at ``t = 1`` has the right along-chord coordinate, which leaves a
signed transverse miss as a function of the angle alone; that function is
bracketed on a coarse scan and then bisected. All edges of a batch are
advanced in lockstep so the field is evaluated on arrays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .metrics import DegenerateMetricError, MetricField

__all__ = [
    "GeodesicConvergenceError",
    "GeodesicPolyline",
    "christoffel",
    "christoffel_batch",
    "geodesic_ivp",
    "geodesic_bvp",
    "geodesic_bvp_batch",
    "geodesic_deviation",
    "polyline_deviation",
    "resample_polyline",
]

log = logging.getLogger("isomesh.geodesics")


class GeodesicConvergenceError(RuntimeError):
    """The shooting method could not bracket or resolve the launch angle."""


@dataclass
class GeodesicPolyline:
    points: np.ndarray
    velocity: np.ndarray
    length: float
    complete: bool = True

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]


def christoffel_batch(field: MetricField, x, y) -> np.ndarray:
    """Christoffel symbols ``G[..., k, i, j]`` of the second kind at many points."""
    m11, m12, m22 = field.components(x, y)
    det = m11 * m22 - m12 * m12
    if np.any(~(det > 0)):
        raise DegenerateMetricError("metric is not positive-definite")
    shape = np.shape(det)
    g_inv = np.empty(shape + (2, 2))
    g_inv[..., 0, 0] = m22 / det
    g_inv[..., 0, 1] = g_inv[..., 1, 0] = -m12 / det
    g_inv[..., 1, 1] = m11 / det
    (a11, a12, a22), (b11, b12, b22) = field.component_derivatives(x, y)
    dg = np.empty(shape + (2, 2, 2))  # dg[..., l, i, j] = d_l g_ij
    for l, (c11, c12, c22) in enumerate(((a11, a12, a22), (b11, b12, b22))):
        dg[..., l, 0, 0] = c11
        dg[..., l, 0, 1] = dg[..., l, 1, 0] = c12
        dg[..., l, 1, 1] = c22
    # first kind: G_l,ij = (d_i g_jl + d_j g_il - d_l g_ij) / 2
    first = 0.5 * (np.einsum("...ijl->...lij", dg) + np.einsum("...jil->...lij", dg) - dg)
    return np.einsum("...kl,...lij->...kij", g_inv, first)


def christoffel(field: MetricField, p) -> np.ndarray:
    """2x2x2 array ``G[k, i, j]`` at the point ``p``."""
    p = np.asarray(p, dtype=float)
    return christoffel_batch(field, p[0:1], p[1:2])[0]


def _accel(field, X, V):
    # christoffel_batch contracted with (V, V), written out for speed
    x, y = X[:, 0], X[:, 1]
    m11, m12, m22 = field.components(x, y)
    (a11, a12, a22), (b11, b12, b22) = field.component_derivatives(x, y)
    vx, vy = V[:, 0], V[:, 1]
    xx, xy, yy = vx * vx, vx * vy, vy * vy
    lx = 0.5 * a11 * xx + b11 * xy + (b12 - 0.5 * a22) * yy
    ly = (a12 - 0.5 * b11) * xx + a22 * xy + 0.5 * b22 * yy
    det = m11 * m22 - m12 * m12
    return np.column_stack([-(m22 * lx - m12 * ly) / det, -(m11 * ly - m12 * lx) / det])


def _metric_speed(field, X, V):
    m11, m12, m22 = field.components(X[..., 0], X[..., 1])
    vx, vy = V[..., 0], V[..., 1]
    return np.sqrt(m11 * vx * vx + 2 * m12 * vx * vy + m22 * vy * vy)


def _integrate(field, X0, V0, t_end, n_steps, keep=False):
    """Classical RK4 for a batch; returns end states, inside flags and optional paths."""
    h = t_end / n_steps
    X, V = X0.copy(), V0.copy()
    inside = np.ones(len(X), dtype=bool)
    path = [X.copy()] if keep else None
    vel = [V.copy()] if keep else None
    for _ in range(n_steps):
        k1x, k1v = V, _accel(field, X, V)
        X2, V2 = X + 0.5 * h * k1x, V + 0.5 * h * k1v
        k2x, k2v = V2, _accel(field, X2, V2)
        X3, V3 = X + 0.5 * h * k2x, V + 0.5 * h * k2v
        k3x, k3v = V3, _accel(field, X3, V3)
        X4, V4 = X + h * k3x, V + h * k3v
        k4x, k4v = V4, _accel(field, X4, V4)
        Xn = X + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        Vn = V + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        ok = field.contains(Xn[:, 0], Xn[:, 1]) & np.all(np.isfinite(Xn), axis=1)
        inside &= ok
        # frozen trajectories stop at their last valid state
        X = np.where(inside[:, None], Xn, X)
        V = np.where(inside[:, None], Vn, V)
        if keep:
            path.append(X.copy())
            vel.append(V.copy())
        if not inside.any():
            break
    if keep:
        return X, V, inside, np.stack(path, axis=1), np.stack(vel, axis=1)
    return X, V, inside


def _trapezoid_length(field, path, vel, h):
    s = _metric_speed(field, path, vel)
    return float(h * (s.sum() - 0.5 * (s[0] + s[-1])))


def geodesic_ivp(field: MetricField, x0, v0, t_end: float = 1.0, n_steps: int = 200) -> GeodesicPolyline:
    """Integrate ``x'' = -G(x)(x', x')`` with fixed-step RK4.

    If the trajectory leaves the field's domain the polyline is truncated at
    the last interior sample and ``complete`` is False.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    X0 = np.asarray(x0, dtype=float).reshape(1, 2)
    V0 = np.asarray(v0, dtype=float).reshape(1, 2)
    h = t_end / n_steps
    X0_in = field.contains(X0[:, 0], X0[:, 1])
    if not X0_in[0]:
        raise ValueError("starting point outside the field domain")
    _, _, inside, path, vel = _integrate(field, X0, V0, t_end, n_steps, keep=True)
    pts, vs = path[0], vel[0]
    if not inside[0]:
        # drop the repeated frozen samples
        last = len(pts) - 1
        while last > 0 and np.array_equal(pts[last], pts[last - 1]):
            last -= 1
        pts, vs = pts[: last + 1], vs[: last + 1]
    return GeodesicPolyline(pts, V0[0].copy(), _trapezoid_length(field, pts, vs, h), bool(inside[0]))


def _rot(c, theta):
    ct, st = np.cos(theta), np.sin(theta)
    return np.column_stack([ct * c[:, 0] - st * c[:, 1], st * c[:, 0] + ct * c[:, 1]])


class _Shooter:
    """Shared state for a batch of two-point problems."""

    def __init__(self, field, X0, X1, n_steps, tol):
        self.field, self.X0, self.X1 = field, X0, X1
        self.n_steps, self.tol = n_steps, tol
        self.c = X1 - X0
        self.L = np.linalg.norm(self.c, axis=1)
        self.u = self.c / self.L[:, None]
        self.n = np.column_stack([-self.u[:, 1], self.u[:, 0]])

    def miss(self, theta, k, active, overshoot=1.5):
        """Transverse miss for launch angles ``theta`` once the along-chord reach matches.

        A faster launch traces the same curve sooner, so each angle needs one
        integration past the target; the crossing time is found on the
        cubic Hermite interpolant of the RK4 samples and becomes the new
        speed factor. ``k`` is updated in place for the active problems.
        """
        out = np.full(len(theta), np.nan)
        idx = np.flatnonzero(active)
        todo = idx
        for _ in range(20):
            if todo.size == 0:
                break
            d = _rot(self.c[todo], theta[todo]) * k[todo, None]
            _, _, inside, path, vel = _integrate(self.field, self.X0[todo], d, overshoot, self.n_steps, keep=True)
            r = path - self.X0[todo, None, :]
            along = np.einsum("bti,bi->bt", r, self.u[todo]) - self.L[todo, None]
            h = overshoot / self.n_steps
            retry = []
            for row, b in enumerate(todo):
                a = along[row]
                cross = np.flatnonzero((a[:-1] < 0) & (a[1:] >= 0))
                if cross.size == 0:
                    if inside[row] and a[-1] < 0 and np.all(np.isfinite(a)):
                        k[b] *= 2.0
                        retry.append(b)
                    continue
                i = cross[0]
                t = _hermite_root(a[i], a[i + 1], vel[row, i] @ self.u[b] * h,
                                  vel[row, i + 1] @ self.u[b] * h)
                p = _hermite(path[row, i], path[row, i + 1], vel[row, i] * h, vel[row, i + 1] * h, t)
                out[b] = (p - self.X0[b]) @ self.n[b]
                k[b] *= (i + t) * h
            todo = np.asarray(retry, dtype=int)
        return out

    def polish(self, theta, k, idx, iters=12):
        """Newton on the time-1 endpoint over (angle, speed factor).

        The bracketing runs integrate past the target with a different step,
        so their answer is only accurate to the RK4 error; this makes the
        returned polyline itself hit the target. The Jacobian comes from
        forward differences; rows that fail to improve keep their last iterate.
        """
        idx = np.asarray(idx)
        eps = 1e-7
        for _ in range(iters):
            th, kk = theta[idx], k[idx]
            c = self.c[idx]
            D = np.concatenate([_rot(c, th) * kk[:, None], _rot(c, th + eps) * kk[:, None],
                                _rot(c, th) * (kk * (1 + eps))[:, None]])
            X0 = np.concatenate([self.X0[idx]] * 3)
            Xe, _, inside = _integrate(self.field, X0, D, 1.0, self.n_steps)
            n = len(idx)
            r = Xe[:n] - self.X1[idx]
            err = np.linalg.norm(r, axis=1)
            ok = inside[:n] & inside[n:2 * n] & inside[2 * n:] & (err > 0.01 * self.tol)
            if not ok.any():
                break
            J = np.stack([(Xe[n:2 * n] - Xe[:n]) / eps, (Xe[2 * n:] - Xe[:n]) / (eps * kk[:, None])], axis=2)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            ok &= np.abs(det) > 0
            safe = np.where(ok, det, 1.0)
            dth = -(J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / safe
            dk = -(-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / safe
            ok &= np.abs(dth) < 0.2
            theta[idx[ok]] += dth[ok]
            k[idx[ok]] = np.maximum(kk[ok] + dk[ok], 0.5 * kk[ok])


def _hermite(p0, p1, m0, m1, t):
    t2, t3 = t * t, t * t * t
    return ((2 * t3 - 3 * t2 + 1) * p0 + (t3 - 2 * t2 + t) * m0
            + (-2 * t3 + 3 * t2) * p1 + (t3 - t2) * m1)


def _hermite_root(f0, f1, m0, m1):
    """Root in [0, 1] of the cubic Hermite interpolant with f0 < 0 <= f1."""
    lo, hi = 0.0, 1.0
    t = f0 / (f0 - f1) if f1 != f0 else 0.5
    for _ in range(60):
        v = _hermite(f0, f1, m0, m1, t)
        if v < 0:
            lo = t
        else:
            hi = t
        dv = (6 * t * t - 6 * t) * f0 + (3 * t * t - 4 * t + 1) * m0 + (-6 * t * t + 6 * t) * f1 + (3 * t * t - 2 * t) * m1
        tn = t - v / dv if dv != 0 else 0.5 * (lo + hi)
        if not lo < tn < hi:
            tn = 0.5 * (lo + hi)
        if abs(tn - t) < 1e-15:
            return tn
        t = tn
    return t


def geodesic_bvp_batch(field: MetricField, X0, X1, tol: float = 1e-8, n_steps: int = 200,
                       max_angle_deg: float = 60.0, scan_deg: float = 5.0, max_bisections: int = 80):
    """Solve many two-point problems at once.

    Returns a list with a :class:`GeodesicPolyline` per pair, or None where
    no launch angle could be bracketed or resolved.
    """
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    if X0.shape != X1.shape:
        raise ValueError("endpoint arrays differ in shape")
    B = len(X0)
    if B == 0:
        return []
    if np.any(np.all(X0 == X1, axis=1)):
        raise ValueError("coincident endpoints")
    sh = _Shooter(field, X0, X1, n_steps, tol)
    if not (np.all(field.contains(X0[:, 0], X0[:, 1])) and np.all(field.contains(X1[:, 0], X1[:, 1]))):
        raise ValueError("endpoint outside the field domain")

    k = np.ones(B)
    theta = np.zeros(B)
    f0 = sh.miss(theta, k, np.ones(B, dtype=bool))
    done = np.isfinite(f0) & (np.abs(f0) <= tol)
    lo, hi = np.zeros(B), np.zeros(B)
    f_lo = f0.copy()
    k_lo = k.copy()
    bracketed = done.copy()

    # scan 0, +-5, +-10, ... for a sign change of the transverse miss
    steps = int(round(max_angle_deg / scan_deg))
    prev = {+1: (np.zeros(B), f0.copy(), k.copy()), -1: (np.zeros(B), f0.copy(), k.copy())}
    for s in range(1, steps + 1):
        if bracketed.all():
            break
        for sign in (+1, -1):
            active = ~bracketed
            if not active.any():
                break
            th = np.full(B, sign * np.radians(s * scan_deg))
            p_th, p_f, p_k = prev[sign]
            kk = p_k.copy()
            f = sh.miss(th, kk, active)
            # a jump in the speed factor means the sign change comes from a
            # different branch of crossings, not from a continuous root
            smooth = (kk < 2 * p_k) & (p_k < 2 * kk)
            hit = active & np.isfinite(f) & np.isfinite(p_f) & (np.sign(f) != np.sign(p_f)) & smooth
            exact = active & np.isfinite(f) & (np.abs(f) <= tol)
            lo[hit], hi[hit], f_lo[hit], k_lo[hit] = p_th[hit], th[hit], p_f[hit], p_k[hit]
            bracketed |= hit
            theta[exact], k[exact] = th[exact], kk[exact]
            done |= exact
            bracketed |= exact
            prev[sign] = (np.where(active, th, p_th), np.where(active, f, p_f), np.where(active, kk, p_k))

    failed = ~bracketed
    k_mid = k_lo.copy()
    for _ in range(max_bisections):
        active = bracketed & ~done & ~failed
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        f = sh.miss(mid, k_mid, active)
        nan = active & ~np.isfinite(f)
        failed |= nan
        ok = active & ~nan
        collapsed = ok & (np.abs(hi - lo) < 1e-15)
        failed |= collapsed & (np.abs(f) > 1e3 * tol)
        conv = ok & ((np.abs(f) <= tol) | (collapsed & (np.abs(f) <= 1e3 * tol)))
        theta[conv], k[conv] = mid[conv], k_mid[conv]
        done |= conv
        same = ok & ~conv & (np.sign(f) == np.sign(f_lo))
        lo[same], f_lo[same] = mid[same], f[same]
        other = ok & ~conv & ~same
        hi[other] = mid[other]
    failed |= ~done

    out = []
    ok_idx = np.flatnonzero(~failed)
    if ok_idx.size:
        sh.polish(theta, k, ok_idx)
    d = _rot(sh.c, theta) * k[:, None]
    h = 1.0 / n_steps
    if ok_idx.size:
        _, _, inside, paths, vels = _integrate(field, X0[ok_idx], d[ok_idx], 1.0, n_steps, keep=True)
    results = {}
    for r, b in enumerate(ok_idx):
        pts = paths[r]
        if not inside[r] or np.linalg.norm(pts[-1] - X1[b]) > max(tol, 1e-12) * 10:
            continue
        results[b] = GeodesicPolyline(pts, d[b].copy(), _trapezoid_length(field, pts, vels[r], h), True)
    for b in range(B):
        out.append(results.get(b))
    n_fail = sum(r is None for r in out)
    if n_fail:
        log.warning("%d of %d geodesic boundary-value problems did not converge", n_fail, B)
    return out


def geodesic_bvp(field: MetricField, x0, x1, tol: float = 1e-8, n_steps: int = 200) -> GeodesicPolyline:
    """Geodesic from ``x0`` whose endpoint lies within ``tol`` of ``x1``.

    Raises :class:`GeodesicConvergenceError` when no launch angle within
    60 degrees of the chord brackets the target.
    """
    res = geodesic_bvp_batch(field, np.asarray(x0, dtype=float)[None], np.asarray(x1, dtype=float)[None],
                             tol, n_steps)[0]
    if res is None:
        raise GeodesicConvergenceError(f"no geodesic found from {tuple(x0)} to {tuple(x1)}")
    return res


def resample_polyline(points, n: int) -> np.ndarray:
    """``n`` samples equally spaced in Euclidean arc length along ``points``."""
    points = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(points[:1], n, axis=0)
    t = np.linspace(0.0, s[-1], n)
    return np.column_stack([np.interp(t, s, points[:, 0]), np.interp(t, s, points[:, 1])])


def polyline_deviation(a, b, n: int | None = None) -> float:
    """Max distance between two polylines after resampling both by arc length."""
    n = n or max(len(a), len(b), 2) * 4
    return float(np.linalg.norm(resample_polyline(a, n) - resample_polyline(b, n), axis=1).max())


def geodesic_deviation(edge_points, field: MetricField, tol: float = 1e-8, n_steps: int = 200) -> float:
    """Max Euclidean distance between a polyline edge and the geodesic joining its ends.

    Returns NaN when the boundary-value problem cannot be solved.
    """
    edge_points = np.asarray(edge_points, dtype=float)
    try:
        geo = geodesic_bvp(field, edge_points[0], edge_points[-1], tol, n_steps)
    except GeodesicConvergenceError:
        return float("nan")
    return polyline_deviation(edge_points, geo.points)
