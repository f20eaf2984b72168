"""Analytic Riemannian metric fields on planar domains.

Every field exposes two vectorised primitives, ``components(x, y)`` and
``component_derivatives(x, y)``, returning the three independent entries
``(m11, m12, m22)`` of the symmetric component matrix and their partials.
The scalar helpers :func:`evaluate` and :func:`derivatives` wrap them with
domain and definiteness checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DomainError",
    "DegenerateMetricError",
    "MetricTensor",
    "MetricDerivatives",
    "MetricField",
    "ConstantField",
    "GraphSurface",
    "SqrtInverseLinear",
    "BoundaryLayerField",
    "CATALOG",
    "make_field",
    "evaluate",
    "derivatives",
    "sqrt_inverse",
    "pullback",
    "anisotropic_quotient",
]


class DomainError(ValueError):
    """A point lies outside the region where a field is defined."""


class DegenerateMetricError(ValueError):
    """A metric (or a quantity derived from it) is not positive-definite."""


@dataclass(frozen=True)
class MetricTensor:
    m11: float
    m12: float
    m22: float

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])

    @property
    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m12

    def is_positive_definite(self) -> bool:
        return self.m11 > 0 and self.det > 0

    @classmethod
    def from_matrix(cls, a) -> "MetricTensor":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0, 0]), float(0.5 * (a[0, 1] + a[1, 0])), float(a[1, 1]))


@dataclass(frozen=True)
class MetricDerivatives:
    dM_dx: MetricTensor
    dM_dy: MetricTensor
    nonsmooth: bool = False


# -- fields ------------------------------------------------------------------


class MetricField:
    """Base class; subclasses implement the two vectorised primitives.

    ``bounds`` is the open rectangle ``(x0, x1, y0, y1)`` on which the analytic
    expression is valid; infinite by default.
    """

    name = "field"
    bounds = (-np.inf, np.inf, -np.inf, np.inf)

    def components(self, x, y):
        raise NotImplementedError

    def component_derivatives(self, x, y):
        raise NotImplementedError

    def nonsmooth(self, x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape, dtype=bool)

    def contains(self, x, y):
        x0, x1, y0, y1 = self.bounds
        x = np.asarray(x)
        y = np.asarray(y)
        return (x > x0) & (x < x1) & (y > y0) & (y < y1)

    @property
    def is_constant(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"id": self.name, "params": {}}

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class ConstantField(MetricField):
    name = "constant"

    def __init__(self, m11=1.0, m12=0.0, m22=1.0):
        self.m = (float(m11), float(m12), float(m22))
        if not (self.m[0] > 0 and self.m[0] * self.m[2] - self.m[1] ** 2 > 0):
            raise DegenerateMetricError(f"constant metric {self.m} is not SPD")

    def components(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return tuple(np.full(shape, c) for c in self.m)

    def component_derivatives(self, x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        z = np.zeros(shape)
        return (z, z, z), (z, z, z)

    @property
    def is_constant(self) -> bool:
        return True

    def to_dict(self) -> dict:
        m11, m12, m22 = self.m
        return {"id": "constant", "params": {"m11": m11, "m12": m12, "m22": m22}}


class GraphSurface(MetricField):
    """Metric induced on the parameter plane by the surface ``(x, y, f(x, y))``.

    ``grad(x, y)`` returns ``(fx, fy)`` and ``hess(x, y)`` returns
    ``(fxx, fxy, fyy)``; the metric is ``I + grad f grad f^T``.
    """

    def __init__(self, name, grad, hess, constant=False):
        self.name = name
        self._grad = grad
        self._hess = hess
        self._constant = constant

    def components(self, x, y):
        fx, fy = self._grad(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return 1.0 + fx * fx, fx * fy, 1.0 + fy * fy

    def component_derivatives(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        fx, fy = self._grad(x, y)
        fxx, fxy, fyy = self._hess(x, y)
        ddx = (2 * fx * fxx, fxx * fy + fx * fxy, 2 * fy * fxy)
        ddy = (2 * fx * fxy, fxy * fy + fx * fyy, 2 * fy * fyy)
        return ddx, ddy

    @property
    def is_constant(self) -> bool:
        return self._constant


class SqrtInverseLinear(MetricField):
    """Field whose inverse square root is affine: ``M^{-1/2}(p) = S0 + x Sx + y Sy``.

    Each of ``S0, Sx, Sy`` is a symmetric 2x2 matrix given as ``(s11, s12, s22)``.
    The default reproduces S4, ``M^{-1/2} = diag(x, 1)``, valid on ``0 < x < 1``.
    """

    name = "s4"

    def __init__(self, s0=(0.0, 0.0, 1.0), sx=(1.0, 0.0, 0.0), sy=(0.0, 0.0, 0.0),
                 bounds=(0.0, 1.0, -np.inf, np.inf)):
        self.s0 = tuple(map(float, s0))
        self.sx = tuple(map(float, sx))
        self.sy = tuple(map(float, sy))
        self.bounds = tuple(bounds)

    def _s(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return tuple(a + x * b + y * c for a, b, c in zip(self.s0, self.sx, self.sy))

    @staticmethod
    def _inv(a11, a12, a22):
        d = a11 * a22 - a12 * a12
        return a22 / d, -a12 / d, a11 / d

    @staticmethod
    def _mul(a, b):
        # a, b: full 2x2 tuples (a11, a12, a21, a22)
        return (a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2], a[2] * b[1] + a[3] * b[3])

    def components(self, x, y):
        i11, i12, i22 = self._inv(*self._s(x, y))
        return i11 * i11 + i12 * i12, i12 * (i11 + i22), i12 * i12 + i22 * i22

    def component_derivatives(self, x, y):
        i11, i12, i22 = self._inv(*self._s(x, y))
        inv = (i11, i12, i12, i22)
        inv2 = self._mul(inv, inv)
        out = []
        for ds in (self.sx, self.sy):
            d = (ds[0], ds[1], ds[1], ds[2])
            a = self._mul(self._mul(inv, d), inv2)
            b = self._mul(self._mul(inv2, d), inv)
            out.append((-(a[0] + b[0]), -(a[1] + b[1]), -(a[3] + b[3])))
        return tuple(out)

    def contains(self, x, y):
        inside = super().contains(x, y)
        s11, s12, s22 = self._s(x, y)
        return inside & (s11 > 0) & (s11 * s22 - s12 * s12 > 0)

    def to_dict(self) -> dict:
        if (self.s0, self.sx, self.sy) == ((0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.0, 0.0, 0.0)):
            return {"id": "s4", "params": {}}
        return {"id": "sqrt_inverse_linear",
                "params": {"s0": list(self.s0), "sx": list(self.sx), "sy": list(self.sy),
                           "bounds": [float(b) for b in self.bounds]}}


class BoundaryLayerField(MetricField):
    """Undulating boundary layer (S6).

    ``M = J^T diag(1, h^-2) J`` for the map ``phi(x, y) = (x, psi)`` with
    ``psi = (10 y - cos 2 pi x) / sqrt(100 + 4 pi^2)`` and ``h = 0.1 + 2 |psi|``.
    With ``smooth_abs`` the absolute value becomes ``sqrt(psi^2 + delta^2)``.
    """

    name = "s6"
    SCALE = np.sqrt(100.0 + 4.0 * np.pi ** 2)

    def __init__(self, smooth_abs=False, delta=1e-8):
        self.smooth_abs = bool(smooth_abs)
        self.delta = float(delta)

    def _parts(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        s = self.SCALE
        tpx = 2 * np.pi * x
        psi = (10 * y - np.cos(tpx)) / s
        a = 2 * np.pi * np.sin(tpx) / s
        a_x = 4 * np.pi ** 2 * np.cos(tpx) / s
        c = 10.0 / s
        if self.smooth_abs:
            r = np.sqrt(psi * psi + self.delta ** 2)
            absv, sgn = r, psi / r
        else:
            absv, sgn = np.abs(psi), np.sign(psi)
        h = 0.1 + 2 * absv
        w = h ** -2
        return psi, a, a_x, c, h, w, sgn

    def components(self, x, y):
        _, a, _, c, _, w, _ = self._parts(x, y)
        return 1.0 + a * a * w, a * c * w, c * c * w

    def component_derivatives(self, x, y):
        _, a, a_x, c, h, w, sgn = self._parts(x, y)
        dw = -4.0 * sgn * h ** -3
        w_x = dw * a
        w_y = dw * c
        ddx = (2 * a * a_x * w + a * a * w_x, a_x * c * w + a * c * w_x, c * c * w_x)
        ddy = (a * a * w_y, a * c * w_y, c * c * w_y)
        return ddx, ddy

    def nonsmooth(self, x, y):
        if self.smooth_abs:
            return super().nonsmooth(x, y)
        psi = self._parts(x, y)[0]
        return psi == 0

    def to_dict(self) -> dict:
        params = {"smooth_abs": True, "delta": self.delta} if self.smooth_abs else {}
        return {"id": "s6", "params": params}


def _zeros_like(x, y):
    return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)


def _s1():
    return GraphSurface("s1", lambda x, y: (np.ones_like(x + y), _zeros_like(x, y)),
                        lambda x, y: (_zeros_like(x, y),) * 3, constant=True)


def _s2():
    return GraphSurface("s2", lambda x, y: (2 * x + 0 * y, _zeros_like(x, y)),
                        lambda x, y: (2 + 0 * (x + y), _zeros_like(x, y), _zeros_like(x, y)))


def _s3_grad(x, y):
    return -20 * x * np.exp(-10 * x * x) + 0 * y, _zeros_like(x, y)


def _s3_hess(x, y):
    return (400 * x * x - 20) * np.exp(-10 * x * x) + 0 * y, _zeros_like(x, y), _zeros_like(x, y)


def _s3():
    return GraphSurface("s3", _s3_grad, _s3_hess)


def _s5():
    return GraphSurface("s5", lambda x, y: (2 * x + 0 * y, 2 * y + 0 * x),
                        lambda x, y: (2 + 0 * (x + y), _zeros_like(x, y), 2 + 0 * (x + y)))


CATALOG = {
    "s1": _s1,
    "s2": _s2,
    "s3": _s3,
    "s4": SqrtInverseLinear,
    "s5": _s5,
    "s6": BoundaryLayerField,
}


def make_field(field_id: str, params: dict | None = None) -> MetricField:
    """Build a field from its string id and parameter payload."""
    params = dict(params or {})
    key = field_id.lower()
    if key == "constant":
        if "matrix" in params:
            m = params.pop("matrix")
            params = {"m11": m[0][0], "m12": m[0][1], "m22": m[1][1]}
        return ConstantField(**params)
    if key in ("s4", "sqrt_inverse_linear"):
        return SqrtInverseLinear(**params)
    if key == "s6":
        return BoundaryLayerField(**params)
    if key in CATALOG:
        if params:
            raise ValueError(f"field {field_id!r} takes no parameters")
        return CATALOG[key]()
    raise ValueError(f"unknown metric field {field_id!r}")


# -- pointwise operations -----------------------------------------------------


def _check_point(field, p):
    x, y = float(p[0]), float(p[1])
    if not bool(field.contains(x, y)):
        raise DomainError(f"point ({x}, {y}) outside the domain of {field!r}")
    return x, y


def evaluate(field: MetricField, p) -> MetricTensor:
    x, y = _check_point(field, p)
    m = MetricTensor(*(float(c) for c in field.components(x, y)))
    if not m.is_positive_definite():
        raise DegenerateMetricError(f"{field!r} is not positive-definite at {p}: {m}")
    return m


def derivatives(field: MetricField, p) -> MetricDerivatives:
    x, y = _check_point(field, p)
    ddx, ddy = field.component_derivatives(x, y)
    return MetricDerivatives(MetricTensor(*(float(c) for c in ddx)),
                             MetricTensor(*(float(c) for c in ddy)),
                             nonsmooth=bool(field.nonsmooth(x, y)))


def _as_matrix(M):
    if isinstance(M, MetricTensor):
        return M.matrix
    return np.asarray(M, dtype=float)


def sqrt_inverse(M) -> np.ndarray:
    """Return ``M^{-1/2} = P diag(lambda^{-1/2}) P^T`` for an SPD matrix."""
    w, P = np.linalg.eigh(_as_matrix(M))
    if w[0] <= 0:
        raise DegenerateMetricError(f"non-positive eigenvalue {w[0]}")
    return (P * w ** -0.5) @ P.T


def pullback(J, N) -> MetricTensor:
    J = np.asarray(J, dtype=float)
    return MetricTensor.from_matrix(J.T @ _as_matrix(N) @ J)


def anisotropic_quotient(M) -> float:
    """max_i det(M)^{1/4} / sqrt(lambda_i); 1 for isotropic metrics."""
    w = np.linalg.eigvalsh(_as_matrix(M))
    return float(np.sqrt(np.sqrt(w[1] / w[0])))
