"""Build, optimise and summarise a mesh from a :class:`RunConfig`."""
from __future__ import annotations

import logging

import numpy as np

from .config import RunConfig
from .formats import corner_ids
from .geodesics import geodesic_bvp_batch, polyline_deviation
from .measures import J_EQ, EQUILATERAL, RIGHT, edge_lengths_quadrature, element_qualities
from .mesh import EdgeClass, SubdividedMesh, apply_initial_rotation, build_uniform_grid, classify_edges, \
    set_constraints, subdivide
from .metrics import MetricField
from .objective import Objective, TargetSpec
from .optimizer import RunStats, continuation_run
from .unitness import RATIO_HI, RATIO_LO, check_jacobian_unitness, classify_qu2, macro_edge_polylines

__all__ = [
    "build_mesh",
    "optimize",
    "mesh_tiling",
    "ideal_subtriangles",
    "subtriangle_qualities",
    "edge_ratios",
    "macroedge_geodesics",
    "parabola_residuals",
    "anisotropic_raster",
    "build_report",
]

log = logging.getLogger("isomesh.pipeline")


def build_mesh(cfg: RunConfig) -> SubdividedMesh:
    """Grid, subdivide, classify, constrain, then rotate about the grid centre."""
    macro = build_uniform_grid(cfg.domain, cfg.nx, cfg.ny)
    mesh = subdivide(macro, cfg.N)
    classify_edges(mesh, cfg.tiling)
    set_constraints(mesh, cfg.constraints)
    if cfg.initial_rotation_degrees:
        mesh = apply_initial_rotation(mesh, np.radians(cfg.initial_rotation_degrees))
    return mesh


def optimize(cfg: RunConfig, mesh: SubdividedMesh | None = None):
    """Run the barrier continuation; returns ``(mesh, RunStats)``."""
    fld = cfg.make_field()
    mesh = build_mesh(cfg) if mesh is None else mesh
    stats = continuation_run(mesh, fld, TargetSpec(cfg.tiling, cfg.N), cfg.criteria(), cfg.n_moves,
                             cfg.edge_weighting)
    return mesh, stats


def mesh_tiling(mesh: SubdividedMesh) -> str:
    return "equilateral" if np.all(mesh.edge_class == EdgeClass.UNIT) else "right"


def ideal_subtriangles(mesh: SubdividedMesh, tiling: str) -> np.ndarray:
    """(n, 3, 2) ideal counterpart of every subtriangle, scaled to edge 1/N."""
    J0 = J_EQ if tiling == "equilateral" else np.eye(2)
    i, j, up = mesh.tri_index.T
    base = np.column_stack([i, j]).astype(float)[:, None, :]
    up_ref = np.array([[0, 0], [1, 0], [0, 1]], dtype=float)
    down_ref = np.array([[1, 0], [1, 1], [0, 1]], dtype=float)
    ref = base + np.where(up[:, None, None] == 1, up_ref, down_ref)
    return (ref / mesh.N) @ J0.T


def subtriangle_qualities(mesh: SubdividedMesh, field: MetricField, tiling: str | None = None,
                          degree: int = 2) -> np.ndarray:
    tiling = tiling or mesh_tiling(mesh)
    return element_qualities(mesh.points, mesh.tris, ideal_subtriangles(mesh, tiling), field, degree)


def edge_ratios(mesh: SubdividedMesh, field: MetricField, npts: int = 16):
    """Quadrature metric length of every subedge and its ratio to the class target."""
    lengths = edge_lengths_quadrature(mesh.points, mesh.edges, field, npts)
    target = np.full(len(lengths), 1.0 / mesh.N)
    target[mesh.edge_class == EdgeClass.HYPOTENUSE] = np.sqrt(2.0) / mesh.N
    return lengths, lengths / target


def macroedge_geodesics(mesh: SubdividedMesh, field: MetricField, tol: float = 1e-8, n_steps: int = 200):
    """Geodesic overlay for every macroedge.

    Returns a list of dicts with the endpoints, the edge polyline, the
    geodesic polyline (None on failure), the deviation and the edge's metric
    length.
    """
    chains = mesh.macro_edge_chains()
    if not chains:
        return []
    X0 = np.array([mesh.points[c[0]] for _, c in chains])
    X1 = np.array([mesh.points[c[-1]] for _, c in chains])
    geos = geodesic_bvp_batch(field, X0, X1, tol, n_steps)
    out = []
    for (key, chain), g in zip(chains, geos):
        pts = mesh.points[chain]
        seg = np.column_stack([np.arange(len(pts) - 1), np.arange(1, len(pts))])
        length = float(edge_lengths_quadrature(pts, seg, field).sum())
        dev = float("nan") if g is None else polyline_deviation(pts, g.points)
        out.append({"a": int(key[0]), "b": int(key[1]), "chain": chain, "edge": pts,
                    "geodesic": None if g is None else g.points, "deviation": dev, "metric_length": length})
    return out


def parabola_residuals(mesh: SubdividedMesh):
    """Max distance of each macroedge's subvertices from their least-squares parabola.

    The parabola is fitted in the chord frame (transverse offset as a
    quadratic in the along-chord coordinate); residuals are relative to the
    polyline's Euclidean length.
    """
    res = []
    for _, chain in mesh.macro_edge_chains():
        p = mesh.points[chain]
        c = p[-1] - p[0]
        L = np.linalg.norm(c)
        u = c / L
        n = np.array([-u[1], u[0]])
        s, t = (p - p[0]) @ u, (p - p[0]) @ n
        length = float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum())
        if len(p) <= 3:
            res.append(0.0)
            continue
        coef = np.polyfit(s, t, 2)
        res.append(float(np.abs(np.polyval(coef, s) - t).max() / length))
    return np.array(res)


def anisotropic_raster(field: MetricField, bbox, n: int = 32):
    """Anisotropic quotient on an n x n grid over ``bbox``; NaN outside the field domain."""
    x0, x1, y0, y1 = bbox
    xs, ys = np.linspace(x0, x1, n), np.linspace(y0, y1, n)
    X, Y = np.meshgrid(xs, ys)
    vals = np.full(X.shape, np.nan)
    inside = field.contains(X, Y)
    if inside.any():
        m11, m12, m22 = field.components(X[inside], Y[inside])
        half_tr = 0.5 * (m11 + m22)
        disc = np.sqrt(np.maximum(0.25 * (m11 - m22) ** 2 + m12 ** 2, 0.0))
        lo, hi = half_tr - disc, half_tr + disc
        with np.errstate(divide="ignore", invalid="ignore"):
            vals[inside] = np.sqrt(np.sqrt(hi / lo))
    return xs, ys, vals


def _hist(values, bins, range_=None):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return {"edges": [], "counts": []}
    if range_ is None:
        lo, hi = float(v.min()), float(v.max())
        if hi - lo <= 1e-9 * max(1.0, abs(lo)):
            lo, hi = lo - 0.5, hi + 0.5
        range_ = (lo, hi)
    counts, edges = np.histogram(np.clip(v, *range_), bins=bins, range=range_)
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def _stats(v):
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        return {"min": None, "max": None}
    return {"min": float(np.nanmin(v)), "max": float(np.nanmax(v))}


def _ideal(tiling):
    return EQUILATERAL if tiling == "equilateral" else RIGHT


def build_report(mesh: SubdividedMesh, field: MetricField, cfg: RunConfig | None = None,
                 stats: RunStats | None = None, geodesics=None, qu_a: float = 0.8,
                 qu_b_deg: float = 30.0, geo_tol: float = 0.05) -> dict:
    """Summary of a mesh under a field as a JSON-ready dict.

    ``geodesics`` may pass a precomputed :func:`macroedge_geodesics` result.
    """
    tiling = cfg.tiling if cfg is not None else mesh_tiling(mesh)
    bins = cfg.histogram_bins if cfg is not None else 20
    g_steps = cfg.geodesic_steps if cfg is not None else 200
    g_tol = cfg.geodesic_tol if cfg is not None else 1e-8
    raster = cfg.raster if cfg is not None else 32

    Q = subtriangle_qualities(mesh, field, tiling)
    lengths, ratios = edge_ratios(mesh, field)
    obj = Objective(mesh, field, TargetSpec(tiling, mesh.N))
    cost = obj.breakdown()

    per_class = {}
    for cls in np.unique(mesh.edge_class):
        sel = mesh.edge_class == cls
        per_class[EdgeClass(cls).name.lower()] = {
            "count": int(sel.sum()), **_stats(ratios[sel]), "length": _stats(lengths[sel]),
            "histogram": _hist(ratios[sel], bins)}

    if geodesics is None:
        geodesics = macroedge_geodesics(mesh, field, g_tol, g_steps)
    dev = np.array([g["deviation"] for g in geodesics])
    rel = np.array([g["deviation"] / g["metric_length"] for g in geodesics])
    geo_rows = [{"a": g["a"], "b": g["b"], "deviation": g["deviation"], "relative_deviation": r,
                 "metric_length": g["metric_length"]} for g, r in zip(geodesics, rel)]

    # QU1 on subtriangles, against the ideal scaled to 1/N
    lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(mesh.edges)}
    tri_edges = np.array([[lookup[(min(p, q), max(p, q))] for p, q in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0]))]
                          for t in mesh.tris])
    r3 = ratios[tri_edges]
    qu1 = (Q >= qu_a) & (Q <= 1 + 1e-12) & np.all((r3 >= RATIO_LO) & (r3 <= RATIO_HI), axis=1)

    # QU2 and Jacobian residual on macrotriangles
    by_key = {(g["a"], g["b"]): g for g in geodesics}
    ideal = _ideal(tiling)
    verdicts = {"pass": 0, "fail": 0, "indeterminate": 0}
    jac = []
    corners = corner_ids(mesh)
    for t in range(len(mesh.macro.triangles)):
        polys = macro_edge_polylines(mesh, t)
        geos = []
        c = [int(v) for v in corners[t]]
        for a, b in ((c[0], c[1]), (c[1], c[2]), (c[2], c[0])):
            g = by_key.get((min(a, b), max(a, b)))
            pts = None if g is None or g["geodesic"] is None else g["geodesic"]
            if pts is not None and a > b:
                pts = pts[::-1]
            geos.append(None if pts is None else _Poly(pts))
        try:
            verdicts[classify_qu2(polys, ideal, field, np.radians(qu_b_deg), geo_tol, geodesics=geos).verdict] += 1
        except ValueError:
            verdicts["fail"] += 1
        try:
            jac.append(check_jacobian_unitness((mesh, t), field, ideal)[1])
        except ValueError:
            jac.append(np.inf)
    jac = np.array(jac)

    lo, hi = mesh.points.min(axis=0), mesh.points.max(axis=0)
    xs, ys, aq = anisotropic_raster(field, (lo[0], hi[0], lo[1], hi[1]), raster)
    par = parabola_residuals(mesh)

    report = {
        "field": field.to_dict(),
        "tiling": tiling,
        "N": int(mesh.N),
        "counts": {"vertices": int(mesh.n_points), "subtriangles": int(len(mesh.tris)),
                   "subedges": int(len(mesh.edges)), "macrotriangles": int(len(mesh.macro.triangles)),
                   "macroedges": int(len(geodesics))},
        "cost": {"total": cost.total, "energy": cost.energy, "barrier": cost.barrier,
                 "min_area_ratio": cost.min_area_ratio},
        "quality": {**_stats(Q), "mean": float(np.mean(Q)), "fraction_ge_0.9": float(np.mean(Q >= 0.9)),
                    "histogram": _hist(Q, bins, (0.0, 1.0))},
        "edge_ratio": {**_stats(ratios), "per_class": per_class},
        "geodesics": {"n_edges": len(geodesics), "n_failed": int(np.isnan(dev).sum()),
                      "max_deviation": float(np.nanmax(dev)) if np.isfinite(dev).any() else None,
                      "max_relative_deviation": float(np.nanmax(rel)) if np.isfinite(rel).any() else None,
                      "edges": geo_rows},
        "parabola_fit": {"max_relative_residual": float(par.max()) if par.size else None,
                         "relative_residuals": par.tolist()},
        "anisotropic_quotient": {"x": xs.tolist(), "y": ys.tolist(), "values": aq.tolist()},
        "unitness": {"qu1_pass": int(qu1.sum()), "qu1_fraction": float(qu1.mean()), "qu2": verdicts,
                     "jacobian_residual": {"max": float(jac.max()), "median": float(np.median(jac))},
                     "a": qu_a, "b_degrees": qu_b_deg, "geo_tol": geo_tol},
    }
    if stats is not None:
        report["run"] = stats.to_dict()
    if cfg is not None:
        report["config"] = cfg.to_dict()
    return report


class _Poly:
    def __init__(self, points):
        self.points = points
