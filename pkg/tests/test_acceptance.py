"""End-to-end acceptance checks, one per criterion.

Each check returns ``(passed, detail)``. Under pytest every check is its own
test and a PASS/FAIL line per criterion is printed in the terminal summary;
``python3 tests/test_acceptance.py [k ...]`` runs them directly and prints
the same lines.
"""
import json
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from isomesh.config import RunConfig
from isomesh.geodesics import geodesic_bvp, geodesic_ivp, polyline_deviation
from isomesh.measures import EQUILATERAL, SQRT3, distortion_pointwise, quality_closed_form, quality_element
from isomesh.mesh import EdgeClass, build_uniform_grid, classify_edges, subdivide
from isomesh.metrics import make_field, sqrt_inverse
from isomesh.objective import Objective, TargetSpec
from isomesh.pipeline import build_report, edge_ratios, optimize, subtriangle_qualities

CONFIGS = Path(__file__).resolve().parent.parent / "scripts" / "configs"
RESULTS = {}


def load(name) -> RunConfig:
    return RunConfig.from_dict(json.loads((CONFIGS / f"{name}.json").read_text()))


def run(name):
    cfg = load(name)
    t0 = time.perf_counter()
    mesh, stats = optimize(cfg)
    return cfg, mesh, stats, time.perf_counter() - t0


def random_spd(rng, lo=0.05, hi=20.0):
    w = np.exp(rng.uniform(np.log(lo), np.log(hi), 2))
    t = rng.uniform(0, np.pi)
    R = np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])
    return (R * w) @ R.T


def rotation(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


# ---- criteria ---------------------------------------------------------------


def criterion_1():
    out = []
    ok = True
    for name in ("s1_equilateral", "s1_equilateral_rot30"):
        cfg, mesh, stats, t = run(name)
        fld = cfg.make_field()
        lengths, _ = edge_ratios(mesh, fld)
        Q = subtriangle_qualities(mesh, fld)
        dev = float(np.abs(lengths - 1 / cfg.N).max())
        good = stats.E_final <= 1e-10 and dev <= 1e-4 and Q.min() >= 1 - 1e-6 and t < 60
        ok &= good
        out.append(f"{name}: E={stats.E_final:.2e} |l-1/N|max={dev:.1e} Qmin={Q.min():.8f} t={t:.1f}s")
    return ok, "; ".join(out)


def criterion_2():
    cfg, mesh, stats, t = run("s1_right")
    _, ratios = edge_ratios(mesh, cfg.make_field())
    legs = ratios[mesh.edge_class == EdgeClass.LEG]
    hyps = ratios[mesh.edge_class == EdgeClass.HYPOTENUSE]
    err = max(np.abs(legs - 1).max(), np.abs(hyps - 1).max())
    ok = stats.E_final <= 1e-8 and err <= 1e-3 and t < 60
    return ok, f"E={stats.E_final:.2e} max rel length error={err:.1e} t={t:.1f}s"


def criterion_3():
    out = []
    ok = True
    for name in ("s2_equilateral", "s3_equilateral"):
        cfg, mesh, stats, t = run(name)
        rep = build_report(mesh, cfg.make_field(), cfg, stats)
        rel = rep["geodesics"]["max_relative_deviation"]
        good = (stats.E_final <= 5e-3 and rel is not None and rel <= 2 / cfg.N
                and rep["geodesics"]["n_failed"] == 0 and t < 300)
        ok &= good
        out.append(f"{name}: E={stats.E_final:.2e} geodesic dev/len={rel:.2e} (<= {2 / cfg.N:.2f}) t={t:.1f}s")
    return ok, "; ".join(out)


def criterion_4():
    cfg, mesh, stats, t = run("s5_shifted_equilateral")
    fld = cfg.make_field()
    Q = subtriangle_qualities(mesh, fld)
    lengths, _ = edge_ratios(mesh, fld)
    l_eq = lengths * cfg.N
    ok_eq = Q.min() >= 0.99 and l_eq.min() >= 0.94 and l_eq.max() <= 1.02
    cfg, mesh, stats_r, t_r = run("s5_shifted_right")
    lengths, _ = edge_ratios(mesh, cfg.make_field())
    l_r = lengths * cfg.N
    ok_r = l_r.min() >= 0.96 and l_r.max() <= 1.42
    return ok_eq and ok_r, (f"equilateral Qmin={Q.min():.4f} lengths [{l_eq.min():.3f}, {l_eq.max():.3f}]; "
                            f"right lengths [{l_r.min():.3f}, {l_r.max():.3f}]")


def criterion_5():
    out = []
    ok = True
    for name in ("s6_equilateral", "s6_right"):
        cfg, mesh, stats, t = run(name)
        Q = subtriangle_qualities(mesh, cfg.make_field())
        frac = float(np.mean(Q >= 0.9))
        good = Q.min() >= 0.70 and frac >= 0.9 and t < 600
        ok &= good
        out.append(f"{name} (N={cfg.N}): Qmin={Q.min():.4f} Q>=0.9 on {100 * frac:.1f}% t={t:.0f}s")
    return ok, "; ".join(out)


def criterion_6():
    cfg, mesh, stats, t = run("s4_equilateral")
    rep = build_report(mesh, cfg.make_field(), cfg, stats)
    res = rep["parabola_fit"]["max_relative_residual"]
    return res <= 1e-2, f"max quadratic-fit residual / edge length = {res:.2e} (Qmin={rep['quality']['min']:.4f})"


def criterion_7():
    rng = np.random.default_rng(7)
    boxes = {"s1": (0, 1, 0, 1), "s2": (-1, 1, 0, 1), "s3": (-1, 1, 0, 1), "s4": (0.1, 0.9, -1, 1),
             "s5": (-1, 1, -1, 1), "s6": (-1, 1, -1, 1)}
    worst = {}
    h = 1e-6
    for fid, box in boxes.items():
        fld = make_field("s6", {"smooth_abs": True, "delta": 1e-8}) if fid == "s6" else make_field(fid)
        errs = []
        for k in range(20):
            tiling = ("equilateral", "right")[k % 2]
            mesh = classify_edges(subdivide(build_uniform_grid(box, 2, 2), 3), tiling)
            spacing = min(box[1] - box[0], box[3] - box[2]) / 6
            mesh.points = mesh.points + rng.uniform(-0.15, 0.15, mesh.points.shape) * spacing
            obj = Objective(mesh, fld, TargetSpec(tiling, 3), eps=rng.uniform(0, 0.1))
            x = mesh.points.ravel()
            _, g = obj(x)
            fd = np.empty_like(x)
            for i in range(len(x)):
                xp, xm = x.copy(), x.copy()
                xp[i] += h
                xm[i] -= h
                fd[i] = (obj.value(xp) - obj.value(xm)) / (2 * h)
            errs.append(np.linalg.norm(g - fd) / np.linalg.norm(fd))
        worst[fid] = max(errs)
    ok = max(worst.values()) < 1e-6
    return ok, "max rel error " + " ".join(f"{k}={v:.1e}" for k, v in worst.items())


def criterion_8():
    rng = np.random.default_rng(8)
    K = EQUILATERAL.vertices
    e_ref = [(K[1] - K[0]), (K[2] - K[1]), (K[0] - K[2])]
    worst_angle = worst_area = worst_energy = 0.0
    for _ in range(1000):
        M = random_spd(rng)
        A = sqrt_inverse(M) @ rotation(rng.uniform(0, 2 * np.pi))
        edges = [A @ e for e in e_ref]
        for i in range(3):
            u, v = edges[i], -edges[i - 1]
            c = (u @ M @ v) / np.sqrt((u @ M @ u) * (v @ M @ v))
            worst_angle = max(worst_angle, abs(np.arccos(np.clip(c, -1, 1)) - np.pi / 3))
        area = np.sqrt(np.linalg.det(M)) * 0.5 * abs(edges[0][0] * edges[1][1] - edges[0][1] * edges[1][0])
        worst_area = max(worst_area, abs(area - SQRT3 / 4))
        H = rng.normal(size=(2, 2))
        H = H + H.T
        S = sqrt_inverse(M)
        lhs = sum(e @ H @ e for e in edges)
        rhs = 1.5 * np.trace(S @ H @ S)
        worst_energy = max(worst_energy, abs(lhs - rhs))
    ok = worst_angle <= 1e-9 and worst_area <= 1e-10 and worst_energy <= 1e-9
    return ok, f"angle {worst_angle:.1e}, area {worst_area:.1e}, energy identity {worst_energy:.1e}"


def criterion_9():
    rng = np.random.default_rng(9)
    low = np.inf
    for _ in range(1000):
        J = rng.normal(size=(2, 2))
        if np.linalg.det(J) < 0:
            J[:, 0] = -J[:, 0]
        low = min(low, distortion_pointwise(J, random_spd(rng)))
    unit = 0.0
    for _ in range(1000):
        M = random_spd(rng)
        J = sqrt_inverse(M) @ rotation(rng.uniform(0, 2 * np.pi))
        unit = max(unit, abs(distortion_pointwise(J, M) - 1))
    return low >= 1 and unit <= 1e-12, f"min eta={low:.12f}, max |eta(M^-1/2 R, M) - 1|={unit:.1e}"


def criterion_10():
    ident = make_field("constant")
    rng = np.random.default_rng(10)
    bvp = 0.0
    for _ in range(5):
        a, b = rng.uniform(-2, 2, (2, 2))
        bvp = max(bvp, np.linalg.norm(geodesic_bvp(ident, a, b).endpoint - b))

    s2 = make_field("s2")
    ref = geodesic_ivp(s2, (-0.5, 0.1), (1.0, 0.6), 1.0, 3200).endpoint
    errs = [np.linalg.norm(geodesic_ivp(s2, (-0.5, 0.1), (1.0, 0.6), 1.0, n).endpoint - ref) for n in (10, 20, 40)]
    rate = float(np.mean(np.log2(np.array(errs[:-1]) / errs[1:])))

    straight = 0.0
    for _ in range(5):
        M = random_spd(rng, 0.2, 5.0)
        fld = make_field("constant", {"m11": M[0, 0], "m12": M[0, 1], "m22": M[1, 1]})
        a, b = rng.uniform(-1, 1, (2, 2))
        straight = max(straight, polyline_deviation(geodesic_bvp(fld, a, b).points, np.array([a, b])))

    s5 = make_field("s5")
    radial = 0.0
    for t in np.linspace(0, 2 * np.pi, 9)[:-1]:
        d = np.array([np.cos(t), np.sin(t)])
        p = geodesic_ivp(s5, (0, 0), d, 1.0, 200).points
        radial = max(radial, np.abs(p[:, 0] * d[1] - p[:, 1] * d[0]).max())
    ok = bvp < 1e-8 and 3.5 <= rate <= 4.5 and straight <= 1e-10 and radial <= 1e-8
    return ok, f"BVP endpoint {bvp:.1e}, RK4 order {rate:.2f}, straightness {straight:.1e}, S5 radial {radial:.1e}"


def criterion_11():
    rng = np.random.default_rng(11)
    K0 = EQUILATERAL.vertices
    worst = worst_coef = 0.0
    for _ in range(200):
        M = random_spd(rng, 0.2, 5.0)
        fld = make_field("constant", {"m11": M[0, 0], "m12": M[0, 1], "m22": M[1, 1]})
        k = rng.normal(size=(3, 2))
        if np.linalg.det(np.array([k[1] - k[0], k[2] - k[0]])) < 0:
            k = k[[0, 2, 1]]
        q = quality_element(k, K0, fld)
        worst = max(worst, abs(q - quality_closed_form(k, K0, M)))
        e = [k[1] - k[0], k[2] - k[1], k[0] - k[2]]
        area = np.sqrt(np.linalg.det(M)) * 0.5 * np.linalg.det(np.array([e[0], -e[2]]))
        worst_coef = max(worst_coef, abs(q - 12 / SQRT3 * area / sum(v @ M @ v for v in e)))
    ok = worst <= 1e-10 and worst_coef <= 1e-10
    return ok, f"closed form {worst:.1e}, 12/sqrt(3) form {worst_coef:.1e}"


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 12)}


def line(k, ok, detail):
    return f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail}"


@pytest.mark.parametrize("k", list(CRITERIA))
def test_criterion(k):
    ok, detail = CRITERIA[k]()
    RESULTS[k] = line(k, ok, detail)
    print(RESULTS[k])
    assert ok, detail


if __name__ == "__main__":
    for k in [int(a) for a in sys.argv[1:]] or list(CRITERIA):
        ok, detail = CRITERIA[k]()
        print(line(k, ok, detail), flush=True)
