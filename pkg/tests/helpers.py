"""Shared fixtures-as-functions for the test modules."""
import numpy as np

from isomesh.mesh import build_uniform_grid, classify_edges, subdivide
from isomesh.metrics import make_field
from isomesh.objective import Objective, TargetSpec

# rectangles inside each catalog field's validity region
FIELD_BOXES = {
    "s1": (0.0, 1.0, 0.0, 1.0),
    "s2": (-1.0, 1.0, 0.0, 1.0),
    "s3": (-1.0, 1.0, 0.0, 1.0),
    "s4": (0.1, 0.9, -1.0, 1.0),
    "s5": (-1.0, 1.0, -1.0, 1.0),
    "s6": (-1.0, 1.0, -1.0, 1.0),
}


def gradient_test_field(fid):
    if fid == "s6":
        return make_field("s6", {"smooth_abs": True, "delta": 1e-8})
    return make_field(fid)


def perturbed_mesh(box, tiling="equilateral", n=2, N=3, jitter=0.15, seed=0):
    """Fresh grid with every subvertex moved by up to ``jitter`` of the grid spacing."""
    mesh = classify_edges(subdivide(build_uniform_grid(box, n, n), N), tiling)
    rng = np.random.default_rng(seed)
    h = min(box[1] - box[0], box[3] - box[2]) / (n * N)
    mesh.points = mesh.points + rng.uniform(-jitter, jitter, mesh.points.shape) * h
    return mesh


def fd_gradient_error(obj: Objective, x, h=1e-6):
    """Relative 2-norm error between the analytic and central-difference gradients."""
    _, g = obj(x)
    fd = np.empty_like(x)
    for i in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        fd[i] = (obj.value(xp) - obj.value(xm)) / (2 * h)
    fd *= obj.mask.ravel()
    return float(np.linalg.norm(g - fd) / max(np.linalg.norm(fd), 1e-300))


def objective_for(mesh, field, tiling="equilateral", eps=0.0, **kw):
    return Objective(mesh, field, TargetSpec(tiling, mesh.N), eps, **kw)
