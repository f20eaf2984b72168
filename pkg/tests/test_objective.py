import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import FIELD_BOXES, fd_gradient_error, gradient_test_field, objective_for, perturbed_mesh
from isomesh.mesh import build_uniform_grid, classify_edges, set_constraints, subdivide
from isomesh.metrics import make_field
from isomesh.objective import (
    Objective,
    TargetSpec,
    barrier_function,
    barrier_term,
    cost,
    energy_term,
    gradient,
)

I = make_field("constant")


def unit_square(tiling, N=1):
    return classify_edges(subdivide(build_uniform_grid((0, 1, 0, 1), 1, 1), N), tiling)


def test_targets():
    t = TargetSpec("equilateral", 10)
    assert t.length_target(0) == pytest.approx(0.1)
    assert t.area_target == pytest.approx(np.sqrt(3) / 400)
    r = TargetSpec("right", 4)
    assert r.length_target(2) == pytest.approx(np.sqrt(2) / 4)
    assert r.length_target(1) == 0.25 and r.area_target == 1 / 32
    with pytest.raises(ValueError):
        TargetSpec("square", 2)
    with pytest.raises(ValueError):
        TargetSpec("right", 0)


def test_energy_examples():
    assert energy_term(unit_square("equilateral"), I, TargetSpec("equilateral", 1)) == pytest.approx(0.5)
    assert energy_term(unit_square("right"), I, TargetSpec("right", 1)) == 0.0


def test_barrier_examples():
    assert barrier_function(1.0, 0.0) == 0.0
    assert barrier_function(2.0, 0.0) == pytest.approx(np.log(2) ** 2 + 1, abs=1e-12)
    assert barrier_function(2.0, 0.0) == pytest.approx(1.48045, abs=1e-5)
    assert barrier_function(0.3, 0.3) == np.inf
    assert barrier_function(-0.1, 0.0) == np.inf
    assert barrier_function(1.0, 0.5) == 0.0


def test_right_grid_is_exact_minimum():
    m = unit_square("right", 4)
    b = cost(m, I, TargetSpec("right", 4))
    assert b.total == 0.0 and b.min_area_ratio == pytest.approx(1.0)
    assert np.abs(gradient(m, I, TargetSpec("right", 4))).max() < 1e-12


def test_inverted_is_infinite():
    m = unit_square("right", 2)
    m.points[[0, 1]] = m.points[[1, 0]]
    assert barrier_term(m, I, TargetSpec("right", 2)) == np.inf
    b = cost(m, I, TargetSpec("right", 2))
    assert b.total == np.inf
    with pytest.raises(ValueError):
        gradient(m, I, TargetSpec("right", 2))


def test_outside_field_domain_is_infinite():
    m = unit_square("equilateral", 2)
    m.points[:, 0] -= 0.5  # crosses x = 0 where S4 is undefined
    assert cost(m, make_field("s4"), TargetSpec("equilateral", 2)).total == np.inf


def test_breakdown_sums():
    m = perturbed_mesh(FIELD_BOXES["s2"], seed=3)
    b = cost(m, make_field("s2"), TargetSpec("equilateral", m.N), 0.1)
    assert b.total == pytest.approx(b.energy + b.barrier)
    assert b.total >= 0 and np.isfinite(b.max_abs_gradient)


@pytest.mark.parametrize("fid", sorted(FIELD_BOXES))
@pytest.mark.parametrize("tiling", ["equilateral", "right"])
def test_gradient_matches_finite_differences(fid, tiling):
    f = gradient_test_field(fid)
    for seed in range(3):
        m = perturbed_mesh(FIELD_BOXES[fid], tiling, seed=seed)
        obj = objective_for(m, f, tiling, eps=0.05)
        assert fd_gradient_error(obj, m.points.ravel()) < 1e-6


def test_normalized_gradient():
    m = perturbed_mesh(FIELD_BOXES["s3"], "right", seed=7)
    obj = objective_for(m, make_field("s3"), "right", normalize_lengths=True)
    assert fd_gradient_error(obj, m.points.ravel()) < 1e-6
    plain = objective_for(m, make_field("s3"), "right")
    # each edge term is scaled by 1/t^4
    e_n, e_p = obj.breakdown().energy, plain.breakdown().energy
    assert e_p < e_n


def test_constant_metric_gradient_has_no_metric_terms():
    m = perturbed_mesh((0, 1, 0, 1), seed=1)
    f = make_field("constant", {"m11": 2.0, "m12": 0.3, "m22": 1.0})
    obj = objective_for(m, f)
    assert f.is_constant
    assert fd_gradient_error(obj, m.points.ravel()) < 1e-6


def test_constraints_zero_gradient():
    m = set_constraints(classify_edges(subdivide(build_uniform_grid((0.2, 0.8, -1, 1), 2, 2), 3), "equilateral"),
                        "slide_boundary")
    m.points = m.points + 0.01 * np.random.default_rng(0).normal(size=m.points.shape) * (m.constraints == 0)[:, None]
    g = gradient(m, make_field("s4"), TargetSpec("equilateral", 3))
    mask = m.free_mask()
    assert np.all(g[mask == 0] == 0)
    assert np.any(g[mask == 1] != 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 1000))
def test_translation_invariance_constant_metric(tx, ty, seed):
    m = perturbed_mesh((0, 1, 0, 1), seed=seed)
    f = make_field("constant", {"m11": 3.0, "m12": -0.4, "m22": 0.7})
    t = TargetSpec("equilateral", m.N)
    E0, g0 = cost(m, f, t).total, gradient(m, f, t)
    m.points = m.points + [tx, ty]
    assert cost(m, f, t).total == pytest.approx(E0, rel=1e-9, abs=1e-12)
    assert np.allclose(gradient(m, f, t), g0, rtol=1e-7, atol=1e-9)


def test_eps_validation():
    with pytest.raises(ValueError):
        Objective(unit_square("right"), I, TargetSpec("right", 1), 1.0)


def test_gauss_newton_solver_is_spd_inverse():
    m = perturbed_mesh(FIELD_BOXES["s2"], seed=2)
    obj = objective_for(m, make_field("s2"))
    solve = obj.gauss_newton_solver(m.points.ravel(), damping=0.1)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v = rng.normal(size=2 * m.n_points)
        assert v @ solve(v) > 0
    m4 = perturbed_mesh(FIELD_BOXES["s4"], seed=2)
    obj4 = objective_for(m4, make_field("s4"))
    x = m4.points.copy()
    x[0, 0] = -0.5  # outside the field's domain
    assert obj4.gauss_newton_solver(x.ravel()) is None
