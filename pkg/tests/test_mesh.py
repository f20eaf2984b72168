import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isomesh.mesh import (
    Constraint,
    EdgeClass,
    MacroMesh,
    apply_initial_rotation,
    build_uniform_grid,
    classify_edges,
    set_constraints,
    signed_areas,
    subdivide,
)


def test_grid_2x2_valence():
    m = build_uniform_grid((0, 1, 0, 1), 2, 2)
    assert len(m.vertices) == 9 and len(m.triangles) == 8
    centre = np.flatnonzero(np.all(np.isclose(m.vertices, 0.5), axis=1))[0]
    assert m.incident_counts()[centre] == 6


def test_grid_counts_and_orientation():
    m = build_uniform_grid((0, 1, 0, 1), 1, 1)
    assert (len(m.vertices), len(m.triangles)) == (4, 2)
    m = build_uniform_grid((-1, 1, -1, 1), 4, 4)
    assert (len(m.vertices), len(m.triangles)) == (25, 32)
    assert np.all(signed_areas(m.vertices, m.triangles) > 0)
    assert len(m.boundary_edges) == 16


def test_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        build_uniform_grid((0, 0, 0, 1), 2, 2)
    with pytest.raises(ValueError):
        build_uniform_grid((0, 1, 0, 1), 0, 2)


def test_subdivide_equals_finer_grid():
    s = subdivide(build_uniform_grid((0, 1, 0, 1), 2, 2), 2)
    fine = build_uniform_grid((0, 1, 0, 1), 4, 4)
    assert len(s.tris) == 32 and s.n_points == 25
    key = lambda P: sorted(map(tuple, np.round(P, 12)))
    assert key(s.points) == key(fine.vertices)
    tri_sets = lambda P, T: sorted(tuple(sorted(map(tuple, np.round(P[t], 12)))) for t in T)
    assert tri_sets(s.points, s.tris) == tri_sets(fine.vertices, fine.triangles)


def test_subdivide_identity():
    m = build_uniform_grid((0, 2, 0, 1), 3, 2)
    s = subdivide(m, 1)
    assert s.n_points == len(m.vertices) and len(s.tris) == len(m.triangles)
    # same triangles up to vertex numbering
    assert np.array_equal(s.points[s.tris], m.vertices[m.triangles])


def test_single_triangle_n3():
    m = MacroMesh(np.array([[0.0, 0], [1, 0], [0, 1]]), np.array([[0, 1, 2]]))
    s = subdivide(m, 3)
    assert len(s.tris) == 9 and s.n_points == 10


def test_subdivide_rejects_zero():
    with pytest.raises(ValueError):
        subdivide(build_uniform_grid((0, 1, 0, 1), 1, 1), 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 6))
def test_conforming_and_counts(nx, ny, N):
    s = subdivide(build_uniform_grid((0, 1, 0, 2), nx, ny), N)
    assert len(s.tris) == 2 * nx * ny * N * N
    assert s.n_points == (nx * N + 1) * (ny * N + 1)
    assert np.all(np.bincount(s.tri_owner) == N * N)
    assert np.all(s.signed_areas() > 0)
    counts = s.edge_triangle_counts()
    assert set(np.unique(counts)) <= {1, 2}
    # boundary subedges lie on the rectangle
    P = s.points
    bnd = s.edges[counts == 1]
    on = lambda v: np.isclose(P[v, 0], 0) | np.isclose(P[v, 0], 1) | np.isclose(P[v, 1], 0) | np.isclose(P[v, 1], 2)
    assert np.all(on(bnd[:, 0]) & on(bnd[:, 1]))
    assert np.sum(counts == 1) == 2 * (nx + ny) * N
    # no duplicated points
    assert len(np.unique(np.round(P, 12), axis=0)) == s.n_points
    # Euler characteristic of a disc
    assert s.n_points - len(s.edges) + len(s.tris) == 1


def test_classify_equilateral_all_unit():
    s = classify_edges(subdivide(build_uniform_grid((0, 1, 0, 1), 2, 2), 3), "equilateral")
    assert np.all(s.edge_class == EdgeClass.UNIT)


def test_classify_right_one_square():
    s = classify_edges(subdivide(build_uniform_grid((0, 1, 0, 1), 1, 1), 1), "right")
    assert np.sum(s.edge_class == EdgeClass.LEG) == 4
    assert np.sum(s.edge_class == EdgeClass.HYPOTENUSE) == 1
    s = classify_edges(subdivide(build_uniform_grid((0, 1, 0, 1), 1, 1), 2), "right")
    # a 2x2 grid of squares: 12 axis-parallel subedges and 4 diagonals
    assert np.sum(s.edge_class == EdgeClass.LEG) == 12
    assert np.sum(s.edge_class == EdgeClass.HYPOTENUSE) == 4


def test_right_classes_match_geometry():
    s = classify_edges(subdivide(build_uniform_grid((0, 3, 0, 2), 3, 2), 4), "right")
    e = s.points[s.edges[:, 1]] - s.points[s.edges[:, 0]]
    axis = np.isclose(e[:, 0], 0) | np.isclose(e[:, 1], 0)
    assert np.array_equal(axis, s.edge_class == EdgeClass.LEG)


def test_classify_unknown():
    with pytest.raises(ValueError):
        classify_edges(subdivide(build_uniform_grid((0, 1, 0, 1), 1, 1), 1), "hex")


def test_rotation():
    s = classify_edges(subdivide(build_uniform_grid((0, 1, 0, 1), 2, 2), 3), "right")
    assert np.array_equal(apply_initial_rotation(s, 0.0).points, s.points)
    assert np.allclose(apply_initial_rotation(s, 2 * np.pi).points, s.points, atol=1e-12)
    r = apply_initial_rotation(s, np.pi / 2)
    assert np.array_equal(r.edge_class, s.edge_class)
    assert np.array_equal(r.tris, s.tris)
    d0 = np.linalg.norm(s.points[s.edges[:, 1]] - s.points[s.edges[:, 0]], axis=1)
    d1 = np.linalg.norm(r.points[r.edges[:, 1]] - r.points[r.edges[:, 0]], axis=1)
    assert np.allclose(d0, d1)
    assert np.allclose(r.points.mean(axis=0), s.points.mean(axis=0))
    # the original mesh is untouched
    assert s.points.min() == 0.0 and s.points.max() == 1.0


def test_constraints():
    s = set_constraints(subdivide(build_uniform_grid((0, 1, 0, 1), 2, 2), 2), "slide_boundary")
    P, c = s.points, s.constraints
    corner = np.isin(P[:, 0], [0, 1]) & np.isin(P[:, 1], [0, 1])
    assert np.all(c[corner] == Constraint.FIXED)
    assert np.all(c[(P[:, 1] == 0) & ~corner] == Constraint.SLIDE_X)
    assert np.all(c[(P[:, 0] == 1) & ~corner] == Constraint.SLIDE_Y)
    interior = (P[:, 0] > 0) & (P[:, 0] < 1) & (P[:, 1] > 0) & (P[:, 1] < 1)
    assert np.all(c[interior] == Constraint.FREE)
    mask = s.free_mask()
    assert np.all(mask[corner] == 0)
    assert np.all(mask[c == Constraint.SLIDE_X] == [1, 0])

    set_constraints(s, "pin_corners")
    assert np.sum(s.constraints == Constraint.FIXED) == 4
    assert np.sum(s.constraints != Constraint.FREE) == 4
    set_constraints(s, "free")
    assert np.all(s.constraints == Constraint.FREE)
    with pytest.raises(ValueError):
        set_constraints(s, "glue")


def test_macro_edge_chains():
    s = subdivide(build_uniform_grid((0, 1, 0, 1), 2, 2), 5)
    chains = s.macro_edge_chains()
    assert len(chains) == 16  # 12 axis edges + 4 diagonals
    for (a, b), chain in chains:
        assert chain[0] == a and chain[-1] == b and len(chain) == 6
        P = s.points[chain]
        # straight and evenly spaced on the fresh grid
        assert np.allclose(np.diff(P, axis=0), (P[-1] - P[0]) / 5)


def test_copy_is_independent():
    s = subdivide(build_uniform_grid((0, 1, 0, 1), 1, 1), 2)
    c = s.copy()
    before = s.points.copy()
    c.points[0] = [9, 9]
    c.constraints[0] = 1
    assert np.array_equal(s.points, before) and s.constraints[0] == 0
