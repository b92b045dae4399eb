import numpy as np
import pytest

from pseudobilliard.geometry import (ConvexPolytope, EmptyPolytope, OffHull, OutwardField,
                                     SigmaHit, cut_polytope, facet_polytope, first_facet_hit)
from pseudobilliard.model import polygon, simplex

V1 = np.array([2.0, -1.0, -1.0]) / 3


def flight_oracle(x, v):
    """Closed form for the simplex: facet j is reached at t_j = x_j / -v_j."""
    t = {j: x[j] / -v[j] for j in range(len(x)) if v[j] < 0}
    j = min(t, key=t.get)
    return j, t[j]


def test_simplex_facets_and_vertices():
    P = simplex(3)
    assert P.dim == 2
    assert sorted(P.facet_ids) == [0, 1, 2]
    V = P.vertices
    assert V.shape == (3, 3)
    assert {tuple(r) for r in np.round(V, 12) + 0.0} == {tuple(r) for r in np.eye(3)}
    for f in P.facets:
        assert np.isclose(np.linalg.norm(f.inward_normal), 1.0)
        assert abs(f.inward_normal.sum()) < 1e-12  # lies in the balance plane


def test_first_hit_generic():
    P = simplex(3)
    x = np.array([0.0, 0.4, 0.6])
    j, t = flight_oracle(x, V1)
    fid, t_hit, y = first_facet_hit(x, V1, P, exclude=0)
    assert fid == j == 1
    assert np.isclose(t_hit, t) and np.isclose(t_hit, 1.2)
    assert np.allclose(y, [0.8, 0.0, 0.2], atol=1e-12)


def test_first_hit_vertex_tie():
    P = simplex(3)
    hit, t, y = first_facet_hit([0.0, 0.5, 0.5], V1, P, exclude=0)
    assert isinstance(hit, SigmaHit)
    assert hit.facets == frozenset({1, 2})
    assert np.isclose(t, 1.5)
    assert np.allclose(y, [1.0, 0.0, 0.0])


def test_first_hit_outward():
    P = simplex(3)
    with pytest.raises(OutwardField):
        first_facet_hit([0.0, 0.4, 0.6], [-1 / 3, 0.4, -0.0667], P, exclude=0)


def test_first_hit_off_hull():
    P = simplex(3)
    with pytest.raises(OffHull):
        first_facet_hit([0.0, 0.4, 0.6], [1.0, 0.0, 0.0], P, exclude=0)


def test_flight_reversible():
    P = simplex(3)
    rng = np.random.default_rng(1)
    for _ in range(50):
        y = rng.dirichlet([1, 1])
        x = np.array([0.0, y[0], y[1]])
        fid, t, z = first_facet_hit(x, V1, P, exclude=0)
        if isinstance(fid, SigmaHit):
            continue
        back, t2, w = first_facet_hit(z, -V1, P, exclude=fid)
        assert back == 0
        assert abs(t - t2) < 1e-9
        assert np.allclose(w, x, atol=1e-9)


def test_cut_threshold():
    P = simplex(3)
    Q = cut_polytope(P, [-1.0, 0.0, 0.0], -0.1)
    assert 0 not in Q.facet_ids
    new = [f for f in Q.facets if f.is_cut]
    assert len(new) == 1
    # hand enumeration: the triangle shrinks to x1 >= 0.1
    expect = {(0.1, 0.9, 0.0), (0.1, 0.0, 0.9), (1.0, 0.0, 0.0)}
    got = {tuple(np.round(v, 12)) for v in Q.vertices}
    assert got == expect


def test_cut_vacuous_and_idempotent():
    P = simplex(3)
    assert cut_polytope(P, [1.0, 0.0, 0.0], 2.0) is P
    Q = cut_polytope(P, [1.0, 0.0, 0.0], 0.7)
    R = cut_polytope(Q, [1.0, 0.0, 0.0], 0.7)
    assert R.facet_ids == Q.facet_ids
    assert np.allclose(R.vertices, Q.vertices)


def test_cut_empty():
    with pytest.raises(EmptyPolytope):
        cut_polytope(simplex(3), [-1.0, 0.0, 0.0], -2.0)


def test_cut_volume_shrinks():
    rng = np.random.default_rng(3)
    P = simplex(3)
    Q = cut_polytope(P, [1.0, 0.0, 0.0], 0.5)
    vp, sp = P.volume_mc(rng, 200_000)
    vq, sq = Q.volume_mc(rng, 200_000)
    assert vq <= vp + 3 * np.hypot(sp, sq)
    # the cut keeps 3/4 of the triangle
    assert abs(vq / vp - 0.75) < 0.02


def test_chart_round_trip():
    P = polygon([[0, 0], [2, 0], [2, 1], [0, 1]])
    for f in P.facet_ids:
        V = P.facet_vertices(f)
        y = P.to_chart(f, V)
        assert np.allclose(P.from_chart(f, y), V)
        assert np.isclose(P.facet_measure(f), np.linalg.norm(V[0] - V[1]))


def test_facet_polytope_of_tetrahedron():
    P = simplex(4)
    F = facet_polytope(P, 0)
    assert F.dim == 2
    assert F.vertices.shape[0] == 3


def test_unbounded_rejected():
    with pytest.raises(Exception):
        ConvexPolytope([([1.0, 0.0], 1.0)])
