import numpy as np
import pytest

from pseudobilliard import fixtures as fx
from pseudobilliard.dynamics import return_step, start_state
from pseudobilliard.geometry import OutwardField
from pseudobilliard.model import (BadProbabilities, NoVirtualHit, RateImbalance, SwitchedArrivalSpec,
                                  SwitchPolicy, build_polygon_model, build_server_model,
                                  build_standard_model, check_cut_validity, inherited_field,
                                  polygon, virtual_hit)

RHO3 = (1 / 3, 1 / 3, 1 / 3)


def test_standard_n3_fields():
    m = build_standard_model(SwitchedArrivalSpec(RHO3))
    assert np.allclose(m.fields[0], [2 / 3, -1 / 3, -1 / 3])
    for f, v in m.fields.items():
        assert abs(v.sum()) < 1e-15
        assert m.polytope.facet(f).inward_normal @ v > 0


def test_rate_imbalance():
    with pytest.raises(RateImbalance):
        build_standard_model(SwitchedArrivalSpec((0.5, 0.3, 0.1)))


def test_threshold_region():
    m = build_standard_model(SwitchedArrivalSpec(RHO3, (0.1, 0.0, 0.0)))
    P = m.polytope
    cut = [f for f in P.facet_ids if m.is_cut(f)]
    assert len(cut) == 1
    # the cut x1 >= 0.1 replaces the facet x1 = 0 of the simplex, leaving a
    # triangle with vertices found by hand
    assert 0 not in P.facet_ids
    got = {tuple(v) for v in np.round(P.vertices, 12) + 0.0}
    assert got == {(0.1, 0.9, 0.0), (0.1, 0.0, 0.9), (1.0, 0.0, 0.0)}


def barycentric(x):
    A, B, C = fx.TRIANGLE
    return x[0] * A + x[1] * B + x[2] * C


def test_equilateral_equivalent_to_standard():
    std = fx.standard(3)
    tri = fx.perpendicular_triangle()
    # x_i = 0 is the side opposite vertex i: BC, CA, AB are edges 1, 2, 0
    side = {0: 1, 1: 2, 2: 0}
    rng = np.random.default_rng(5)
    for _ in range(100):
        y = rng.dirichlet([1, 1])
        s = start_state(std, 0, [0.0, y[0], y[1]])
        t = start_state(tri, 1, barycentric(s.position))
        for _ in range(5):
            s, t = return_step(std, s), return_step(tri, t)
            assert side[s.facet] == t.facet
            assert np.allclose(barycentric(s.position), t.position, atol=1e-9)


def test_contraction_triangle_valid():
    m = fx.contraction_triangle()
    assert len(m.polytope.facet_ids) == 3


def test_tangent_field_rejected():
    V = fx.TRIANGLE
    fields = [V[1] - V[0], (0.0, 1.0), (1.0, 0.0)]
    with pytest.raises(OutwardField):
        build_polygon_model(V, fields)


def test_server_models():
    assert fx.server_triangle("cyclic").N == 2
    m = fx.server_triangle("stochastic", (0.5, 0.5), 0.1, 7)
    assert m.policy.seed == 7
    with pytest.raises(BadProbabilities):
        fx.server_triangle("stochastic", (0.7, 0.4))
    with pytest.raises(BadProbabilities):
        SwitchPolicy("stochastic", {"*": (0.95, 0.05)}, 0.1)


def test_server_outward_field():
    P = polygon(fx.TRIANGLE)
    bad = {0: [(0, 1), (0, -1)], 1: [(-1, 0), (-1, 1)], 2: [(1, 0), (1, -1)]}
    with pytest.raises(OutwardField):
        build_server_model(P, bad, SwitchPolicy("cyclic"))


def threshold_model():
    return build_standard_model(SwitchedArrivalSpec(RHO3, (0.1, 0.0, 0.0)))


def test_inherited_field_example():
    m = threshold_model()
    cut = next(f for f in m.polytope.facet_ids if m.is_cut(f))
    xi = np.array([0.1, 0.55, 0.35])
    v_in = np.array([-1 / 3, 2 / 3, -1 / 3])
    fid, x2 = virtual_hit(m, xi, v_in)
    assert fid == 0
    assert np.allclose(x2, [0.0, 0.75, 0.25])
    assert np.allclose(inherited_field(m, cut, xi, v_in), [2 / 3, -1 / 3, -1 / 3])


def test_inherited_field_brute_force():
    """Independent ray cast: the first coordinate of xi + t v_in to reach zero."""
    m = threshold_model()
    cut = next(f for f in m.polytope.facet_ids if m.is_cut(f))
    rho = np.full(3, 1 / 3)
    rng = np.random.default_rng(11)
    values = set()
    for _ in range(500):
        a = rng.uniform(0, 0.9)
        xi = np.array([0.1, a, 0.9 - a])
        j = rng.integers(1, 3)
        v_in = np.eye(3)[j] - rho
        t = np.where(v_in < 0, xi / np.where(v_in < 0, -v_in, 1.0), np.inf)
        expect = np.eye(3)[int(np.argmin(t))] - rho
        got = inherited_field(m, cut, xi, v_in)
        assert np.allclose(got, expect)
        values.add(tuple(np.round(got, 12)))
    assert values <= {tuple(np.round(np.eye(3)[i] - rho, 12)) for i in range(3)}
    # near the corners the prolonged ray meets another facet first
    assert len(values) > 1


def test_no_virtual_hit():
    m = threshold_model()
    cut = next(f for f in m.polytope.facet_ids if m.is_cut(f))
    with pytest.raises(NoVirtualHit):
        inherited_field(m, cut, [0.1, 0.5, 0.4], [0.0, 0.0, 0.0])


def _cut_triangle(normal, offset):
    tri = fx.perpendicular_triangle()
    fields = [tri.fields[i] for i in range(3)]
    m = build_polygon_model(fx.TRIANGLE, fields, cuts=[(normal, offset)], vertex_labels="ABC")
    cut = next(f for f in m.polytope.facet_ids if m.is_cut(f))
    return m, cut


def segment_crosses_line(p, q, w, d):
    """Does the open segment pq meet the line w + s d?  Cross-product sign test."""
    def side(z):
        return d[0] * (z[1] - w[1]) - d[1] * (z[0] - w[0])
    return side(p) * side(q) < 0


def test_cut_validity_corner_near_B():
    m, cut = _cut_triangle((1.0, 0.0), 0.9)
    res = check_cut_validity(m, cut)
    assert res.valid and res.crossed_vertex_lines == [1]
    # oracle: segment-line crossing with the altitude lines
    V = m.polytope.facet_vertices(cut)
    crossed = [i for i, w in enumerate(fx.TRIANGLE)
               if segment_crosses_line(V[0], V[1], w, m.base_fields[(i + 1) % 3])]
    assert crossed == [1]


def test_cut_validity_through_centroid():
    c = fx.TRIANGLE.mean(axis=0)
    n = np.array([-0.1, 1.0])
    m, cut = _cut_triangle(n, n @ c)
    res = check_cut_validity(m, cut)
    assert not res.valid
    assert sorted(res.crossed_vertex_lines) == [0, 1, 2]


def test_cut_validity_advisory():
    m = fx.fig5_model()
    res = {m.label(f): check_cut_validity(m, f) for f in m.polytope.facet_ids if m.is_cut(f)}
    assert res["cut3"].valid and res["cut3"].crossed_vertex_lines == [] and res["cut3"].advisory
    assert res["cut4"].valid and len(res["cut4"].crossed_vertex_lines) == 1
