import numpy as np
import pytest

from pseudobilliard import fixtures as fx
from pseudobilliard.dynamics import (DegenerateVertex, GrazingFlight, ServerState, StepTooLarge,
                                     discrete_orbit, orbit, orbit_python, piece_jacobian,
                                     random_start, return_step, server_orbit, start_state,
                                     time_sampled_orbit)
from pseudobilliard.model import PacketScheme


@pytest.fixture(scope="module")
def n3():
    return fx.standard(3)


def test_return_step_example(n3):
    s = return_step(n3, start_state(n3, 0, [0.0, 0.4, 0.6]))
    assert s.facet == 1
    assert np.allclose(s.position, [0.8, 0.0, 0.2])
    assert np.allclose(s.field, np.array([-1, 2, -1]) / 3)
    assert not s.sigma


def test_return_step_degenerate(n3):
    # at (1, 0, 0) the tied facets are x2 = 0 and x3 = 0; each of their
    # fields decreases the other zero coordinate, so neither re-enters
    for i in (1, 2):
        v = np.eye(3)[i] - 1 / 3
        assert min(v[1], v[2]) < 0
    with pytest.raises(DegenerateVertex):
        return_step(n3, start_state(n3, 0, [0.0, 0.5, 0.5]))


def test_contraction_triangle_step():
    m = fx.contraction_triangle()
    A, B, C = fx.TRIANGLE
    for t in (0.1, 0.5, 0.9):
        s = return_step(m, start_state(m, 0, A + t * (B - A)))
        # B goes to A + 0.2 (C - A) and A stays put, so the map is x -> 0.2 x along the sides
        assert s.facet == 2
        assert np.allclose(s.position, A + 0.2 * t * (C - A), atol=1e-12)


def test_piece_jacobian_stretch(n3):
    pc = piece_jacobian(n3, 0, n3.fields[0], 1)
    u = np.array([0.0, 1.0, -1.0])
    v = n3.fields[0]
    expect = u + 3 * v * u[1]  # u - v (n.u)/(n.v) with n = e2
    assert np.allclose(pc.ambient @ u, expect)
    assert np.allclose(expect, [2.0, 0.0, -2.0])
    assert np.allclose(np.abs(pc.linear), 2.0)


def test_piece_jacobian_neutral_n4():
    m = fx.standard(4)
    pc = piece_jacobian(m, 0, m.fields[0], 1)
    u = np.array([0.0, 0.0, 1.0, -1.0])
    assert np.allclose(pc.ambient @ u, u)
    sv = pc.singular_values
    assert np.any(np.isclose(sv, 1.0))


def test_piece_jacobian_parallel_field_is_identity():
    m = fx.unit_square()
    pc = piece_jacobian(m, 0, m.fields[0], 2)
    assert np.allclose(np.abs(pc.linear), 1.0)
    u = np.array([1.0, 0.0])  # tangent to both horizontal sides
    assert np.allclose(pc.ambient @ u, u)


def test_grazing_flight():
    m = fx.unit_square()
    with pytest.raises(GrazingFlight):
        piece_jacobian(m, 3, m.fields[3], 0)


def test_orbit_example(n3):
    rec = orbit(n3, start_state(n3, 0, [0.0, 0.3, 0.7]), 3)
    assert rec.itinerary == (1, 2, 0)
    assert np.allclose(rec.points, [[0.6, 0.0, 0.4], [0.2, 0.8, 0.0], [0.0, 0.6, 0.4]])
    assert rec.status == "ok"
    assert np.all(rec.times > 0)


def test_orbit_degenerate(n3):
    rec = orbit(n3, start_state(n3, 0, [0.0, 0.5, 0.5]), 10)
    assert rec.status == "degenerate_vertex"
    assert len(rec) == 0


def test_orbit_consistent_with_return_step(n3):
    rec = orbit(n3, random_start(n3, np.random.default_rng(2)), 30)
    for k in range(len(rec) - 1):
        nxt = return_step(n3, rec.state(k + 1))
        assert nxt.facet == rec.facets[k + 1]
        # each step doubles earlier round-off, so allow for 2^k ulps
        assert np.allclose(nxt.position, rec.points[k + 1], atol=1e-15 * 2.0 ** k)


def test_orbit_matches_python_reference(n3):
    s = random_start(n3, np.random.default_rng(8))
    a, b = orbit(n3, s, 20), orbit_python(n3, s, 20)
    assert a.itinerary == b.itinerary
    assert np.allclose(a.points, b.points, atol=1e-9)


def test_contraction_orbit_decays():
    m = fx.contraction_triangle()
    A, B, _ = fx.TRIANGLE
    s = start_state(m, 0, A + 0.5 * (B - A))
    rec = orbit(m, s, 20)
    d = np.linalg.norm(rec.points - A, axis=1)
    d0 = np.linalg.norm(s.position - A)
    k = np.arange(1, len(d) + 1)
    assert np.all(d[5:] <= 0.25 ** k[5:] * d0 * 1.0001)


def test_orbit_rejects_outward_start(n3):
    with pytest.raises(Exception):
        orbit(n3, start_state(n3, 0, [0.0, 0.3, 0.7], field=[-2 / 3, 1 / 3, 1 / 3]), 5)
    with pytest.raises(ValueError):
        orbit(n3, start_state(n3, 0, [0.0, 0.3, 0.7]), 0)


def test_corner_cut_orbit_uses_inherited_fields():
    m = fx.corner_cut()
    rec = orbit(m, start_state(m, 1, [0.3, 0.0, 0.7]), 2000)
    assert rec.status == "ok"
    cut = next(f for f in m.polytope.facet_ids if m.is_cut(f))
    on_cut = rec.facets == cut
    assert on_cut.any()
    fields = {tuple(np.round(v, 12)) for v in rec.fields[on_cut]}
    allowed = {tuple(np.round(np.eye(3)[i] - 1 / 3, 12)) for i in range(3)}
    assert fields <= allowed


@pytest.mark.parametrize("side,q", [(1.0, 2), (1.0, 4), (2.0, 3)])
def test_packet_period(side, q):
    d = discrete_orbit(fx.unit_square(side), PacketScheme(1.0 / q), [0.3, 0.0], 10_000)
    assert d.period == 2 * side * q


def test_packet_step_too_large():
    with pytest.raises(StepTooLarge):
        discrete_orbit(fx.unit_square(), PacketScheme(1.5), [0.3, 0.0], 10)


def test_time_sampling_no_op(n3):
    s = random_start(n3, np.random.default_rng(4))
    exact = orbit_python(n3, s, 300)
    sampled = time_sampled_orbit(n3, s, 0.01, 300)
    assert sampled.itinerary == exact.itinerary
    assert np.allclose(sampled.points, exact.points, atol=1e-9)


def test_server_cyclic_converges():
    m = fx.server_triangle("cyclic")
    rec = server_orbit(m, ServerState(0, np.array([0.3, 0.0]), 0), 100)
    # the cyclic chain spirals into the vertex B = (1, 0) and stops there
    assert rec.status == "degenerate_vertex"
    assert np.allclose(rec.points[-1], [1.0, 0.0], atol=1e-9)
    d = np.linalg.norm(rec.points - [1.0, 0.0], axis=1)
    ratio = d[2:40] / d[:38]
    assert np.all(ratio <= 0.5 + 1e-9)


def test_server_stochastic_reproducible():
    m = fx.server_triangle("stochastic")
    s = ServerState(0, np.array([0.3, 0.0]), 0)
    a, b = server_orbit(m, s, 500), server_orbit(m, s, 500)
    assert a.itinerary == b.itinerary
    assert np.array_equal(a.indices, b.indices)
    c = server_orbit(m, s, 500, seed=8)
    assert not np.array_equal(a.indices, c.indices)
