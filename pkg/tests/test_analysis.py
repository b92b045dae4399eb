import numpy as np
import pytest

from pseudobilliard import analysis as an
from pseudobilliard import fixtures as fx
from pseudobilliard.analysis import (EmptyOrbit, InvalidPartition, OrbitTooShort, PartitionElement)
from pseudobilliard.dynamics import (ServerState, orbit, piece_jacobian, random_server_start,
                                     random_start, server_orbit, start_state)
from pseudobilliard.model import ModelError

LN2 = np.log(2.0)


@pytest.fixture(scope="module")
def n3():
    return fx.standard(3)


# -- Lyapunov ------------------------------------------------------------------

def test_lyapunov_n3(n3):
    rep = an.lyapunov_spectrum(n3, random_start(n3, np.random.default_rng(0)), 100_000)
    assert rep.steps == 100_000
    assert abs(rep.exponent - LN2) < 1e-3
    # every single piece stretches by exactly 2
    assert np.allclose(rep.single_sv, (2.0, 2.0))


def test_lyapunov_halves_agree(n3):
    rep = an.lyapunov_spectrum(n3, random_start(n3, np.random.default_rng(1)), 50_000)
    a, b = rep.halves
    assert abs(a[0] - b[0]) <= 3 * max(rep.stderr, 1e-15) or abs(a[0] - b[0]) < 1e-12


def test_lyapunov_contraction_triangle():
    m = fx.contraction_triangle()
    A, B, _ = fx.TRIANGLE
    rep = an.lyapunov_spectrum(m, start_state(m, 0, A + 0.5 * (B - A)), 200)
    # the orbit reaches the corner in finitely many (machine) steps
    assert rep.status == "degenerate_vertex"
    assert np.isclose(rep.exponent, np.log(0.2), atol=1e-9)


def test_lyapunov_square_neutral():
    m = fx.unit_square()
    rep = an.lyapunov_spectrum(m, start_state(m, 0, [0.3, 0.0]), 1000)
    assert abs(rep.exponent) < 1e-6


def test_lyapunov_too_short(n3):
    with pytest.raises(OrbitTooShort):
        an.lyapunov_spectrum(n3, random_start(n3, np.random.default_rng(0)), 99)


# -- chaoticity certificate ---------------------------------------------------

def test_certificate_n3(n3):
    rep = an.chaos_certificate(n3)
    assert rep.passes
    # the line through e1 along (2/3, -1/3, -1/3) meets x1 = 0 at t = -3/2
    e1 = np.array([1.0, 0.0, 0.0])
    expect = e1 - 1.5 * n3.fields[0]
    assert np.allclose(rep.vertices[0].point, expect)
    assert np.allclose(expect, [0.0, 0.5, 0.5])


def test_certificate_contraction_triangle():
    rep = an.chaos_certificate(fx.contraction_triangle())
    assert not rep.passes
    assert rep.failing == ["B", "C"]


def test_certificate_n4():
    m = fx.standard(4)
    rep = an.chaos_certificate(m)
    assert rep.passes
    for i, v in enumerate(rep.vertices):
        centroid = (1 - np.eye(4)[i]) / 3
        assert np.allclose(v.point, centroid)


# -- strong Markov property ---------------------------------------------------

def test_markov_n3_facets(n3):
    part = an.facet_partition(n3)
    rep = an.verify_strong_markov(n3, part)
    assert rep.holds
    for el in part:
        ok, images = rep.elements[el.id]
        targets = sorted(im.target for im in images)
        assert targets == sorted(set(n3.polytope.facet_ids) - {el.facet})
        L = n3.polytope.facet_measure(el.facet)
        for im in images:
            # each piece covers a whole facet: endpoints 0 and sqrt(2)
            assert abs(im.interval[0]) < 1e-9 and abs(im.interval[1] - L) < 1e-9


def test_markov_contraction_triangle_fails():
    m = fx.contraction_triangle()
    rep = an.verify_strong_markov(m, an.facet_partition(m))
    assert not rep.holds
    AB = rep.images(0)[0]
    # the image of AB on CA has length 0.2 |AB|
    assert np.isclose(AB.interval[1] - AB.interval[0], 0.2)


def test_markov_overlapping_partition(n3):
    part = an.facet_partition(n3)
    el = part[0]
    dup = PartitionElement(len(part), el.facet, el.polytope, "dup", el.interval)
    with pytest.raises(InvalidPartition):
        an.verify_strong_markov(n3, part + [dup])


def test_markov_rejects_cut_facets():
    m = fx.corner_cut()
    with pytest.raises(ModelError):
        an.verify_strong_markov(m, an.facet_partition(m))


@pytest.mark.parametrize("N", [3, 4])
def test_preimage_partition_is_markov(N):
    m = fx.standard(N)
    assert an.chaos_certificate(m).passes
    part = an.preimage_partition(m)
    assert an.verify_strong_markov(m, part, samples=20_000).holds


# -- components ---------------------------------------------------------------

def labels(m, comp):
    return sorted(m.label(m.polytope.facet_ids[e]) for e in comp)


def test_components_n3(n3):
    rep = an.transitivity_components(n3, an.facet_partition(n3), steps=2000)
    closed = rep.closed_components()
    assert len(closed) == 1 and closed[0][1] == "expanding"


def test_components_square():
    m = fx.unit_square()
    rep = an.transitivity_components(m, an.facet_partition(m), steps=500)
    closed = rep.closed_components()
    # horizontal and vertical shuttles never meet
    assert sorted(labels(m, c) for c, _ in closed) == [["AB", "CD"], ["BC", "DA"]]
    assert all(k == "neutral" for _, k in closed)


def test_components_heptagon():
    m = fx.heptagon()
    rep = an.transitivity_components(m, an.facet_partition(m), steps=2000)
    got = {tuple(labels(m, c)): k for c, k in rep.closed_components()}
    assert got == {("AB", "DE"): "neutral", ("BC", "CD", "EF", "FG", "GA"): "expanding"}


def test_heptagon_constraints_hold():
    _, V = fx.solve_heptagon()
    cons = fx.heptagon_constraints(V)
    for k, v in cons.items():
        assert (abs(v) < 1e-12) if isinstance(v, float) else v, k


# -- periodic attractors ------------------------------------------------------

def test_attractor_contraction_triangle():
    m = fx.contraction_triangle()
    A, B, _ = fx.TRIANGLE
    rec = orbit(m, start_state(m, 0, A + 0.5 * (B - A)), 200)
    rep = an.detect_periodic_attractor(rec)
    assert rep.found and rep.attracting
    assert np.allclose(rep.fixed_point, A, atol=1e-12)
    assert np.isclose(rep.per_step, 0.2)
    assert an.cycle_residual(m, rep, rec) <= 10 * 1e-9


def test_attractor_fig5():
    m = fx.fig5_model()
    rec = orbit(m, random_start(m, np.random.default_rng(0)), 400)
    rep = an.detect_periodic_attractor(rec)
    assert rep.found and rep.period == 2 and rep.attracting
    assert rep.multipliers.max() < 1
    assert {m.label(s.facet) for s in rep.states} == {"cut3", "cut4"}
    assert an.cycle_residual(m, rep, rec) <= 10 * 1e-9


def test_no_attractor_n3(n3):
    rec = orbit(n3, random_start(n3, np.random.default_rng(0)), 5000)
    assert not an.detect_periodic_attractor(rec).found


# -- histograms ---------------------------------------------------------------

def test_transfer_operator_uniform(n3):
    """Lebesgue is invariant: the preimage weights 1/|slope| at every point sum to one."""
    P = n3.polytope
    rng = np.random.default_rng(3)
    pieces = [piece_jacobian(n3, f, n3.fields[f], g)
              for f in P.facet_ids for g in P.facet_ids if g != f]
    for _ in range(200):
        g = int(rng.integers(3))
        y = rng.uniform(0, P.facet_measure(g))
        total = 0.0
        for pc in pieces:
            if pc.target != g:
                continue
            x = (y - pc.offset[0]) / pc.linear[0, 0]
            if 0 <= x <= P.facet_measure(pc.source):
                total += 1.0 / abs(pc.linear[0, 0])
        assert np.isclose(total, 1.0)


def test_histogram_n3_uniform(n3):
    """Pushing uniform starts forward 40 steps keeps them uniform.

    One long double-precision orbit of this slope-2 map does not sample
    Lebesgue measure (its histogram is biased at dyadic points), so the
    invariance is checked on short orbits, whose round-off stays far below
    the bin width.
    """
    rng = np.random.default_rng(0)
    recs = [orbit(n3, random_start(n3, rng), 40) for _ in range(25_000)]
    h = an.empirical_measure(recs, bins=20)
    assert h.total == 10**6
    assert h.vector().sum() == h.total
    assert an.histogram_l1(h, an.uniform_histogram(n3, 20)) < 0.02


def test_histogram_n3_long_orbit_facet_masses(n3):
    rec = orbit(n3, random_start(n3, np.random.default_rng(0)), 200_000)
    h = an.empirical_measure(rec, bins=20)
    assert all(abs(m - 1 / 3) < 5e-3 for m in h.facet_mass().values())


def test_histogram_empty(n3):
    rec = orbit(n3, start_state(n3, 0, [0.0, 0.5, 0.5]), 5)
    with pytest.raises(EmptyOrbit):
        an.empirical_measure(rec)


def test_histogram_server_mass_near_limit():
    """After a short transient every point of the cyclic chain sits in the limit bins."""
    m = fx.server_triangle("cyclic")
    P = m.polytope
    rec = server_orbit(m, ServerState(0, np.array([0.3, 0.0]), 0), 1000)
    h = an.empirical_measure(rec, bins=20)
    limit = [(f, P.to_chart(f, [1.0, 0.0])) for f in P.facet_ids
             if abs(P.b[P.row(f)] - P.A[P.row(f)] @ [1.0, 0.0]) < 1e-9]
    near = np.linalg.norm(rec.points - [1.0, 0.0], axis=1) < 0.05
    first = int(np.argmax(near))
    assert np.all(near[first:]) and first <= 5
    assert np.isclose(an.mass_near(h, limit), (len(rec) - first) / len(rec))


# -- server -------------------------------------------------------------------

def test_coupling_identical_starts():
    m = fx.server_triangle("stochastic")
    s = ServerState(0, np.array([0.3, 0.0]), 0)
    assert np.all(an.coupling_distance(m, s, s, 100) == 0.0)


def test_coupling_stochastic_60_steps():
    m = fx.server_triangle("stochastic")
    rng = np.random.default_rng(2)
    for _ in range(20):
        a, b = random_server_start(m, rng), random_server_start(m, rng)
        d = an.coupling_distance(m, a, b, 60)
        assert d[-1] < 1e-8


def test_coupling_cyclic_halves():
    m = fx.server_triangle("cyclic")
    rng = np.random.default_rng(4)
    a, b = random_server_start(m, rng), random_server_start(m, rng)
    d = an.coupling_distance(m, a, b, 40)
    C, r = an.fit_rate(d)
    assert r < 1
    k = np.arange(len(d))
    assert np.all(d <= 4 * d[0] * 0.5 ** (k // 2) + 1e-12) or np.all(d[2:] <= d[:-2] * 0.5 + 1e-12)


def test_server_attractor_count():
    m = fx.server_triangle("cyclic")
    keys, unresolved = an.count_attractors(m, starts=100, n=300)
    d = 2
    assert unresolved == 0
    assert 1 <= len(keys) <= (d + 1) ** d


def test_server_contraction_check():
    rep = an.server_contraction(fx.server_triangle("cyclic"))
    assert rep.holds
    assert np.isclose(rep.max_factor, 0.5)
