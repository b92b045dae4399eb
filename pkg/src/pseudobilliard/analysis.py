"""Numerical diagnostics: Lyapunov spectra, Markov partitions, components,
periodic attractors, occupation histograms and coupling."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .dynamics import (BoundaryState, DegenerateVertex, DynamicsError, ServerState,
                       compose, orbit, piece_jacobian, random_server_start, random_start,
                       return_step, sample_on_facet, server_draws, server_orbit,
                       start_state)
from .geometry import TAU_GEOM, OutwardField, SigmaHit, facet_polytope, first_facet_hit
from .model import ModelError, opposite_facet

LYAP_THRESHOLD = 1e-3
MAX_PERIOD = 64


class AnalysisError(Exception):
    pass


class OrbitTooShort(AnalysisError):
    pass


class LineParallelToFace(AnalysisError):
    pass


class InvalidPartition(AnalysisError):
    pass


class EmptyOrbit(AnalysisError):
    pass


def thread_count():
    """Worker cap for ensembles, from ``PSB_THREADS`` (default: CPU count)."""
    env = os.environ.get("PSB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def ensemble(fn, items, threads=None):
    """``[fn(x) for x in items]``, run on a thread pool; result order is preserved.

    The compiled kernels release the GIL, so threads give real concurrency.
    """
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- Lyapunov exponents -------------------------------------------------------

@dataclass
class LyapunovReport:
    exponents: np.ndarray
    steps: int
    tail_variance: float
    stderr: float
    halves: tuple
    single_sv: tuple
    kstep_sv: dict = field(default_factory=dict)
    status: str = "ok"

    @property
    def exponent(self):
        return float(self.exponents[0])


def _batch_stderr(x, batches=20):
    n = len(x) // batches
    if n < 1:
        return float("nan")
    means = x[:n * batches].reshape(batches, n).mean(axis=1)
    return float(means.std(ddof=1) / np.sqrt(batches))


def piece_singular_values(orbit_rec, kmax=4, samples=1000, rng=None):
    """Min/max singular values of sampled single pieces and ``k``-step compositions."""
    rng = np.random.default_rng(0) if rng is None else rng
    n = len(orbit_rec)
    single = [np.inf, 0.0]
    kstep = {k: [np.inf, 0.0] for k in range(2, kmax + 1)}
    if n < 1:
        return tuple(single), {}
    idx = rng.choice(max(n - kmax, 1), size=min(samples, max(n - kmax, 1)), replace=False)
    for i in idx:
        pieces = [orbit_rec.piece(int(i) + j) for j in range(min(kmax, n - int(i)))]
        for k in range(1, len(pieces) + 1):
            L, _ = compose(pieces[:k])
            sv = np.linalg.svd(L, compute_uv=False)
            tgt = single if k == 1 else kstep[k]
            tgt[0] = min(tgt[0], float(sv.min()))
            tgt[1] = max(tgt[1], float(sv.max()))
    return tuple(single), {k: tuple(v) for k, v in kstep.items()}


def lyapunov_spectrum(model, s0, n, sv_samples=200, kmax=4):
    """Lyapunov exponents by Gram-Schmidt renormalisation along the orbit.

    If the orbit stops at a degenerate vertex, the exponents cover the steps
    taken and ``status`` says why.
    """
    if n < 100:
        raise OrbitTooShort(f"need at least 100 steps, got {n}")
    rec = orbit(model, s0, n, tangent=True)
    if len(rec) == 0:
        raise DynamicsError(f"orbit terminated immediately: {rec.message}")
    logs = rec.logs
    exps = np.sort(logs.mean(axis=0))[::-1]
    lead = logs.sum(axis=1) / logs.shape[1] if logs.shape[1] > 1 else logs[:, 0]
    running = np.cumsum(logs[:, 0]) / np.arange(1, len(logs) + 1)
    tail = running[len(running) // 2:]
    h = len(logs) // 2
    halves = (logs[:h].mean(axis=0), logs[h:].mean(axis=0)) if h else (exps, exps)
    single, kstep = piece_singular_values(rec, kmax=kmax, samples=sv_samples)
    return LyapunovReport(exps, len(rec), float(tail.var()), _batch_stderr(lead),
                          halves, single, kstep, rec.status)


# -- chaoticity certificate ---------------------------------------------------

@dataclass
class VertexCheck:
    vertex: int
    label: str
    passes: bool
    point: np.ndarray
    margin: float


@dataclass
class CertificateReport:
    passes: bool
    vertices: list

    @property
    def failing(self):
        return [v.label for v in self.vertices if not v.passes]


def vertex_label(model, i):
    names = getattr(model, "vertex_names", None)
    if names:
        return names[i]
    if model.kind == "standard":
        return f"e{i + 1}"
    return str(i)


def chaos_certificate(model):
    """Check that each vertex line meets the opposite face in its relative interior."""
    B = model.base_polytope
    checks = []
    for i, w in enumerate(model.base_vertices):
        f = opposite_facet(model, i)
        v = model.base_fields[f]
        r = B.row(f)
        a, b = B.A[r], B.b[r]
        av = a @ v
        if abs(av) <= TAU_GEOM:
            raise LineParallelToFace(f"vertex {i}: field of the opposite face is parallel to it")
        p = w + (b - a @ w) / av * v
        slack = np.delete(B.b - B.A @ p, r)
        margin = float(slack.min())
        checks.append(VertexCheck(i, vertex_label(model, i), margin > TAU_GEOM, p, margin))
    return CertificateReport(all(c.passes for c in checks), checks)


# -- partitions and the strong Markov property --------------------------------

@dataclass
class PartitionElement:
    id: int
    facet: int
    polytope: object
    label: str = ""
    interval: tuple | None = None  # chart interval for 1-D facets


def _element(P, eid, fid, extra=(), label=""):
    poly = facet_polytope(P, fid, extra)
    iv = None
    if P.dim - 1 == 1:
        y = P.to_chart(fid, poly.vertices)[:, 0]
        iv = (float(y.min()), float(y.max()))
    return PartitionElement(eid, fid, poly, label, iv)


def facet_partition(model):
    P = model.polytope
    return [_element(P, i, f, label=model.label(f)) for i, f in enumerate(P.facet_ids)]


def _flight_constraints(P, v, g, exclude):
    """Halfspaces (on the facet) where ``g`` is hit no later than any other facet."""
    out = []
    d = P.A @ v
    rg = P.row(g)
    for h in P.facet_ids:
        rh = P.row(h)
        if h in (g, exclude) or d[rh] <= 1e-14:
            continue
        normal = -P.A[rg] / d[rg] + P.A[rh] / d[rh]
        offset = P.b[rh] / d[rh] - P.b[rg] / d[rg]
        out.append((normal, offset))
    return out


def preimage_partition(model):
    """Facets split into continuity pieces of the return map (preimages of facets)."""
    P = model.polytope
    out = []
    for f in P.facet_ids:
        if model.is_cut(f):
            raise ModelError("preimage partitions need position-determined fields")
        v = model.fields[f]
        d = P.A @ v
        for g in P.facet_ids:
            if g == f or d[P.row(g)] <= 1e-14:
                continue
            try:
                el = _element(P, len(out), f, _flight_constraints(P, v, g, f),
                              f"{model.label(f)}>{model.label(g)}")
            except Exception:
                continue
            if el.polytope.vertices.shape[0] < P.dim or _measure(P, el) <= TAU_GEOM:
                continue
            out.append(el)
    return out


def _measure(P, el):
    if el.interval is not None:
        return el.interval[1] - el.interval[0]
    Y = P.to_chart(el.facet, el.polytope.vertices)
    if len(Y) <= Y.shape[1]:
        return 0.0
    from scipy.spatial import ConvexHull
    try:
        return float(ConvexHull(Y).volume)
    except Exception:
        return 0.0


def check_partition(model, partition, rng=None, samples=20000):
    """Raise InvalidPartition on overlaps or gaps."""
    P = model.polytope
    by_facet = {}
    for el in partition:
        by_facet.setdefault(el.facet, []).append(el)
    for f in P.facet_ids:
        els = by_facet.get(f, [])
        if not els:
            raise InvalidPartition(f"facet {f} is not covered")
        if P.dim - 1 == 1:
            L = P.facet_measure(f)
            ivs = sorted(e.interval for e in els)
            pos = 0.0
            for lo, hi in ivs:
                if lo < pos - TAU_GEOM:
                    raise InvalidPartition(f"elements overlap on facet {f}")
                if lo > pos + TAU_GEOM:
                    raise InvalidPartition(f"gap on facet {f} at {pos}")
                pos = max(pos, hi)
            if abs(pos - L) > TAU_GEOM:
                raise InvalidPartition(f"gap at the end of facet {f}")
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            X = sample_on_facet(P, f, rng, samples)
            cnt = sum(e.polytope.contains(X, tol=0.0).astype(int) for e in els)
            bad = np.mean(cnt != 1)
            if bad > 1e-3:
                raise InvalidPartition(f"{bad:.2%} of facet {f} is covered {{0, 2+}} times")


@dataclass
class ImagePiece:
    source: int
    target: int
    interval: tuple | None
    det: float
    covered: list
    exact: bool


@dataclass
class MarkovReport:
    holds: bool
    elements: dict  # element id -> (holds, [ImagePiece])

    def images(self, eid):
        return self.elements[eid][1]


def _pieces_1d(model, el):
    """Continuity pieces of an element on a 1-D facet: (lo, hi, target)."""
    P = model.polytope
    f = el.facet
    v = model.fields[f]
    B = P.facet_basis(f)
    o = P.facet_origin(f)
    r = P.row(f)
    a, b = P.A[r], P.b[r]
    cuts = set(el.interval)
    for w in P.vertices:
        av = a @ v
        if abs(av) <= TAU_GEOM:
            continue
        p = w + (b - a @ w) / av * v
        s = float((p - o) @ B[:, 0])
        if el.interval[0] + TAU_GEOM < s < el.interval[1] - TAU_GEOM:
            cuts.add(s)
    pts = sorted(cuts)
    out = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        mid = P.from_chart(f, [(lo + hi) / 2])
        hit, _, _ = first_facet_hit(mid, v, P, exclude=f)
        if isinstance(hit, SigmaHit):
            raise DynamicsError("interior of a piece hits a vertex")
        if out and out[-1][2] == hit:
            out[-1] = (out[-1][0], hi, hit)
        else:
            out.append((lo, hi, hit))
    return out


def verify_strong_markov(model, partition, rng=None, samples=100_000):
    """Check each element's image is a union of elements (exactly for 1-D facets)."""
    if any(model.is_cut(el.facet) for el in partition):
        raise ModelError("the Markov check needs position-determined fields; cut facets inherit theirs")
    check_partition(model, partition, rng)
    P = model.polytope
    rng = np.random.default_rng(0) if rng is None else rng
    by_facet = {}
    for el in partition:
        by_facet.setdefault(el.facet, []).append(el)
    report = {}
    for el in partition:
        v = model.fields[el.facet]
        images = []
        if el.interval is not None:
            for lo, hi, g in _pieces_1d(model, el):
                pc = piece_jacobian(model, el.facet, v, g)
                ends = sorted([float(pc([lo])[0]), float(pc([hi])[0])])
                covered, exact = [], True
                for e in by_facet[g]:
                    ov = min(ends[1], e.interval[1]) - max(ends[0], e.interval[0])
                    if ov > TAU_GEOM:
                        covered.append(e.id)
                        if (e.interval[0] < ends[0] - TAU_GEOM) or (e.interval[1] > ends[1] + TAU_GEOM):
                            exact = False
                det = float(abs(np.linalg.det(pc.linear)))
                images.append(ImagePiece(el.id, g, tuple(ends), det, covered,
                                         exact and det > TAU_GEOM))
        else:
            images = _pieces_mc(model, el, by_facet, rng, samples)
        report[el.id] = (all(im.exact for im in images) and bool(images), images)
    return MarkovReport(all(h for h, _ in report.values()), report)


def _pieces_mc(model, el, by_facet, rng, samples):
    P = model.polytope
    f = el.facet
    v = model.fields[f]
    d = P.A @ v
    out = []
    for g in P.facet_ids:
        if g == f or d[P.row(g)] <= 1e-14:
            continue
        try:
            src = facet_polytope(P, f, list(_element_constraints(el)) + _flight_constraints(P, v, g, f))
            if src.vertices.shape[0] < P.dim:
                continue
        except Exception:
            continue
        pc = piece_jacobian(model, f, v, g)
        det = float(abs(np.linalg.det(pc.linear)))
        if det <= TAU_GEOM:
            out.append(ImagePiece(el.id, g, None, det, [], False))
            continue
        Y = sample_on_facet(P, g, rng, samples)
        yc = P.to_chart(g, Y)
        pre = np.linalg.solve(pc.linear, (yc - pc.offset).T).T
        in_img = src.contains(P.from_chart(f, pre), tol=0.0)
        if in_img.mean() * P.facet_measure(g) <= 1e-6:
            continue
        covered = []
        union = np.zeros(len(Y), dtype=bool)
        for e in by_facet[g]:
            in_e = e.polytope.contains(Y, tol=0.0)
            if in_e.any() and in_img[in_e].mean() > 0.5:
                covered.append(e.id)
                union |= in_e
        sym = np.mean(in_img ^ union) / max(in_img.mean(), 1e-12)
        out.append(ImagePiece(el.id, g, None, det, covered, bool(sym < 1e-3)))
    return out


def _element_constraints(el):
    """Halfspaces of an element polytope, for re-use in sub-piece construction."""
    return [(h.normal, h.offset) for h in el.polytope.halfspaces]


# -- transitivity components --------------------------------------------------

@dataclass
class ComponentReport:
    components: list           # lists of element ids, strongly connected
    closed: list               # indices into ``components``
    classification: dict       # component index -> expanding|neutral|contracting
    exponents: dict            # component index -> sampled exponents
    witnesses: dict            # component index -> list of start states
    graph: object = None

    def closed_components(self):
        return [(self.components[i], self.classification[i]) for i in self.closed]


def transition_graph(model, partition, rng=None):
    rep = verify_strong_markov(model, partition, rng)
    G = nx.DiGraph()
    G.add_nodes_from(el.id for el in partition)
    for eid, (_, images) in rep.elements.items():
        for im in images:
            for c in im.covered:
                G.add_edge(eid, c)
    return G, rep


def classify_exponent(lam, threshold=LYAP_THRESHOLD):
    lam = np.atleast_1d(lam)
    if lam.min() > threshold:
        return "expanding"
    if np.all(np.abs(lam) <= threshold):
        return "neutral"
    return "contracting"


def transitivity_components(model, partition, samples=5, steps=4000, seed=0):
    """Strongly connected components of the element graph and their Lyapunov type."""
    G, _ = transition_graph(model, partition)
    comps = [sorted(c) for c in nx.strongly_connected_components(G)]
    comps.sort(key=lambda c: c[0])
    C = nx.condensation(G, scc=[set(c) for c in comps])
    closed = [i for i in C.nodes if C.out_degree(i) == 0]
    els = {el.id: el for el in partition}
    P = model.polytope
    rng = np.random.default_rng(seed)
    cls, exps, wit = {}, {}, {}
    for i in closed:
        starts = []
        for _ in range(samples):
            el = els[comps[i][rng.integers(len(comps[i]))]]
            x = el.polytope.sample(rng, 1)[0] if el.interval is None else \
                P.from_chart(el.facet, [rng.uniform(*el.interval)])
            starts.append(start_state(model, el.facet, x))

        def one(s):
            rec = orbit(model, s, steps, tangent=True)
            if len(rec) < 10:
                return None
            return np.sort(rec.logs.mean(axis=0))
        lams = [x for x in ensemble(one, starts) if x is not None]
        exps[i] = np.array(lams)
        wit[i] = starts
        cls[i] = classify_exponent(np.min(lams, axis=0)) if lams else "unknown"
        if lams and cls[i] != "expanding":
            cls[i] = classify_exponent(np.concatenate(lams))
    return ComponentReport(comps, closed, cls, exps, wit, G)


# -- periodic attractors ------------------------------------------------------

@dataclass
class PeriodicReport:
    found: bool
    period: int | None = None
    states: list = field(default_factory=list)
    multipliers: np.ndarray | None = None
    per_step: float | None = None
    attracting: bool = False
    fixed_point: np.ndarray | None = None


def detect_periodic_attractor(rec, tol=1e-9, max_period=MAX_PERIOD):
    """Find a symbolic cycle in the orbit tail and refine it to a fixed point of the composed piece."""
    it = np.asarray(rec.facets)
    n = len(it)
    period = None
    for p in range(1, max_period + 1):
        L = max(4 * p, 16)
        if L > n:
            break
        tail = it[-L:]
        if np.all(tail[p:] == tail[:-p]):
            period = p
            break
    if period is None:
        return PeriodicReport(False)
    start = n - period - 1 if n > period else 0
    s0 = rec.state(start + 1) if start + 1 <= n else rec.state(start)
    k0 = start + 1
    pieces = [rec.piece(k) for k in range(k0, k0 + period) if k < n]
    if len(pieces) < period:
        k0 = n - 2 * period
        s0 = rec.state(k0)
        pieces = [rec.piece(k) for k in range(k0, k0 + period)]
    Lc, c = compose(pieces)
    P = rec.model.polytope
    sv = np.linalg.svd(Lc, compute_uv=False)
    M = np.eye(len(c)) - Lc
    if abs(np.linalg.det(M)) > 1e-12:
        y = np.linalg.solve(M, c)
    else:
        y = P.to_chart(s0.facet, s0.position)
    states = []
    fid = s0.facet
    for j, pc in enumerate(pieces):
        x = P.from_chart(fid, y)
        states.append(BoundaryState(fid, x, pc.field))
        y = pc(y)
        fid = pc.target
    attracting = bool(sv.max() < 1.0)
    return PeriodicReport(True, period, states, sv, float(np.prod(sv) ** (1.0 / (period * len(sv)))),
                          attracting, states[0].position)


def cycle_residual(model, report, rec=None):
    """Max distance between the refined cycle and its image under the return map.

    A cycle sitting on a vertex of the region (flights shrinking to zero as
    the orbit spirals into a corner) has no image: the return map is not
    defined there.  With ``rec`` given, such a cycle is compared instead to
    the last ``period`` points of the orbit, which are genuine iterates.
    """
    worst = 0.0
    k = len(report.states)
    try:
        for j, s in enumerate(report.states):
            nxt = return_step(model, s)
            ref = report.states[(j + 1) % k]
            if nxt.facet != ref.facet:
                return np.inf
            worst = max(worst, float(np.linalg.norm(nxt.position - ref.position)))
        return worst
    except DegenerateVertex:
        if rec is None or len(rec) < k:
            raise
    tail_f = np.asarray(rec.facets[-k:])
    tail_x = np.asarray(rec.points[-k:])
    for shift in range(k):
        fac = [report.states[(j + shift) % k].facet for j in range(k)]
        if list(tail_f) == fac:
            return max(float(np.linalg.norm(tail_x[j] - report.states[(j + shift) % k].position))
                       for j in range(k))
    return np.inf


# -- occupation histograms ----------------------------------------------------

@dataclass
class Histogram:
    facets: list
    edges: dict
    counts: dict
    total: int

    def vector(self):
        return np.concatenate([np.ravel(self.counts[f]) for f in self.facets]).astype(float)

    def normalized(self):
        if self.total == 0:
            raise EmptyOrbit("histogram is empty")
        return self.vector() / self.total

    def facet_mass(self):
        return {f: float(np.sum(self.counts[f])) / self.total for f in self.facets}


def _facet_edges(P, fid, bins):
    Y = P.to_chart(fid, P.facet_vertices(fid))
    return [np.linspace(Y[:, j].min(), Y[:, j].max(), bins + 1) for j in range(Y.shape[1])]


def empirical_measure(orbits, bins=20, model=None, skip=0):
    """Occupation histogram of boundary points, binned per facet in chart coordinates."""
    if not isinstance(orbits, (list, tuple)):
        orbits = [orbits]
    model = model or orbits[0].model
    P = model.polytope
    facets = list(P.facet_ids)
    edges = {f: _facet_edges(P, f, bins) for f in facets}
    counts = {f: np.zeros([bins] * (P.dim - 1), dtype=np.int64) for f in facets}
    total = 0
    for rec in orbits:
        fac = np.asarray(rec.facets)[skip:]
        pts = np.asarray(rec.points)[skip:]
        for f in facets:
            sel = fac == f
            if not sel.any():
                continue
            Y = (pts[sel] - P.facet_origin(f)) @ P.facet_basis(f)
            # clip to the facet box so boundary round-off stays in the end bins
            E = edges[f]
            Y = np.column_stack([np.clip(Y[:, j], E[j][0], E[j][-1]) for j in range(Y.shape[1])])
            h, _ = np.histogramdd(Y, bins=E)
            counts[f] += h.astype(np.int64)
            total += int(sel.sum())
    if total == 0:
        raise EmptyOrbit("no boundary points to histogram")
    return Histogram(facets, edges, counts, total)


def uniform_histogram(model, bins=20):
    """Expected bin masses for the boundary measure that is uniform in arclength/area."""
    P = model.polytope
    facets = list(P.facet_ids)
    edges = {f: _facet_edges(P, f, bins) for f in facets}
    if P.dim - 1 != 1:
        raise NotImplementedError("uniform reference is only provided for 1-D facets")
    total_len = sum(P.facet_measure(f) for f in facets)
    scale = 10**9
    counts = {f: np.round(np.diff(edges[f][0]) / total_len * scale).astype(np.int64) for f in facets}
    return Histogram(facets, edges, counts, int(sum(c.sum() for c in counts.values())))


def histogram_l1(h1, h2):
    a, b = h1.normalized(), h2.normalized()
    if a.shape != b.shape:
        raise ValueError("histograms use different binnings")
    return float(np.abs(a - b).sum())


def mass_near(hist, points_by_facet):
    """Fraction of mass in bins containing the given (facet, point) locations."""
    model_bins = 0
    for f, y in points_by_facet:
        E = hist.edges[f]
        idx = tuple(int(np.clip(np.searchsorted(E[j], y[j], side="right") - 1, 0, len(E[j]) - 2))
                    for j in range(len(E)))
        model_bins += hist.counts[f][idx]
    return model_bins / hist.total


# -- switched server ----------------------------------------------------------

def coupling_distance(model, s0, s1, n, seed=None):
    """Distances between two chains driven by the same uniforms."""
    stochastic = model.policy.kind == "stochastic"
    seed = model.policy.seed if seed is None else seed
    draws = server_draws(seed, n) if stochastic else None
    a = server_orbit(model, s0, n, draws=draws)
    b = server_orbit(model, s1, n, draws=draws)
    m = min(len(a), len(b))
    return np.linalg.norm(a.points[:m] - b.points[:m], axis=1)


def fit_rate(distances, floor=1e-13):
    """Least-squares ``(C, r)`` for ``d_k ~ C r^k`` over entries above ``floor``."""
    d = np.asarray(distances, float)
    k = np.flatnonzero(d > floor)
    if len(k) < 2:
        return float("nan"), float("nan")
    slope, icpt = np.polyfit(k, np.log(d[k]), 1)
    return float(np.exp(icpt)), float(np.exp(slope))


def attractor_key(rec, digits=6):
    """Label for the limit set reached by a deterministic server orbit.

    The label is the set of rounded points of the terminal cycle; an orbit
    stopped at a vertex gets that vertex alone.
    """
    n = len(rec)
    if n == 0:
        return None
    if rec.status == "degenerate_vertex":
        return frozenset([tuple(np.round(rec.points[-1], digits) + 0.0)])
    it = np.asarray(rec.facets)
    idx = np.asarray(rec.indices)
    for p in range(1, MAX_PERIOD + 1):
        L = 4 * p
        if L > n:
            break
        if np.all(it[-L + p:] == it[-L:-p]) and np.all(idx[-L + p:] == idx[-L:-p]):
            return frozenset(tuple(r) for r in np.round(rec.points[-p:], digits) + 0.0)
    return None


def count_attractors(model, starts=1000, n=400, seed=0):
    rng = np.random.default_rng(seed)
    S = [random_server_start(model, rng) for _ in range(starts)]
    keys = ensemble(lambda s: attractor_key(server_orbit(model, s, n)), S)
    return {k for k in keys if k is not None}, sum(k is None for k in keys)


@dataclass
class ContractionCheck:
    holds: bool
    max_factor: float
    maps: list  # (facet, field index, target facet, factor)


def server_contraction(model):
    """Check every (facet, field) flight lands in one facet and shrinks lengths.

    For 1-D facets this is the property the uniform-contraction argument
    needs; it is checked directly instead of via the vertex-line condition.
    """
    P = model.polytope
    maps, worst, ok = [], 0.0, True
    for f in P.facet_ids:
        V = P.facet_vertices(f)
        for k, v in enumerate(model.fields_of_facet[f]):
            targets = set()
            for t in np.linspace(0.02, 0.98, 25):
                x = V[0] + t * (V[-1] - V[0])
                hit, _, _ = first_facet_hit(x, v, P, exclude=f)
                targets.add(hit if not isinstance(hit, SigmaHit) else -1)
            if len(targets) != 1 or -1 in targets:
                ok = False
                maps.append((f, k, None, np.nan))
                continue
            g = targets.pop()
            pc = piece_jacobian(model, f, v, g)
            fac = float(np.linalg.svd(pc.linear, compute_uv=False).max())
            worst = max(worst, fac)
            maps.append((f, k, g, fac))
    return ContractionCheck(ok and worst < 1.0, worst, maps)


def standing_assumption(model):
    """Vertex-line condition for every field of the opposite face (simplex regions).

    Returns a list of ``(vertex index, facet, field index, passes)``.
    """
    P = model.polytope
    out = []
    V = P.vertices
    for i, w in enumerate(V):
        away = [f for f in P.facet_ids if P.b[P.row(f)] - P.A[P.row(f)] @ w > P.tol]
        if len(away) != 1:
            raise ModelError("standing assumption is defined for simplices")
        f = away[0]
        r = P.row(f)
        for k, v in enumerate(model.fields_of_facet[f]):
            av = P.A[r] @ v
            if abs(av) <= TAU_GEOM:
                out.append((i, f, k, False))
                continue
            p = w + (P.b[r] - P.A[r] @ w) / av * v
            out.append((i, f, k, bool(np.delete(P.b - P.A @ p, r).min() > TAU_GEOM)))
    return out


__all__ = [
    "AnalysisError", "CertificateReport", "ComponentReport", "ContractionCheck", "EmptyOrbit",
    "Histogram", "InvalidPartition", "LineParallelToFace", "LyapunovReport", "MarkovReport",
    "OrbitTooShort", "PartitionElement", "PeriodicReport", "attractor_key", "chaos_certificate",
    "check_partition", "classify_exponent", "count_attractors", "coupling_distance",
    "cycle_residual", "detect_periodic_attractor", "empirical_measure", "ensemble",
    "facet_partition", "fit_rate", "histogram_l1", "lyapunov_spectrum", "mass_near",
    "piece_singular_values", "preimage_partition", "server_contraction", "standing_assumption",
    "thread_count", "transition_graph", "transitivity_components", "uniform_histogram",
    "verify_strong_markov",
]
