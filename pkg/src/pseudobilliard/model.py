"""Builders and validators for pseudo billiard models."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import TAU_GEOM, ConvexPolytope, OutwardField, cut_polytope


class ModelError(Exception):
    pass


class RateImbalance(ModelError):
    pass


class NonConvex(ModelError):
    pass


class BadProbabilities(ModelError):
    pass


class NoVirtualHit(ModelError):
    pass


@dataclass(frozen=True)
class SwitchedArrivalSpec:
    rates: tuple
    thresholds: tuple | None = None
    # accepted but never binding, see README
    upper_thresholds: tuple | None = None

    @property
    def N(self):
        return len(self.rates)


@dataclass(frozen=True)
class PacketScheme:
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("packet step must be positive")


class PseudoBilliardModel:
    """Polytope with one constant field per facet.

    Cut facets carry no field of their own: it is inherited pointwise from
    the base (uncut) polytope, see :func:`inherited_field`.
    """

    def __init__(self, polytope, fields, base_polytope=None, base_fields=None,
                 tiebreak=None, base_vertices=None, labels=None, kind="generic",
                 vertex_names=None):
        self.polytope = polytope
        self.fields = {int(k): np.asarray(v, float) for k, v in fields.items()}
        self.base_polytope = polytope if base_polytope is None else base_polytope
        self.base_fields = self.fields if base_fields is None else {
            int(k): np.asarray(v, float) for k, v in base_fields.items()}
        self.tiebreak = tuple(polytope.facet_ids if tiebreak is None else tiebreak)
        if base_vertices is None:
            base_vertices = self.base_polytope.vertices
        self.base_vertices = np.asarray(base_vertices, float)
        self.labels = dict(labels or {})
        self.kind = kind
        self.vertex_names = list(vertex_names) if vertex_names else None
        self._validate()

    def _validate(self):
        P = self.polytope
        for f in P.facets:
            if f.is_cut:
                continue
            if f.id not in self.fields:
                raise ModelError(f"facet {f.id} has no field")
            v = self.fields[f.id]
            if len(P.eq_offsets) and np.any(np.abs(P.eq_normals @ v) > 1e-9):
                raise ModelError(f"field on facet {f.id} leaves the affine hull")
            if f.inward_normal @ v <= TAU_GEOM:
                raise OutwardField(f"field on facet {f.id} does not point inward")
        if set(self.tiebreak) != set(P.facet_ids):
            raise ModelError("tie-break order must list every facet once")

    def is_cut(self, fid):
        return self.polytope.facet(fid).is_cut

    def label(self, fid):
        return self.labels.get(fid, str(fid))

    @property
    def dim(self):
        return self.polytope.dim

    @cached_property
    def tables(self):
        """Row-ordered arrays for the orbit kernels (row order = tie-break order)."""
        P, B = self.polytope, self.base_polytope
        order = list(self.tiebreak)
        rows = [P.row(f) for f in order]
        n = P.ambient_dim
        A = np.ascontiguousarray(P.A[rows])
        b = np.ascontiguousarray(P.b[rows])
        F = np.zeros((len(order), n))
        cut = np.zeros(len(order), dtype=np.uint8)
        for i, f in enumerate(order):
            if self.is_cut(f):
                cut[i] = 1
            else:
                F[i] = self.fields[f]
        bids = list(B.facet_ids)
        A0 = np.ascontiguousarray(B.A[[B.row(f) for f in bids]])
        b0 = np.ascontiguousarray(B.b[[B.row(f) for f in bids]])
        F0 = np.array([self.base_fields[f] for f in bids])
        return dict(order=order, A=A, b=b, F=F, is_cut=cut, A0=A0, b0=b0, F0=F0)


@dataclass(frozen=True)
class SwitchPolicy:
    kind: str = "cyclic"
    probabilities: dict | None = None
    floor: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("cyclic", "stochastic"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "stochastic":
            if not self.probabilities:
                raise BadProbabilities("stochastic policy needs probabilities")
            if not self.floor > 0:
                raise BadProbabilities("probability floor must be positive")
            for key, p in self.probabilities.items():
                p = np.asarray(p, float)
                if abs(p.sum() - 1.0) > 1e-12:
                    raise BadProbabilities(f"probabilities on {key} sum to {p.sum()}")
                if np.any(p <= self.floor):
                    raise BadProbabilities(f"probabilities on {key} violate the floor {self.floor}")

    def probabilities_on(self, fid, N):
        if self.kind == "cyclic":
            return np.full(N, 1.0 / N)
        p = self.probabilities
        return np.asarray(p.get(fid, p.get("*")), float)


class SwitchedServerModel:
    def __init__(self, polytope, fields_of_facet, policy, labels=None):
        self.polytope = polytope
        self.fields_of_facet = {int(k): [np.asarray(v, float) for v in vs]
                                for k, vs in fields_of_facet.items()}
        self.policy = policy
        self.labels = dict(labels or {})
        counts = {len(v) for v in self.fields_of_facet.values()}
        if len(counts) != 1 or counts.pop() < 2:
            raise ModelError("every facet needs the same number (>= 2) of fields")
        self.N = len(next(iter(self.fields_of_facet.values())))
        for f in polytope.facets:
            for v in self.fields_of_facet[f.id]:
                if f.inward_normal @ v <= TAU_GEOM:
                    raise OutwardField(f"a field on facet {f.id} does not point inward")
        if policy.kind == "stochastic":
            for f in polytope.facet_ids:
                p = policy.probabilities_on(f, self.N)
                if p is None or len(p) != self.N:
                    raise BadProbabilities(f"no probability vector of length {self.N} for facet {f}")

    def label(self, fid):
        return self.labels.get(fid, str(fid))

    @cached_property
    def tables(self):
        P = self.polytope
        order = list(P.facet_ids)
        rows = [P.row(f) for f in order]
        FS = np.array([[v for v in self.fields_of_facet[f]] for f in order])
        cum = np.array([np.cumsum(self.policy.probabilities_on(f, self.N)) for f in order])
        cum[:, -1] = 1.0 + 1e-12
        return dict(order=order, A=np.ascontiguousarray(P.A[rows]),
                    b=np.ascontiguousarray(P.b[rows]), FS=np.ascontiguousarray(FS),
                    cum=np.ascontiguousarray(cum))


# -- builders -----------------------------------------------------------------

def simplex(N, total=1.0, lower=None):
    lower = np.zeros(N) if lower is None else np.asarray(lower, float)
    return ConvexPolytope([(-np.eye(N)[i], -lower[i]) for i in range(N)], (np.ones(N), total))


def build_standard_model(spec, cuts=()):
    """Switched-arrival model: field ``e_i - rho`` on the facet ``x_i = 0``.

    Positive thresholds and extra ``cuts`` (``(normal, offset)`` meaning
    ``normal . x <= offset``) are applied with :func:`cut_polytope`.
    """
    rho = np.asarray(spec.rates, float)
    N = len(rho)
    if N < 2 or np.any(rho <= 0):
        raise ModelError("rates must be positive and at least two")
    if abs(rho.sum() - 1.0) > 1e-12:
        raise RateImbalance(f"rates sum to {float(rho.sum())!r}, not 1")
    nu = np.zeros(N) if spec.thresholds is None else np.asarray(spec.thresholds, float)
    if np.any(nu < 0):
        raise ModelError("thresholds must be nonnegative")
    base = simplex(N, rho.sum())
    fields = {i: np.eye(N)[i] - rho for i in range(N)}
    P = base
    for i in range(N):
        if nu[i] > 0:
            P = cut_polytope(P, -np.eye(N)[i], -nu[i])
    for normal, offset in cuts:
        P = cut_polytope(P, normal, offset)
    verts = rho.sum() * np.eye(N)
    kept = {f: v for f, v in fields.items() if f in P.facet_ids}
    labels = {f: f"x{f + 1}" for f in P.facet_ids}
    return PseudoBilliardModel(P, kept, base, fields, base_vertices=verts,
                               labels=labels, kind="standard")


def polygon(vertices):
    V = np.asarray(vertices, float)
    k = len(V)
    if k < 3:
        raise NonConvex("a polygon needs at least three vertices")
    for i in range(k):
        e1, e2 = V[(i + 1) % k] - V[i], V[(i + 2) % k] - V[(i + 1) % k]
        if e1[0] * e2[1] - e1[1] * e2[0] <= TAU_GEOM:
            raise NonConvex("vertices must form a strictly convex counterclockwise polygon")
    hs = []
    for i in range(k):
        e = V[(i + 1) % k] - V[i]
        nrm = np.array([e[1], -e[0]]) / np.linalg.norm(e)
        hs.append((nrm, nrm @ V[i]))
    return ConvexPolytope(hs)


def build_polygon_model(vertices, edge_fields, cuts=(), vertex_labels=None):
    """Polygon billiard; edge ``i`` runs from vertex ``i`` to vertex ``i+1``."""
    V = np.asarray(vertices, float)
    base = polygon(V)
    if len(edge_fields) != len(V):
        raise ModelError("one field per edge is required")
    fields = {i: np.asarray(f, float) for i, f in enumerate(edge_fields)}
    labels = {}
    if vertex_labels:
        labels = {i: vertex_labels[i] + vertex_labels[(i + 1) % len(V)] for i in range(len(V))}
    # validate the uncut model first so outward base fields are reported
    PseudoBilliardModel(base, fields, labels=labels, base_vertices=V)
    P = base
    for normal, offset in cuts:
        P = cut_polytope(P, normal, offset)
    kept = {f: v for f, v in fields.items() if f in P.facet_ids}
    for f in P.facet_ids:
        if f not in labels:
            labels[f] = f"cut{f}"
    return PseudoBilliardModel(P, kept, base, fields, base_vertices=V, labels=labels,
                               kind="polygon", vertex_names=vertex_labels)


def build_server_model(polytope, fields_of_facet, policy, labels=None):
    return SwitchedServerModel(polytope, fields_of_facet, policy, labels=labels)


def inherited_field(model, cut_facet, point, v_in):
    """Field on a cut facet at ``point`` for a particle arriving with ``v_in``.

    The incoming ray is prolonged to the uncut boundary; the field found
    there is returned.
    """
    if not model.is_cut(cut_facet):
        raise ModelError(f"facet {cut_facet} is not a cut facet")
    fid, _ = virtual_hit(model, point, v_in)
    return model.base_fields[fid]


def virtual_hit(model, point, v_in):
    """First hit ``(facet id, point)`` of ``point + t v_in`` with the uncut boundary.

    Nested cuts resolve in one cast: the prolonged ray crosses every
    intermediate cut facet before reaching the uncut boundary.
    """
    B = model.base_polytope
    point = np.asarray(point, float)
    v_in = np.asarray(v_in, float)
    best = None
    for f in B.facet_ids:
        i = B.row(f)
        d = B.A[i] @ v_in
        if d > 1e-14:
            t = (B.b[i] - B.A[i] @ point) / d
            if t >= -B.tol and (best is None or t < best[0]):
                best = (t, f)
    if best is None:
        raise NoVirtualHit("incoming ray never reaches the uncut boundary")
    return best[1], point + best[0] * v_in


def opposite_facet(model, vertex_index):
    """Base facet not containing base vertex ``vertex_index`` (simplex models)."""
    B = model.base_polytope
    w = model.base_vertices[vertex_index]
    away = [f for f in B.facet_ids if B.b[B.row(f)] - B.A[B.row(f)] @ w > B.tol]
    if len(away) != 1:
        raise ModelError("base polytope is not a simplex")
    return away[0]


def vertex_lines(model):
    """Full lines through each base vertex parallel to the opposite facet's field."""
    return [(w, model.base_fields[opposite_facet(model, i)])
            for i, w in enumerate(model.base_vertices)]


@dataclass
class CutValidity:
    valid: bool
    crossed_vertex_lines: list
    advisory: str = ""
    points: dict = field(default_factory=dict)


def check_cut_validity(model, cut_facet):
    """A cut is valid when its relative interior meets exactly one vertex line."""
    P = model.polytope
    i = P.row(cut_facet)
    a, c = P.A[i], P.b[i]
    crossed, points = [], {}
    for k, (w, d) in enumerate(vertex_lines(model)):
        ad = a @ d
        if abs(ad) <= P.tol:
            continue
        p = w + (c - a @ w) / ad * d
        margin = np.delete(P.b - P.A @ p, i)
        if np.all(margin > P.tol):
            crossed.append(k)
            points[k] = p
    if not crossed:
        return CutValidity(True, [], "cut meets no vertex line", points)
    return CutValidity(len(crossed) == 1, crossed, "", points)
