"""Convex polytopes in half-space form, boundary ray casting and cutting.

A polytope lives inside an affine subspace (the hull) cut out by zero or more
equality constraints.  Half-space normals are projected into the hull and
normalised, so every distance and hit time is measured inside the hull.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

TAU_GEOM = 1e-9
_DENOM_EPS = 1e-14


class GeometryError(Exception):
    pass


class OutwardField(GeometryError):
    """Velocity leaves the region immediately."""


class UnboundedFlight(GeometryError):
    pass


class OffHull(GeometryError):
    pass


class EmptyPolytope(GeometryError):
    pass


@dataclass(frozen=True)
class Halfspace:
    """``normal . x <= offset`` with a unit normal lying in the hull."""

    normal: np.ndarray
    offset: float
    id: int
    is_cut: bool = False


@dataclass(frozen=True)
class Facet:
    id: int
    parent_halfspace: int
    inward_normal: np.ndarray
    is_cut: bool = False
    # id of the uncut facet this one descends from; None for cut facets,
    # whose field is resolved pointwise
    ancestry: int | None = None


@dataclass(frozen=True)
class SigmaHit:
    point: np.ndarray
    facets: frozenset

    def __post_init__(self):
        if len(self.facets) < 2:
            raise ValueError("a SigmaHit needs at least two facets")


def _null_space(M, n):
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(M)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
    return vt[rank:].T.copy()


def _canonical_sign(u):
    k = np.flatnonzero(np.abs(u) > 1e-12)
    return -u if k.size and u[k[0]] < 0 else u


class ConvexPolytope:
    """Bounded convex polytope ``{x : E x = e, a_i . x <= b_i}``.

    ``halfspaces`` is a sequence of ``(normal, offset)`` pairs or
    :class:`Halfspace` objects; ``affine_hull`` is one ``(normal, offset)``
    equality or a list of them.  Instances are immutable once built.
    """

    def __init__(self, halfspaces, affine_hull=None, *, ids=None, cut_ids=(),
                 tol=TAU_GEOM, check=True):
        if affine_hull is None:
            eqs = []
        elif len(affine_hull) == 2 and np.isscalar(affine_hull[1]) or (
                len(affine_hull) == 2 and isinstance(affine_hull[1], np.ndarray)
                and affine_hull[1].ndim == 0):
            eqs = [affine_hull]
        else:
            eqs = list(affine_hull)
        first = halfspaces[0]
        n = len(first.normal) if isinstance(first, Halfspace) else len(first[0])
        self.ambient_dim = n
        self.tol = tol
        self.eq_normals = np.array([np.asarray(a, float) for a, _ in eqs]).reshape(len(eqs), n)
        self.eq_offsets = np.array([float(c) for _, c in eqs])
        self.tangent = _null_space(self.eq_normals, n)
        self.dim = self.tangent.shape[1]
        if len(eqs):
            self.origin = np.linalg.lstsq(self.eq_normals, self.eq_offsets, rcond=None)[0]
        else:
            self.origin = np.zeros(n)
        proj = self.tangent @ self.tangent.T

        cut_ids = set(cut_ids)
        hs = []
        for i, h in enumerate(halfspaces):
            if isinstance(h, Halfspace):
                hs.append(h)
                continue
            a, c = np.asarray(h[0], float), float(h[1])
            hid = i if ids is None else ids[i]
            ap = proj @ a
            c = c - a @ self.origin + ap @ self.origin
            norm = np.linalg.norm(ap)
            if norm < 1e-12:
                if c < -tol:
                    raise EmptyPolytope("constraint excludes the whole hull")
                continue
            hs.append(Halfspace(ap / norm, c / norm, hid, hid in cut_ids))
        self.halfspaces = tuple(hs)
        self.A = np.array([h.normal for h in hs])
        self.b = np.array([h.offset for h in hs])
        if check:
            self._check()

    # -- construction checks -------------------------------------------------
    def _chebyshev(self):
        n = self.ambient_dim
        c = np.zeros(n + 1)
        c[-1] = -1.0
        A_ub = np.hstack([self.A, np.ones((len(self.b), 1))])
        A_eq = np.hstack([self.eq_normals, np.zeros((len(self.eq_offsets), 1))]) if len(self.eq_offsets) else None
        res = linprog(c, A_ub=A_ub, b_ub=self.b, A_eq=A_eq,
                      b_eq=self.eq_offsets if A_eq is not None else None,
                      bounds=[(None, None)] * n + [(None, 10.0 * (1 + np.abs(self.b).max()))],
                      method="highs")
        if res.status != 0:
            raise EmptyPolytope("no feasible point")
        return res.x[:n], res.x[-1]

    def _check(self):
        center, r = self._chebyshev()
        if r <= self.tol:
            raise EmptyPolytope("empty relative interior")
        self._center, self._inradius = center, r
        for d in np.vstack([self.tangent.T, -self.tangent.T]):
            res = linprog(-d, A_ub=self.A, b_ub=self.b,
                          A_eq=self.eq_normals if len(self.eq_offsets) else None,
                          b_eq=self.eq_offsets if len(self.eq_offsets) else None,
                          bounds=[(None, None)] * self.ambient_dim, method="highs")
            if res.status == 3:
                raise UnboundedFlight("polytope is unbounded")

    @property
    def inradius(self):
        if not hasattr(self, "_inradius"):
            self._check()
        return self._inradius

    @property
    def center(self):
        if not hasattr(self, "_center"):
            self._check()
        return self._center

    @property
    def affine_hull(self):
        if not len(self.eq_offsets):
            return None
        return self.eq_normals[0], self.eq_offsets[0]

    # -- combinatorics -------------------------------------------------------
    @cached_property
    def vertices(self):
        n = self.ambient_dim
        found = []
        for combo in itertools.combinations(range(len(self.b)), self.dim):
            M = np.vstack([self.eq_normals, self.A[list(combo)]])
            rhs = np.concatenate([self.eq_offsets, self.b[list(combo)]])
            if M.shape[0] != n or abs(np.linalg.det(M)) < 1e-12:
                continue
            x = np.linalg.solve(M, rhs)
            if np.all(self.A @ x <= self.b + self.tol) and not any(
                    np.linalg.norm(x - y) < 10 * self.tol for y in found):
                found.append(x)
        return np.array(found)

    @cached_property
    def _facet_index(self):
        out = {}
        V = self.vertices
        for i, h in enumerate(self.halfspaces):
            on = V[np.abs(V @ h.normal - h.offset) <= 10 * self.tol]
            if len(on) < self.dim:
                continue
            if np.linalg.matrix_rank(on[1:] - on[0], tol=1e-9) != self.dim - 1:
                continue
            if any(np.allclose(self.halfspaces[j].normal, h.normal) and
                   abs(self.halfspaces[j].offset - h.offset) < self.tol for j in out.values()):
                continue
            out[h.id] = i
        return out

    @cached_property
    def facets(self):
        res = []
        for fid, i in self._facet_index.items():
            h = self.halfspaces[i]
            res.append(Facet(fid, i, -h.normal, h.is_cut, None if h.is_cut else fid))
        return tuple(res)

    @property
    def facet_ids(self):
        return tuple(f.id for f in self.facets)

    def facet(self, fid):
        return self.facets[self.facet_ids.index(fid)]

    def row(self, fid):
        """Index of facet ``fid`` in ``A``/``b``."""
        return self._facet_index[fid]

    def facet_vertices(self, fid):
        h = self.halfspaces[self.row(fid)]
        V = self.vertices
        return V[np.abs(V @ h.normal - h.offset) <= 10 * self.tol]

    def facet_basis(self, fid):
        """Orthonormal basis (columns) of the tangent space of a facet."""
        a = self.halfspaces[self.row(fid)].normal
        B = _null_space(np.vstack([self.eq_normals, a]), self.ambient_dim)
        if B.shape[1] == 1:
            B[:, 0] = _canonical_sign(B[:, 0])
        return B

    def facet_origin(self, fid):
        """Chart origin: facet vertex with the smallest coordinates in the chart basis."""
        V, B = self.facet_vertices(fid), self.facet_basis(fid)
        key = V @ B
        return V[np.lexsort(key.T[::-1])[0]]

    def to_chart(self, fid, x):
        return (np.asarray(x) - self.facet_origin(fid)) @ self.facet_basis(fid)

    def from_chart(self, fid, y):
        return self.facet_origin(fid) + np.asarray(y) @ self.facet_basis(fid).T

    def facet_measure(self, fid):
        """Length/area of a facet, computed in its chart."""
        Y = self.to_chart(fid, self.facet_vertices(fid))
        if Y.shape[1] == 1:
            return float(Y.max() - Y.min())
        if Y.shape[1] == 0:
            return 1.0
        from scipy.spatial import ConvexHull
        return float(ConvexHull(Y).volume)

    @property
    def next_id(self):
        return max(h.id for h in self.halfspaces) + 1

    def contains(self, x, tol=None):
        tol = self.tol if tol is None else tol
        x = np.asarray(x, float)
        ok = np.all(x @ self.A.T <= self.b + tol, axis=-1)
        if len(self.eq_offsets):
            # equalities always get the geometric tolerance; sampled points
            # sit on the hull only up to round-off
            ok &= np.all(np.abs(x @ self.eq_normals.T - self.eq_offsets) <= max(tol, self.tol),
                         axis=-1)
        return ok

    def on_facet(self, x, tol=None):
        """Id of the facet whose plane contains ``x`` (closest one), or None."""
        tol = self.tol if tol is None else tol
        gaps = np.abs(self.b - self.A @ x)
        best = None
        for fid, i in self._facet_index.items():
            if gaps[i] <= tol and (best is None or gaps[i] < gaps[self.row(best)]):
                best = fid
        return best

    # -- sampling ------------------------------------------------------------
    def _box(self):
        Y = (self.vertices - self.origin) @ self.tangent
        return Y.min(axis=0), Y.max(axis=0)

    def sample(self, rng, size):
        """Uniform points by rejection from the bounding box in hull coordinates."""
        lo, hi = self._box()
        out = []
        got = 0
        while got < size:
            Y = rng.uniform(lo, hi, size=(max(2 * (size - got), 64), self.dim))
            X = self.origin + Y @ self.tangent.T
            X = X[self.contains(X, tol=0.0)]
            out.append(X)
            got += len(X)
        return np.vstack(out)[:size]

    def volume_mc(self, rng, samples=100_000):
        """Monte Carlo volume in hull coordinates: (estimate, standard error)."""
        lo, hi = self._box()
        Y = rng.uniform(lo, hi, size=(samples, self.dim))
        inside = self.contains(self.origin + Y @ self.tangent.T, tol=0.0)
        box = float(np.prod(hi - lo))
        p = inside.mean()
        return box * p, box * np.sqrt(p * (1 - p) / samples)

    def with_halfspaces(self, halfspaces, **kw):
        eqs = list(zip(self.eq_normals, self.eq_offsets))
        return ConvexPolytope(list(halfspaces), eqs or None, tol=self.tol, **kw)


def first_facet_hit(x, v, P, exclude=None):
    """Cast the ray ``x + t v`` to the boundary of ``P``.

    Returns ``(target, t, y)`` where ``target`` is a facet id or a
    :class:`SigmaHit` when two or more facets are reached within
    ``TAU_GEOM`` of the same time.
    """
    x = np.asarray(x, float)
    v = np.asarray(v, float)
    tau = P.tol
    if exclude is not None:
        if P.A[P.row(exclude)] @ v >= -tau:
            raise OutwardField(f"velocity leaves through facet {exclude}")
    if len(P.eq_offsets) and np.any(np.abs(P.eq_normals @ v) > tau):
        raise OffHull("velocity is not parallel to the affine hull")
    hits = []
    for fid, i in P._facet_index.items():
        if fid == exclude:
            continue
        d = P.A[i] @ v
        if d > _DENOM_EPS:
            hits.append(((P.b[i] - P.A[i] @ x) / d, fid))
    if not hits:
        raise UnboundedFlight("no facet ahead of the ray")
    hits.sort()
    t = hits[0][0]
    if t <= 0.0:
        raise OutwardField(f"velocity leaves through facet {hits[0][1]}")
    y = x + t * v
    tied = [fid for s, fid in hits if s - t < tau]
    if len(tied) > 1:
        return SigmaHit(y, frozenset(tied)), t, y
    return hits[0][1], t, y


def cut_polytope(P, normal, offset):
    """Intersect ``P`` with ``normal . x <= offset``.

    The new facet (if the plane meets the interior) gets a fresh id and is
    flagged as cut; surviving facets keep their ids, vanished ones are dropped.
    """
    normal = np.asarray(normal, float)
    V = P.vertices
    if np.all(V @ normal <= offset + P.tol * np.linalg.norm(normal)):
        return P
    new_id = P.next_id
    try:
        Q = P.with_halfspaces(list(P.halfspaces) + [(normal, offset)], ids=[None] * len(P.halfspaces) + [new_id],
                              cut_ids={new_id})
    except EmptyPolytope:
        raise EmptyPolytope("cut leaves an empty polytope") from None
    keep = [Q.halfspaces[i] for i in sorted(Q._facet_index.values())]
    return P.with_halfspaces(keep)


def facet_polytope(P, fid, extra=()):
    """A facet of ``P`` as a polytope of its own, optionally restricted further."""
    i = P.row(fid)
    h = P.halfspaces[i]
    eqs = list(zip(P.eq_normals, P.eq_offsets)) + [(h.normal, h.offset)]
    hs = [(g.normal, g.offset) for j, g in enumerate(P.halfspaces) if j != i]
    return ConvexPolytope(hs + [tuple(e) for e in extra], eqs, tol=P.tol, check=False)
