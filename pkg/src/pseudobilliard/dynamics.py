"""Return map, piece Jacobians and orbit drivers."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernel
from .geometry import (TAU_GEOM, OutwardField, SigmaHit, facet_polytope,
                       first_facet_hit)
from .model import NoVirtualHit, inherited_field


class DynamicsError(Exception):
    pass


class DegenerateVertex(DynamicsError):
    """No field available at the landing point re-enters the region."""


class GrazingFlight(DynamicsError):
    pass


class StepTooLarge(DynamicsError):
    pass


@dataclass(frozen=True)
class BoundaryState:
    facet: int
    position: np.ndarray
    field: np.ndarray
    sigma: bool = False


@dataclass(frozen=True)
class ServerState:
    facet: int
    position: np.ndarray
    field_index: int = 0


@dataclass(frozen=True)
class AffineMapPiece:
    """``y = linear @ x + offset`` in the charts of ``source`` and ``target``."""

    linear: np.ndarray
    offset: np.ndarray
    source: int
    target: int
    field: np.ndarray
    ambient: np.ndarray  # I - v a^T / (a.v), acting on ambient vectors

    def __call__(self, y):
        return self.linear @ np.asarray(y) + self.offset

    @property
    def singular_values(self):
        return np.linalg.svd(self.linear, compute_uv=False)


_STATUS = {kernel.OK: "ok", kernel.DEGENERATE: "degenerate_vertex",
           kernel.UNBOUNDED: "error", kernel.NO_VIRTUAL_HIT: "error"}


@dataclass
class OrbitRecord:
    """Orbit of the return map.  Entry ``k`` is the state after ``k+1`` steps."""

    model: object
    initial: BoundaryState
    facets: np.ndarray
    points: np.ndarray
    fields: np.ndarray
    times: np.ndarray
    sigma: np.ndarray
    status: str = "ok"
    message: str = ""
    logs: np.ndarray | None = None
    indices: np.ndarray | None = None  # server orbits: field index per step

    def __len__(self):
        return len(self.facets)

    @property
    def itinerary(self):
        return tuple(int(f) for f in self.facets)

    @property
    def itinerary_string(self):
        return " ".join(self.model.label(f) for f in self.itinerary)

    def state(self, k):
        """State before step ``k`` (``state(0)`` is the initial state)."""
        if k == 0:
            return self.initial
        return BoundaryState(int(self.facets[k - 1]), self.points[k - 1],
                             self.fields[k - 1], bool(self.sigma[k - 1]))

    def piece(self, k):
        s = self.state(k)
        return piece_jacobian(self.model, s.facet, s.field, int(self.facets[k]))

    def pieces(self):
        return [self.piece(k) for k in range(len(self))]


# -- single step ------------------------------------------------------------

def resolve_field(model, fid, point, v_in):
    if model.is_cut(fid):
        return inherited_field(model, fid, point, v_in)
    return model.fields[fid]


def _inward(P, fid, v):
    return P.facet(fid).inward_normal @ v > TAU_GEOM


def _land(model, cur, hit, y, v_in, resolve=None):
    """Pick the facet and departing field at a landing point."""
    P = model.polytope
    resolve = resolve or (lambda f: resolve_field(model, f, y, v_in))
    if not isinstance(hit, SigmaHit):
        v = resolve(hit)
        if not _inward(P, hit, v):
            raise DegenerateVertex(f"field of facet {hit} exits at {y}")
        return hit, v, False
    order = model.tiebreak
    start = order.index(cur) + 1 if cur in order else 0
    for off in range(len(order)):
        c = order[(start + off) % len(order)]
        if c not in hit.facets:
            continue
        v = resolve(c)
        if all(_inward(P, k, v) for k in hit.facets):
            return c, v, True
    raise DegenerateVertex(f"no field re-enters at {y}")


def _check_departure(P, s):
    if not _inward(P, s.facet, s.field):
        raise OutwardField(f"field does not point inward from facet {s.facet}")


def return_step(model, s):
    """One application of the return map, computed in Python."""
    P = model.polytope
    _check_departure(P, s)
    try:
        hit, t, y = first_facet_hit(s.position, s.field, P, exclude=s.facet)
    except OutwardField as exc:
        raise DegenerateVertex(str(exc)) from None
    fid, v, sigma = _land(model, s.facet, hit, y, s.field)
    return BoundaryState(fid, y, np.array(v, float), sigma)


def flight(model, s):
    """``(next state, flight time)``."""
    P = model.polytope
    _check_departure(P, s)
    try:
        hit, t, y = first_facet_hit(s.position, s.field, P, exclude=s.facet)
    except OutwardField as exc:
        raise DegenerateVertex(str(exc)) from None
    fid, v, sigma = _land(model, s.facet, hit, y, s.field)
    return BoundaryState(fid, y, np.array(v, float), sigma), t


def piece_jacobian(model, source, field, target):
    """Affine piece of the return map from ``source`` to ``target`` along ``field``."""
    P = model.polytope
    v = np.asarray(field, float)
    i = P.row(target)
    a, b = P.A[i], P.b[i]
    av = a @ v
    if abs(av) <= TAU_GEOM:
        raise GrazingFlight(f"field is parallel to facet {target}")
    M = np.eye(len(v)) - np.outer(v, a) / av
    Bs, Bt = P.facet_basis(source), P.facet_basis(target)
    os_, ot = P.facet_origin(source), P.facet_origin(target)
    L = Bt.T @ M @ Bs
    c = Bt.T @ (M @ os_ + v * (b / av) - ot)
    return AffineMapPiece(L, c, int(source), int(target), v, M)


def compose(pieces):
    """Linear part and offset of the composition (first piece applied first)."""
    L = np.eye(pieces[0].linear.shape[1])
    c = np.zeros(pieces[0].linear.shape[1])
    for p in pieces:
        L, c = p.linear @ L, p.linear @ c + p.offset
    return L, c


# -- starts -----------------------------------------------------------------

def start_state(model, facet, point, field=None):
    """Boundary state on a facet, using the facet's own field unless one is given."""
    point = np.asarray(point, float)
    if field is None:
        if model.is_cut(facet):
            raise DynamicsError("a start on a cut facet needs an explicit field")
        field = model.fields[facet]
    return BoundaryState(int(facet), point, np.asarray(field, float))


def sample_on_facet(P, fid, rng, size=1):
    if P.dim - 1 == 1:
        length = P.facet_measure(fid)
        u = rng.uniform(0.0, length, size=size)
        return np.array([P.from_chart(fid, [s]) for s in u])
    return facet_polytope(P, fid).sample(rng, size)


def random_start(model, rng, facets=None):
    """Uniform start on the union of the (uncut, by default) facets."""
    P = model.polytope
    if facets is None:
        facets = [f for f in P.facet_ids if not model.is_cut(f)]
    w = np.array([P.facet_measure(f) for f in facets])
    fid = facets[rng.choice(len(facets), p=w / w.sum())]
    x = sample_on_facet(P, fid, rng, 1)[0]
    return start_state(model, fid, x)


# -- orbits -----------------------------------------------------------------

def orbit(model, s0, n, tangent=False, backend=None):
    """Iterate the return map ``n`` times with the compiled kernel (if built).

    With ``tangent=True`` the returned record carries per-step log growth
    factors of an orthonormalised tangent frame in ``logs``.  ``backend``
    (``"cython"`` or ``"python"``) overrides the kernel chosen at import.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    P = model.polytope
    _check_departure(P, s0)
    tb = model.tables
    order = tb["order"]
    dim = P.ambient_dim
    fo = np.zeros(n, dtype=np.int64)
    po = np.zeros((n, dim))
    vo = np.zeros((n, dim))
    to = np.zeros(n)
    so = np.zeros(n, dtype=np.uint8)
    k = P.dim - 1
    if tangent:
        Q = np.ascontiguousarray(P.facet_basis(s0.facet), dtype=float)
        logs = np.zeros((n, k))
    else:
        Q = np.zeros((dim, 1))
        logs = np.zeros((1, 1))
    steps, status = kernel.implementation(backend).run_orbit(
        tb["A"], tb["b"], tb["F"], tb["is_cut"], tb["A0"], tb["b0"], tb["F0"],
        order.index(s0.facet), np.ascontiguousarray(s0.position, dtype=float),
        np.ascontiguousarray(s0.field, dtype=float), int(n), TAU_GEOM,
        fo, po, vo, to, so, Q, logs, bool(tangent))
    ids = np.asarray(order, dtype=np.int64)[fo[:steps]]
    msg = ""
    if status == kernel.NO_VIRTUAL_HIT:
        msg = "incoming ray never reaches the uncut boundary"
    elif status == kernel.UNBOUNDED:
        msg = "no facet ahead of the ray"
    elif status == kernel.DEGENERATE:
        msg = f"no field re-enters after step {steps}"
    return OrbitRecord(model, s0, ids, po[:steps], vo[:steps], to[:steps],
                       so[:steps].astype(bool), _STATUS[status], msg,
                       logs[:steps] if tangent else None)


def orbit_python(model, s0, n):
    """Reference orbit built from :func:`return_step`; slow but independent of the kernels."""
    facets, pts, flds, times, sig = [], [], [], [], []
    s, status, msg = s0, "ok", ""
    for _ in range(n):
        try:
            s, t = flight(model, s)
        except DegenerateVertex as exc:
            status, msg = "degenerate_vertex", str(exc)
            break
        except NoVirtualHit as exc:
            status, msg = "error", str(exc)
            break
        facets.append(s.facet)
        pts.append(s.position)
        flds.append(s.field)
        times.append(t)
        sig.append(s.sigma)
    dim = model.polytope.ambient_dim
    return OrbitRecord(model, s0, np.array(facets, dtype=np.int64),
                       np.array(pts).reshape(-1, dim), np.array(flds).reshape(-1, dim),
                       np.array(times), np.array(sig, dtype=bool), status, msg)


# -- packet (space-discretised) dynamics -------------------------------------

@dataclass
class DiscreteOrbit:
    positions: np.ndarray
    active: np.ndarray  # facet whose field drives the step leading to each position
    collisions: np.ndarray
    period: int | None
    transient: int | None
    coverage: float
    grid: int = 20
    extras: dict = field(default_factory=dict)

    @property
    def periodic(self):
        return self.period is not None


def _grid_coverage(P, X, grid):
    if P.dim != 2:
        return float("nan")
    lo, hi = P._box()
    Y = (X - P.origin) @ P.tangent
    cells = np.floor((Y - lo) / (hi - lo) * grid).astype(int)
    cells = np.clip(cells, 0, grid - 1)
    centres = (np.stack(np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij"), -1)
               .reshape(-1, 2) + 0.5) / grid * (hi - lo) + lo
    inside = P.contains(P.origin + centres @ P.tangent.T, tol=0.0)
    visited = {tuple(c) for c in cells}
    total = int(inside.sum()) or grid * grid
    return min(1.0, len(visited) / total)


def discrete_orbit(model, scheme, x0, n, facet=None, grid=20, quantum=1e-9):
    """Packet dynamics: steps of length ``scheme.step`` along the active field.

    When the boundary along the ray is closer than one step the particle
    jumps to it and takes the field there; landing exactly on it is also a
    collision.  The period is searched over quantised (position, field) states.
    """
    P = model.polytope
    eps = float(scheme.step)
    if eps >= 2 * P.inradius:
        raise StepTooLarge(f"packet step {eps} exceeds the region width {2 * P.inradius}")
    x = np.asarray(x0, float)
    f = P.on_facet(x) if facet is None else facet
    if f is None:
        raise DynamicsError("start point is not on the boundary")
    v = np.asarray(model.fields[f], float)
    speed = np.linalg.norm(v)
    pos = np.empty((n + 1, len(x)))
    act = np.empty(n + 1, dtype=np.int64)
    col = np.zeros(n + 1, dtype=bool)
    pos[0], act[0], col[0] = x, f, True

    def key(x, f):
        return tuple(np.round(x / quantum).astype(np.int64).tolist()) + (int(f),)

    seen = {key(x, f): 0}
    period = transient = None
    for k in range(1, n + 1):
        hit, t, y = first_facet_hit(x, v, P)
        dist = t * speed
        if dist <= eps + TAU_GEOM:
            g, vn, _ = _land(model, f, hit, y, v)
            x, f, v = y, g, np.asarray(vn, float)
            speed = np.linalg.norm(v)
            col[k] = True
        else:
            x = x + (eps / speed) * v
        pos[k], act[k] = x, f
        kk = key(x, f)
        if kk in seen:
            transient = seen[kk]
            period = k - transient
            pos, act, col = pos[:k + 1], act[:k + 1], col[:k + 1]
            break
        seen[kk] = k
    cov = _grid_coverage(P, pos, grid)
    return DiscreteOrbit(pos, act, col, period, transient, cov, grid)


# -- time-sampled flow --------------------------------------------------------

def time_sampled_orbit(model, s0, dt, n, max_substeps=10**7):
    """Sample the flow at a fixed time step and clamp at the boundary.

    Sample ``j`` of a flight is ``x_dep + (j dt) v``; once a sample leaves
    the region the crossing is clamped onto the boundary segment between
    the departure point and that sample.
    """
    P = model.polytope
    A, b = P.A, P.b
    _check_departure(P, s0)
    x, v, f = np.array(s0.position, float), np.array(s0.field, float), s0.facet
    facets, pts, flds, times, sig = [], [], [], [], []
    status, msg = "ok", ""
    sub = 0
    for _ in range(n):
        cur_row = P.row(f)
        j = 0
        while True:
            j += 1
            viol = A @ (x + (j * dt) * v) - b
            viol[cur_row] = -math.inf
            if np.any(viol > 0.0):
                break
            sub += 1
            if sub > max_substeps:
                raise DynamicsError("too many sub-steps")
        try:
            hit, t, y = first_facet_hit(x, v, P, exclude=f)
            g, vn, sg = _land(model, f, hit, y, v)
        except (DegenerateVertex, OutwardField) as exc:
            status, msg = "degenerate_vertex", str(exc)
            break
        if not (j - 1) * dt <= t <= j * dt + TAU_GEOM:
            raise DynamicsError("clamped crossing lies outside the sampled interval")
        facets.append(g)
        pts.append(y)
        flds.append(np.asarray(vn, float))
        times.append(t)
        sig.append(sg)
        x, v, f = y, np.asarray(vn, float), g
    dim = P.ambient_dim
    return OrbitRecord(model, s0, np.array(facets, dtype=np.int64),
                       np.array(pts).reshape(-1, dim), np.array(flds).reshape(-1, dim),
                       np.array(times), np.array(sig, dtype=bool), status, msg)


# -- switched server ----------------------------------------------------------

def server_draws(seed, n):
    """One uniform per step from a counter-based generator."""
    return np.random.Generator(np.random.Philox(int(seed))).random(n)


def server_orbit(model, s0, n, seed=None, draws=None, backend=None):
    """Orbit of the skew product (position, field index)."""
    P = model.polytope
    tb = model.tables
    order = tb["order"]
    k0 = int(s0.field_index)
    if not _inward(P, s0.facet, model.fields_of_facet[s0.facet][k0]):
        raise OutwardField("start field does not point inward")
    stochastic = model.policy.kind == "stochastic"
    if draws is None:
        draws = server_draws(model.policy.seed if seed is None else seed, n) if stochastic \
            else np.zeros(max(n, 1))
    dim = P.ambient_dim
    fo = np.zeros(n, dtype=np.int64)
    po = np.zeros((n, dim))
    io = np.zeros(n, dtype=np.int64)
    to = np.zeros(n)
    so = np.zeros(n, dtype=np.uint8)
    steps, status = kernel.implementation(backend).run_server(
        tb["A"], tb["b"], tb["FS"], tb["cum"], stochastic,
        np.ascontiguousarray(draws, dtype=float), order.index(s0.facet),
        np.ascontiguousarray(s0.position, dtype=float), k0, int(n), TAU_GEOM,
        fo, po, io, to, so)
    ids = np.asarray(order, dtype=np.int64)[fo[:steps]]
    FS = tb["FS"]
    fields = FS[fo[:steps], io[:steps]] if steps else np.zeros((0, dim))
    init = BoundaryState(s0.facet, np.asarray(s0.position, float),
                         model.fields_of_facet[s0.facet][k0])
    msg = "" if status == kernel.OK else f"terminated after {steps} steps"
    return OrbitRecord(model, init, ids, po[:steps], fields, to[:steps],
                       so[:steps].astype(bool), _STATUS[status], msg,
                       indices=io[:steps])


def random_server_start(model, rng):
    P = model.polytope
    fids = list(P.facet_ids)
    w = np.array([P.facet_measure(f) for f in fids])
    fid = fids[rng.choice(len(fids), p=w / w.sum())]
    x = sample_on_facet(P, fid, rng, 1)[0]
    return ServerState(fid, x, int(rng.integers(model.N)))


__all__ = [
    "AffineMapPiece", "BoundaryState", "DegenerateVertex", "DiscreteOrbit", "DynamicsError",
    "GrazingFlight", "OrbitRecord", "ServerState", "StepTooLarge",
    "compose", "discrete_orbit", "flight", "orbit", "orbit_python", "piece_jacobian",
    "random_server_start", "random_start", "resolve_field", "sample_on_facet", "return_step", "server_draws",
    "server_orbit", "start_state", "time_sampled_orbit",
]
