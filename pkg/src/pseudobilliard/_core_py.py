"""Pure-Python orbit kernels; same contract as the compiled ``_core`` module.

Facets are addressed by row index; the row order is the cyclic tie-break
order.  ``A`` holds unit outward normals, ``b`` offsets.  Cut facets
(``is_cut[j] != 0``) take their field from the first hit of the incoming ray
with the uncut base polytope ``(A0, b0, F0)``.
"""
import math

import numpy as np

OK = 0
DEGENERATE = 1
UNBOUNDED = 2
NO_VIRTUAL_HIT = 3

_EPS = 1e-14


def _virtual_field(A0, b0, F0, y, v, tau):
    d = A0 @ v
    best, arg = math.inf, -1
    for j in range(len(b0)):
        if d[j] > _EPS:
            t = (b0[j] - A0[j] @ y) / d[j]
            if -tau <= t < best:
                best, arg = t, j
    if arg < 0:
        return None
    return F0[arg]


def _cast(A, b, x, v, cur):
    d = A @ v
    m = len(b)
    ts = np.full(m, math.inf)
    for j in range(m):
        if j != cur and d[j] > _EPS:
            ts[j] = (b[j] - A[j] @ x) / d[j]
    return ts


def run_orbit(A, b, F, is_cut, A0, b0, F0, facet, x0, v0, nsteps, tau,
              facets_out, points_out, fields_out, times_out, sigma_out,
              tangent, logs_out, use_tangent):
    """Iterate the return map; returns ``(steps_done, status)``."""
    m = len(b)
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    cur = int(facet)
    Q = np.array(tangent, dtype=float) if use_tangent else None

    def resolve(g, y, vin):
        if is_cut[g]:
            return _virtual_field(A0, b0, F0, y, vin, tau)
        return F[g]

    for step in range(nsteps):
        ts = _cast(A, b, x, v, cur)
        g = int(np.argmin(ts))
        t = ts[g]
        if t == math.inf:
            return step, UNBOUNDED
        if t <= 0.0:
            return step, DEGENERATE
        y = x + t * v
        tied = np.flatnonzero(ts - t < tau)
        sigma = len(tied) > 1
        if not sigma:
            vn = resolve(g, y, v)
            if vn is None:
                return step, NO_VIRTUAL_HIT
            if A[g] @ vn >= -tau:
                return step, DEGENERATE
        else:
            tied_set = set(tied.tolist())
            g = -1
            for off in range(1, m + 1):
                c = (cur + off) % m
                if c not in tied_set:
                    continue
                cand = resolve(c, y, v)
                if cand is None:
                    return step, NO_VIRTUAL_HIT
                if all(A[k] @ cand < -tau for k in tied):
                    g, vn = c, cand
                    break
            if g < 0:
                return step, DEGENERATE
        if use_tangent:
            a = A[g]
            Q = Q - np.outer(v, (a @ Q) / (a @ v))
            for c in range(Q.shape[1]):
                for p in range(c):
                    Q[:, c] -= (Q[:, p] @ Q[:, c]) * Q[:, p]
                nrm = math.sqrt(Q[:, c] @ Q[:, c])
                logs_out[step, c] = math.log(nrm)
                Q[:, c] /= nrm
        facets_out[step] = g
        points_out[step] = y
        fields_out[step] = vn
        times_out[step] = t
        sigma_out[step] = sigma
        x = y
        v = np.array(vn, dtype=float)
        cur = g
    if use_tangent:
        tangent[...] = Q
    return nsteps, OK


def run_server(A, b, FS, cum, stochastic, draws, facet, x0, k0, nsteps, tau,
               facets_out, points_out, index_out, times_out, sigma_out):
    """Switched-server orbit; field index chosen per collision by the policy.

    ``FS[j, k]`` is field ``k`` on facet ``j``; ``cum[j]`` the cumulative
    choice probabilities on facet ``j``.  Step ``s`` consumes ``draws[s]``.
    """
    m, N = FS.shape[0], FS.shape[1]
    x = np.array(x0, dtype=float)
    cur, k = int(facet), int(k0)
    v = FS[cur, k]

    def choose(g, step):
        if not stochastic:
            return (k + 1) % N
        u = draws[step]
        for i in range(N):
            if u < cum[g, i]:
                return i
        return N - 1

    for step in range(nsteps):
        ts = _cast(A, b, x, v, cur)
        g = int(np.argmin(ts))
        t = ts[g]
        if t == math.inf:
            return step, UNBOUNDED
        if t <= 0.0:
            return step, DEGENERATE
        y = x + t * v
        tied = np.flatnonzero(ts - t < tau)
        sigma = len(tied) > 1
        if not sigma:
            kn = choose(g, step)
            if A[g] @ FS[g, kn] >= -tau:
                return step, DEGENERATE
        else:
            tied_set = set(tied.tolist())
            g = -1
            for off in range(1, m + 1):
                c = (cur + off) % m
                if c not in tied_set:
                    continue
                kc = choose(c, step)
                if all(A[j] @ FS[c, kc] < -tau for j in tied):
                    g, kn = c, kc
                    break
            if g < 0:
                return step, DEGENERATE
        facets_out[step] = g
        points_out[step] = y
        index_out[step] = kn
        times_out[step] = t
        sigma_out[step] = sigma
        x, cur, k = y, g, kn
        v = FS[cur, k]
    return nsteps, OK
