# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled orbit kernels.  Contract identical to ``_core_py``."""
from libc.math cimport log, sqrt, INFINITY
from libc.stdlib cimport malloc, free

cdef double EPS = 1e-14

cdef enum:
    OK = 0
    DEGENERATE = 1
    UNBOUNDED = 2
    NO_VIRTUAL_HIT = 3


cdef inline double _dot(const double[:, ::1] M, Py_ssize_t row, const double* v, Py_ssize_t n) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        s += M[row, i] * v[i]
    return s


cdef Py_ssize_t _virtual(const double[:, ::1] A0, const double[::1] b0, const double* y,
                         const double* v, Py_ssize_t n, double tau) nogil:
    cdef Py_ssize_t j, arg = -1
    cdef double d, t, best = INFINITY
    for j in range(A0.shape[0]):
        d = _dot(A0, j, v, n)
        if d > EPS:
            t = (b0[j] - _dot(A0, j, y, n)) / d
            if t >= -tau and t < best:
                best = t
                arg = j
    return arg


cdef Py_ssize_t _cast(const double[:, ::1] A, const double[::1] b, const double* x, const double* v,
                      Py_ssize_t n, Py_ssize_t cur, double* ts) nogil:
    cdef Py_ssize_t j, g = -1
    cdef double d, best = INFINITY
    for j in range(A.shape[0]):
        ts[j] = INFINITY
        if j == cur:
            continue
        d = _dot(A, j, v, n)
        if d > EPS:
            ts[j] = (b[j] - _dot(A, j, x, n)) / d
            if ts[j] < best:
                best = ts[j]
                g = j
    return g


cdef inline Py_ssize_t _choose(const double[:, ::1] cum, bint stochastic, const double[::1] draws,
                               Py_ssize_t g, Py_ssize_t step, Py_ssize_t k, Py_ssize_t N) nogil:
    cdef Py_ssize_t i
    cdef double u
    if not stochastic:
        return (k + 1) % N
    u = draws[step]
    for i in range(N):
        if u < cum[g, i]:
            return i
    return N - 1


def run_orbit(const double[:, ::1] A, const double[::1] b, const double[:, ::1] F,
              const unsigned char[::1] is_cut, const double[:, ::1] A0, const double[::1] b0,
              const double[:, ::1] F0, Py_ssize_t facet, const double[::1] x0, const double[::1] v0,
              Py_ssize_t nsteps, double tau,
              long long[::1] facets_out, double[:, ::1] points_out, double[:, ::1] fields_out,
              double[::1] times_out, unsigned char[::1] sigma_out,
              double[:, ::1] tangent, double[:, ::1] logs_out, bint use_tangent):
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1], kdim = tangent.shape[1]
    cdef Py_ssize_t step, i, j, c, p, off, g, cur = facet, ntied, src
    cdef double t, av, r, nrm
    cdef int status = OK
    cdef bint sigma, ok
    cdef double* x = <double*> malloc(n * sizeof(double))
    cdef double* v = <double*> malloc(n * sizeof(double))
    cdef double* y = <double*> malloc(n * sizeof(double))
    cdef double* vn = <double*> malloc(n * sizeof(double))
    cdef double* ts = <double*> malloc(m * sizeof(double))
    for i in range(n):
        x[i] = x0[i]
        v[i] = v0[i]
    with nogil:
        step = 0
        while step < nsteps:
            g = _cast(A, b, x, v, n, cur, ts)
            if g < 0:
                status = UNBOUNDED
                break
            t = ts[g]
            if t <= 0.0:
                status = DEGENERATE
                break
            for i in range(n):
                y[i] = x[i] + t * v[i]
            ntied = 0
            for j in range(m):
                if ts[j] - t < tau:
                    ntied += 1
            sigma = ntied > 1
            if not sigma:
                if is_cut[g]:
                    src = _virtual(A0, b0, y, v, n, tau)
                    if src < 0:
                        status = NO_VIRTUAL_HIT
                        break
                    for i in range(n):
                        vn[i] = F0[src, i]
                else:
                    for i in range(n):
                        vn[i] = F[g, i]
                if _dot(A, g, vn, n) >= -tau:
                    status = DEGENERATE
                    break
            else:
                g = -1
                for off in range(1, m + 1):
                    c = (cur + off) % m
                    if ts[c] - t >= tau:
                        continue
                    if is_cut[c]:
                        src = _virtual(A0, b0, y, v, n, tau)
                        if src < 0:
                            status = NO_VIRTUAL_HIT
                            break
                        for i in range(n):
                            vn[i] = F0[src, i]
                    else:
                        for i in range(n):
                            vn[i] = F[c, i]
                    ok = True
                    for j in range(m):
                        if ts[j] - t < tau and _dot(A, j, vn, n) >= -tau:
                            ok = False
                            break
                    if ok:
                        g = c
                        break
                if status != OK:
                    break
                if g < 0:
                    status = DEGENERATE
                    break
            if use_tangent:
                av = _dot(A, g, v, n)
                for c in range(kdim):
                    r = 0.0
                    for i in range(n):
                        r += A[g, i] * tangent[i, c]
                    r = r / av
                    for i in range(n):
                        tangent[i, c] -= v[i] * r
                for c in range(kdim):
                    for p in range(c):
                        r = 0.0
                        for i in range(n):
                            r += tangent[i, p] * tangent[i, c]
                        for i in range(n):
                            tangent[i, c] -= r * tangent[i, p]
                    nrm = 0.0
                    for i in range(n):
                        nrm += tangent[i, c] * tangent[i, c]
                    nrm = sqrt(nrm)
                    logs_out[step, c] = log(nrm)
                    for i in range(n):
                        tangent[i, c] /= nrm
            facets_out[step] = g
            times_out[step] = t
            sigma_out[step] = sigma
            for i in range(n):
                points_out[step, i] = y[i]
                fields_out[step, i] = vn[i]
                x[i] = y[i]
                v[i] = vn[i]
            cur = g
            step += 1
    free(x); free(v); free(y); free(vn); free(ts)
    return step, status


def run_server(const double[:, ::1] A, const double[::1] b, const double[:, :, ::1] FS,
               const double[:, ::1] cum, bint stochastic, const double[::1] draws,
               Py_ssize_t facet, const double[::1] x0, Py_ssize_t k0, Py_ssize_t nsteps, double tau,
               long long[::1] facets_out, double[:, ::1] points_out, long long[::1] index_out,
               double[::1] times_out, unsigned char[::1] sigma_out):
    cdef Py_ssize_t m = A.shape[0], n = A.shape[1], N = FS.shape[1]
    cdef Py_ssize_t step, i, j, c, off, g, cur = facet, k = k0, kn, kc, ntied
    cdef double t, u
    cdef int status = OK
    cdef bint sigma, ok
    cdef double* x = <double*> malloc(n * sizeof(double))
    cdef double* v = <double*> malloc(n * sizeof(double))
    cdef double* y = <double*> malloc(n * sizeof(double))
    cdef double* ts = <double*> malloc(m * sizeof(double))
    cdef double* fv = <double*> malloc(n * sizeof(double))
    for i in range(n):
        x[i] = x0[i]
        v[i] = FS[cur, k, i]
    with nogil:
        step = 0
        while step < nsteps:
            g = _cast(A, b, x, v, n, cur, ts)
            if g < 0:
                status = UNBOUNDED
                break
            t = ts[g]
            if t <= 0.0:
                status = DEGENERATE
                break
            for i in range(n):
                y[i] = x[i] + t * v[i]
            ntied = 0
            for j in range(m):
                if ts[j] - t < tau:
                    ntied += 1
            sigma = ntied > 1
            if not sigma:
                kn = _choose(cum, stochastic, draws, g, step, k, N)
                for i in range(n):
                    fv[i] = FS[g, kn, i]
                if _dot(A, g, fv, n) >= -tau:
                    status = DEGENERATE
                    break
            else:
                g = -1
                for off in range(1, m + 1):
                    c = (cur + off) % m
                    if ts[c] - t >= tau:
                        continue
                    kc = _choose(cum, stochastic, draws, c, step, k, N)
                    for i in range(n):
                        fv[i] = FS[c, kc, i]
                    ok = True
                    for j in range(m):
                        if ts[j] - t < tau and _dot(A, j, fv, n) >= -tau:
                            ok = False
                            break
                    if ok:
                        g = c
                        kn = kc
                        break
                if g < 0:
                    status = DEGENERATE
                    break
            facets_out[step] = g
            index_out[step] = kn
            times_out[step] = t
            sigma_out[step] = sigma
            for i in range(n):
                points_out[step, i] = y[i]
                x[i] = y[i]
                v[i] = FS[g, kn, i]
            cur = g
            k = kn
            step += 1
    free(x); free(v); free(y); free(ts); free(fv)
    return step, status
