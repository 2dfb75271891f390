# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: Jacobi sweeps, ordering projection, PDHG blocks.

Every function here has a pure-numpy twin in ``_pykernels.py`` with the
same signature and semantics.
"""

import numpy as np

from libc.math cimport sqrt, fabs, copysign
from libc.stdlib cimport qsort

cdef enum:
    C_NORM_FROBENIUS = 0
    C_NORM_MAX = 1
    C_MODE_CONSTRAINED = 0
    C_MODE_DISTANCE = 1

NORM_FROBENIUS = C_NORM_FROBENIUS
NORM_MAX = C_NORM_MAX
MODE_CONSTRAINED = C_MODE_CONSTRAINED
MODE_DISTANCE = C_MODE_DISTANCE


cdef double _offnorm(double[:, ::1] A) noexcept nogil:
    cdef Py_ssize_t n = A.shape[0], i, j
    cdef double s = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                s += A[i, j] * A[i, j]
    return sqrt(s)


def jacobi_eigh(a, double tol=1e-12, int max_sweeps=100):
    """Cyclic Jacobi eigenvalue iteration (see ``_pykernels.jacobi_eigh``)."""
    cdef double[:, ::1] A = np.array(a, dtype=np.float64, order="C", copy=True)
    cdef Py_ssize_t n = A.shape[0]
    Vnp = np.eye(n)
    cdef double[:, ::1] V = Vnp
    cdef Py_ssize_t p, q, k
    cdef double fro = 0.0, off, thresh, apq, theta, t, c, s, x, y
    cdef int sweeps = 0
    for p in range(n):
        for q in range(n):
            fro += A[p, q] * A[p, q]
    fro = sqrt(fro)
    off = _offnorm(A)
    thresh = tol * (fro if fro < off else off)
    with nogil:
        while off > thresh and sweeps < max_sweeps:
            sweeps += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if apq == 0.0:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if fabs(theta) > 1e150:
                        t = 0.5 / theta
                    else:
                        t = copysign(1.0, theta) / (fabs(theta) + sqrt(theta * theta + 1.0))
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(n):
                        x = A[k, p]
                        y = A[k, q]
                        A[k, p] = c * x - s * y
                        A[k, q] = s * x + c * y
                    for k in range(n):
                        x = A[p, k]
                        y = A[q, k]
                        A[p, k] = c * x - s * y
                        A[q, k] = s * x + c * y
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for k in range(n):
                        x = V[k, p]
                        y = V[k, q]
                        V[k, p] = c * x - s * y
                        V[k, q] = s * x + c * y
            off = _offnorm(A)
    w = np.array([A[k, k] for k in range(n)])
    return w, Vnp, sweeps, off


cdef void _pava_nonincreasing(double* g, Py_ssize_t cnt, double* vals, Py_ssize_t* wts) noexcept nogil:
    cdef Py_ssize_t t, top = -1, pos, p, r, w
    for t in range(cnt):
        top += 1
        vals[top] = g[t]
        wts[top] = 1
        while top > 0 and vals[top - 1] < vals[top]:
            w = wts[top - 1] + wts[top]
            vals[top - 1] = (vals[top - 1] * wts[top - 1] + vals[top] * wts[top]) / w
            wts[top - 1] = w
            top -= 1
    pos = 0
    for p in range(top + 1):
        for r in range(wts[p]):
            g[pos] = vals[p]
            pos += 1


cdef void _project_ordering(const double* beta, double* out, Py_ssize_t n, Py_ssize_t eta,
                            double eps2, bint anchor, double* g, double* vals,
                            Py_ssize_t* wts) noexcept nogil:
    cdef Py_ssize_t start, j, length, last, cnt, nchains
    cdef bint anchored
    nchains = eta if eta < n else n
    for start in range(nchains):
        length = (n - 1 - start) // eta + 1
        last = length - 1
        for j in range(length):
            g[j] = beta[start + j * eta] - (last - j) * eps2
        anchored = anchor and (start + last * eta == n - 1)
        cnt = last if anchored else length
        if cnt > 0:
            _pava_nonincreasing(g, cnt, vals, wts)
        if anchored:
            for j in range(last):
                if g[j] < 0.0:
                    g[j] = 0.0
            g[last] = 0.0
        for j in range(length):
            out[start + j * eta] = g[j] + (last - j) * eps2


def project_ordering(beta, Py_ssize_t eta, double eps2, bint anchor):
    """Euclidean projection onto the shifted, strided ordering set."""
    cdef double[::1] b = np.ascontiguousarray(beta, dtype=np.float64)
    cdef Py_ssize_t n = b.shape[0]
    outnp = np.empty(n)
    cdef double[::1] out = outnp
    cdef double[::1] g = np.empty(n + 1)
    cdef double[::1] vals = np.empty(n + 1)
    cdef Py_ssize_t[::1] wts = np.empty(n + 1, dtype=np.intp)
    if n > 0:
        _project_ordering(&b[0], &out[0], n, eta, eps2, anchor, &g[0], &vals[0], &wts[0])
    return outnp


def laplacian_from_weights(u, I, J, Py_ssize_t n):
    cdef double[::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t[::1] II = np.ascontiguousarray(I, dtype=np.intp)
    cdef Py_ssize_t[::1] JJ = np.ascontiguousarray(J, dtype=np.intp)
    Lnp = np.zeros((n, n))
    cdef double[:, ::1] L = Lnp
    cdef Py_ssize_t e
    for e in range(uu.shape[0]):
        L[II[e], JJ[e]] -= uu[e]
        L[JJ[e], II[e]] -= uu[e]
        L[II[e], II[e]] += uu[e]
        L[JJ[e], JJ[e]] += uu[e]
    return Lnp


cdef int _cmp_desc(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double y = (<const double*>b)[0]
    if x < y:
        return 1
    if x > y:
        return -1
    return 0


cdef void _project_l1_ball(double* z, Py_ssize_t size, double radius, double* work) noexcept nogil:
    cdef Py_ssize_t i, rho = 0
    cdef double total = 0.0, cs = 0.0, theta, a
    for i in range(size):
        work[i] = fabs(z[i])
        total += work[i]
    if total <= radius:
        return
    qsort(work, size, sizeof(double), _cmp_desc)
    for i in range(size):
        cs += work[i]
        if work[i] * (i + 1) > cs - radius:
            rho = i
    cs = 0.0
    for i in range(rho + 1):
        cs += work[i]
    theta = (cs - radius) / (rho + 1.0)
    for i in range(size):
        a = fabs(z[i]) - theta
        if a > 0.0:
            z[i] = copysign(a, z[i])
        else:
            z[i] = 0.0


cdef class _GeneralWork:
    cdef double[::1] gu, gb, tb, ub, bb, g, vals, sortbuf
    cdef Py_ssize_t[::1] wts
    cdef double[:, ::1] YV, Z

    def __init__(self, Py_ssize_t n, Py_ssize_t m):
        self.gu = np.empty(m)
        self.ub = np.empty(m)
        self.gb = np.empty(n)
        self.tb = np.empty(n)
        self.bb = np.empty(n)
        self.g = np.empty(n + 1)
        self.vals = np.empty(n + 1)
        self.wts = np.empty(n + 1, dtype=np.intp)
        self.sortbuf = np.empty(n * n)
        self.YV = np.empty((n, n))
        self.Z = np.empty((n, n))


cdef void _general_step(const double[:, ::1] V, const Py_ssize_t[::1] I, const Py_ssize_t[::1] J,
                        const double[::1] c, Py_ssize_t eta, double eps2, bint anchor,
                        double radius, int norm, int mode, double tau, double sigma,
                        const double[::1] u, const double[::1] b, const double[:, ::1] Y,
                        double[::1] un, double[::1] bn, double[:, ::1] Yn,
                        double[::1] w_gu, double[::1] w_gb, double[::1] w_tb, double[::1] w_ub,
                        double[::1] w_bb, double[::1] w_g, double[::1] w_vals,
                        Py_ssize_t[::1] w_wts, double[::1] w_sortbuf,
                        double[:, ::1] w_YV, double[:, ::1] w_Z) noexcept nogil:
    cdef Py_ssize_t n = V.shape[0], m = I.shape[0]
    cdef Py_ssize_t e, i, j, k
    cdef double acc, v, nz, scale
    # dual-to-primal: K^T Y
    for e in range(m):
        i = I[e]
        j = J[e]
        w_gu[e] = Y[i, i] + Y[j, j] - Y[i, j] - Y[j, i]
    for i in range(n):
        for k in range(n):
            acc = 0.0
            for j in range(n):
                acc = acc + Y[i, j] * V[j, k]
            w_YV[i, k] = acc
    for k in range(n):
        acc = 0.0
        for i in range(n):
            acc = acc + V[i, k] * w_YV[i, k]
        w_gb[k] = -acc
    # primal update
    for e in range(m):
        v = u[e] - tau * (c[e] + w_gu[e])
        un[e] = v if v > 0.0 else 0.0
    for k in range(n):
        w_tb[k] = b[k] - tau * w_gb[k]
    _project_ordering(&w_tb[0], &bn[0], n, eta, eps2, anchor, &w_g[0], &w_vals[0], &w_wts[0])
    for e in range(m):
        w_ub[e] = 2.0 * un[e] - u[e]
    for k in range(n):
        w_bb[k] = 2.0 * bn[k] - b[k]
    # K applied to the extrapolated point
    for i in range(n):
        for j in range(i, n):
            acc = 0.0
            for k in range(n):
                acc = acc + V[i, k] * w_bb[k] * V[j, k]
            w_Z[i, j] = -acc
            w_Z[j, i] = -acc
    for e in range(m):
        i = I[e]
        j = J[e]
        v = w_ub[e]
        w_Z[i, j] -= v
        w_Z[j, i] -= v
        w_Z[i, i] += v
        w_Z[j, j] += v
    for i in range(n):
        for j in range(n):
            w_Z[i, j] = Y[i, j] + sigma * w_Z[i, j]
    # dual prox
    if mode == C_MODE_DISTANCE:
        if norm == C_NORM_MAX:
            for i in range(n):
                for j in range(n):
                    Yn[i, j] = w_Z[i, j]
            _project_l1_ball(&Yn[0, 0], n * n, 1.0, &w_sortbuf[0])
        else:
            nz = 0.0
            for i in range(n):
                for j in range(n):
                    nz += w_Z[i, j] * w_Z[i, j]
            nz = sqrt(nz)
            scale = 1.0 if nz <= 1.0 else 1.0 / nz
            for i in range(n):
                for j in range(n):
                    Yn[i, j] = w_Z[i, j] * scale
    else:
        if norm == C_NORM_MAX:
            for i in range(n):
                for j in range(n):
                    v = w_Z[i, j] / sigma
                    if v > radius:
                        v = radius
                    elif v < -radius:
                        v = -radius
                    Yn[i, j] = w_Z[i, j] - sigma * v
        else:
            nz = 0.0
            for i in range(n):
                for j in range(n):
                    nz += w_Z[i, j] * w_Z[i, j]
            nz = sqrt(nz) / sigma
            scale = 0.0 if nz <= radius else 1.0 - radius / nz
            for i in range(n):
                for j in range(n):
                    Yn[i, j] = w_Z[i, j] * scale


def general_operator(V, I, J, c, Py_ssize_t eta, double eps2, bint anchor, double radius,
                     int norm, int mode, double tau, double sigma, u, b, Y):
    """One PDHG step for the (u, beta) program; returns (u+, beta+, Y+)."""
    cdef double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef Py_ssize_t n = Vv.shape[0]
    cdef Py_ssize_t[::1] Iv = np.ascontiguousarray(I, dtype=np.intp)
    cdef Py_ssize_t[::1] Jv = np.ascontiguousarray(J, dtype=np.intp)
    cdef Py_ssize_t m = Iv.shape[0]
    unp = np.empty(m)
    bnp = np.empty(n)
    Ynp = np.empty((n, n))
    cdef _GeneralWork w = _GeneralWork(n, m)
    _general_step(Vv, Iv, Jv, np.ascontiguousarray(c, dtype=np.float64), eta, eps2, anchor,
                  radius, norm, mode, tau, sigma,
                  np.ascontiguousarray(u, dtype=np.float64),
                  np.ascontiguousarray(b, dtype=np.float64),
                  np.ascontiguousarray(Y, dtype=np.float64), unp, bnp, Ynp,
                  w.gu, w.gb, w.tb, w.ub, w.bb, w.g, w.vals, w.wts, w.sortbuf, w.YV, w.Z)
    return unp, bnp, Ynp


def general_halpern(V, I, J, c, Py_ssize_t eta, double eps2, bint anchor, double radius,
                    int norm, int mode, double tau, double sigma,
                    double[::1] u, double[::1] b, double[:, ::1] Y,
                    const double[::1] u0, const double[::1] b0, const double[:, ::1] Y0,
                    long k, long nsteps):
    """Run ``nsteps`` reflected Halpern iterations in place; returns the new counter."""
    cdef double[:, ::1] Vv = np.ascontiguousarray(V, dtype=np.float64)
    cdef Py_ssize_t n = Vv.shape[0]
    cdef Py_ssize_t[::1] Iv = np.ascontiguousarray(I, dtype=np.intp)
    cdef Py_ssize_t[::1] Jv = np.ascontiguousarray(J, dtype=np.intp)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t m = Iv.shape[0]
    cdef double[::1] un = np.empty(m)
    cdef double[::1] bn = np.empty(n)
    cdef double[:, ::1] Yn = np.empty((n, n))
    cdef _GeneralWork w = _GeneralWork(n, m)
    cdef double[::1] w_gu = w.gu, w_gb = w.gb, w_tb = w.tb, w_ub = w.ub, w_bb = w.bb
    cdef double[::1] w_g = w.g, w_vals = w.vals, w_sortbuf = w.sortbuf
    cdef Py_ssize_t[::1] w_wts = w.wts
    cdef double[:, ::1] w_YV = w.YV, w_Z = w.Z
    cdef long step
    cdef Py_ssize_t e, i, j
    cdef double a
    with nogil:
        for step in range(nsteps):
            _general_step(Vv, Iv, Jv, cv, eta, eps2, anchor, radius, norm, mode, tau, sigma,
                          u, b, Y, un, bn, Yn, w_gu, w_gb, w_tb, w_ub, w_bb, w_g, w_vals,
                          w_wts, w_sortbuf, w_YV, w_Z)
            a = (k + 1.0) / (k + 2.0)
            for e in range(m):
                u[e] = a * (2.0 * un[e] - u[e]) + (1.0 - a) * u0[e]
            for i in range(n):
                b[i] = a * (2.0 * bn[i] - b[i]) + (1.0 - a) * b0[i]
            for i in range(n):
                for j in range(n):
                    Y[i, j] = a * (2.0 * Yn[i, j] - Y[i, j]) + (1.0 - a) * Y0[i, j]
            k += 1
    return k


cdef void _reduced_step(const double[:, ::1] G, const double[::1] c, Py_ssize_t eta, double eps2,
                        double tau, double sigma, const double[::1] b, const double[::1] y,
                        double[::1] bn, double[::1] yn, double[::1] tb, double[::1] bb,
                        double[::1] g, double[::1] vals, Py_ssize_t[::1] wts) noexcept nogil:
    cdef Py_ssize_t m = G.shape[0], n = G.shape[1], e, k
    cdef double acc, v
    for k in range(n):
        tb[k] = 0.0
    for e in range(m):
        v = y[e]
        if v != 0.0:
            for k in range(n):
                tb[k] += G[e, k] * v
    for k in range(n):
        tb[k] = b[k] - tau * (c[k] - tb[k])
    _project_ordering(&tb[0], &bn[0], n, eta, eps2, True, &g[0], &vals[0], &wts[0])
    for k in range(n):
        bb[k] = 2.0 * bn[k] - b[k]
    for e in range(m):
        acc = 0.0
        for k in range(n):
            acc = acc + G[e, k] * bb[k]
        v = y[e] - sigma * acc
        yn[e] = v if v > 0.0 else 0.0


def reduced_operator(G, c, Py_ssize_t eta, double eps2, double tau, double sigma, b, y):
    """One PDHG step for min c.beta s.t. G beta >= 0, beta ordered and anchored."""
    cdef double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t m = Gv.shape[0], n = Gv.shape[1]
    bnp = np.empty(n)
    ynp = np.empty(m)
    _reduced_step(Gv, np.ascontiguousarray(c, dtype=np.float64), eta, eps2, tau, sigma,
                  np.ascontiguousarray(b, dtype=np.float64),
                  np.ascontiguousarray(y, dtype=np.float64), bnp, ynp,
                  np.empty(n), np.empty(n), np.empty(n + 1), np.empty(n + 1),
                  np.empty(n + 1, dtype=np.intp))
    return bnp, ynp


def reduced_halpern(G, c, Py_ssize_t eta, double eps2, double tau, double sigma,
                    double[::1] b, double[::1] y, const double[::1] b0, const double[::1] y0,
                    long k, long nsteps):
    cdef double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef double[::1] cv = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t m = Gv.shape[0], n = Gv.shape[1], e, i
    cdef double[::1] bn = np.empty(n)
    cdef double[::1] yn = np.empty(m)
    cdef double[::1] tb = np.empty(n)
    cdef double[::1] bb = np.empty(n)
    cdef double[::1] g = np.empty(n + 1)
    cdef double[::1] vals = np.empty(n + 1)
    cdef Py_ssize_t[::1] wts = np.empty(n + 1, dtype=np.intp)
    cdef long step
    cdef double a
    with nogil:
        for step in range(nsteps):
            _reduced_step(Gv, cv, eta, eps2, tau, sigma, b, y, bn, yn, tb, bb, g, vals, wts)
            a = (k + 1.0) / (k + 2.0)
            for i in range(n):
                b[i] = a * (2.0 * bn[i] - b[i]) + (1.0 - a) * b0[i]
            for e in range(m):
                y[e] = a * (2.0 * yn[e] - y[e]) + (1.0 - a) * y0[e]
            k += 1
    return k
