"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` function by function and are used when the
compiled extension is unavailable (or when ``CONSENSUS_TOPOLOGY_PURE=1``).
"""

import math

import numpy as np

NORM_FROBENIUS = 0
NORM_MAX = 1
MODE_CONSTRAINED = 0
MODE_DISTANCE = 1


def _offdiag_norm(A):
    off = A - np.diag(np.diag(A))
    return math.sqrt(float(np.sum(off * off)))


def jacobi_eigh(a, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi eigenvalue iteration for a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps, offdiag)`` with the
    eigenvalues in the order the rotations left them (unsorted).
    """
    A = np.array(a, dtype=np.float64, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    fro = math.sqrt(float(np.sum(A * A)))
    off = _offdiag_norm(A)
    thresh = tol * min(fro, off)
    sweeps = 0
    while off > thresh and sweeps < max_sweeps:
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = float(A[p, q])
                if apq == 0.0:
                    continue
                # python floats: a denormal apq gives theta = inf, not a warning
                theta = (float(A[q, q]) - float(A[p, p])) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = A[:, p].copy()
                aq = A[:, q]
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :]
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        off = _offdiag_norm(A)
    return np.diag(A).copy(), V, sweeps, off


def _pava_nonincreasing(y):
    # unit-weight pool-adjacent-violators, nonincreasing fit
    vals = []
    wts = []
    for v in y:
        vals.append(float(v))
        wts.append(1)
        while len(vals) > 1 and vals[-2] < vals[-1]:
            w = wts[-2] + wts[-1]
            vals[-2] = (vals[-2] * wts[-2] + vals[-1] * wts[-1]) / w
            wts[-2] = w
            vals.pop()
            wts.pop()
    return np.repeat(vals, wts)


def project_ordering(beta, eta, eps2, anchor):
    """Euclidean projection onto {beta_i >= beta_{i+eta} + eps2} (and beta_n = 0 if anchored)."""
    beta = np.asarray(beta, dtype=np.float64)
    n = beta.shape[0]
    out = beta.copy()
    for start in range(min(eta, n)):
        idx = np.arange(start, n, eta)
        last = len(idx) - 1
        shift = (last - np.arange(last + 1)) * eps2
        g = beta[idx] - shift
        if anchor and idx[-1] == n - 1:
            if last > 0:
                g[:last] = np.maximum(_pava_nonincreasing(g[:last]), 0.0)
            g[last] = 0.0
        else:
            g = _pava_nonincreasing(g)
        out[idx] = g + shift
    return out


def laplacian_from_weights(u, I, J, n):
    L = np.zeros((n, n))
    L[I, J] = -u
    L[J, I] = -u
    L[np.arange(n), np.arange(n)] = np.bincount(I, u, n) + np.bincount(J, u, n)
    return L


def _project_l1_ball(z, radius):
    a = np.abs(z.ravel())
    if a.sum() <= radius:
        return z.copy()
    s = np.sort(a)[::-1]
    cs = np.cumsum(s)
    k = np.arange(1, s.size + 1)
    rho = np.nonzero(s * k > cs - radius)[0][-1]
    theta = (cs[rho] - radius) / (rho + 1.0)
    return np.sign(z) * np.maximum(np.abs(z) - theta, 0.0)


def _project_ball(z, radius, norm):
    if norm == NORM_MAX:
        return np.clip(z, -radius, radius)
    nz = math.sqrt(float(np.sum(z * z)))
    if nz <= radius:
        return z.copy()
    return z * (radius / nz)


def general_operator(V, I, J, c, eta, eps2, anchor, radius, norm, mode, tau, sigma, u, b, Y):
    """One PDHG step for the (u, beta) program; returns (u+, beta+, Y+)."""
    n = V.shape[0]
    d = np.diag(Y)
    gu = d[I] + d[J] - Y[I, J] - Y[J, I]
    gb = -np.sum(V * (Y @ V), axis=0)
    un = np.maximum(u - tau * (c + gu), 0.0)
    bn = project_ordering(b - tau * gb, eta, eps2, anchor)
    ub = 2.0 * un - u
    bb = 2.0 * bn - b
    Z = Y + sigma * (laplacian_from_weights(ub, I, J, n) - (V * bb) @ V.T)
    if mode == MODE_DISTANCE:
        if norm == NORM_MAX:
            Yn = _project_l1_ball(Z, 1.0)
        else:
            Yn = _project_ball(Z, 1.0, NORM_FROBENIUS)
    else:
        Yn = Z - sigma * _project_ball(Z / sigma, radius, norm)
    return un, bn, Yn


def general_halpern(V, I, J, c, eta, eps2, anchor, radius, norm, mode, tau, sigma,
                    u, b, Y, u0, b0, Y0, k, nsteps):
    """Run ``nsteps`` reflected Halpern iterations in place; returns the new counter."""
    for _ in range(nsteps):
        un, bn, Yn = general_operator(V, I, J, c, eta, eps2, anchor, radius, norm, mode,
                                      tau, sigma, u, b, Y)
        a = (k + 1.0) / (k + 2.0)
        u[:] = a * (2.0 * un - u) + (1.0 - a) * u0
        b[:] = a * (2.0 * bn - b) + (1.0 - a) * b0
        Y[:] = a * (2.0 * Yn - Y) + (1.0 - a) * Y0
        k += 1
    return k


def reduced_operator(G, c, eta, eps2, tau, sigma, b, y):
    """One PDHG step for min c.beta s.t. G beta >= 0, beta ordered and anchored."""
    bn = project_ordering(b - tau * (c - G.T @ y), eta, eps2, True)
    yn = np.maximum(y - sigma * (G @ (2.0 * bn - b)), 0.0)
    return bn, yn


def reduced_halpern(G, c, eta, eps2, tau, sigma, b, y, b0, y0, k, nsteps):
    for _ in range(nsteps):
        bn, yn = reduced_operator(G, c, eta, eps2, tau, sigma, b, y)
        a = (k + 1.0) / (k + 2.0)
        b[:] = a * (2.0 * bn - b) + (1.0 - a) * b0
        y[:] = a * (2.0 * yn - y) + (1.0 - a) * y0
        k += 1
    return k
