"""Restarted Halpern PDHG driver used by :mod:`consensus_topology.recovery`.

The hot loop lives in the kernel backend (``general_halpern`` /
``reduced_halpern``); this module handles step sizes, convergence checks,
adaptive restarts and the primal weight.

Iteration (one "step" is one evaluation of the PDHG operator T)::

    z <- a_k (2 T(z) - z) + (1 - a_k) z0,   a_k = (k + 1) / (k + 2)

with ``z0`` the anchor of the current restart cycle.  Every ``CHECK_EVERY``
steps the fixed-point residual ``||z - T(z)||`` (in the primal-weighted
norm) is measured; the cycle restarts from ``T(z)`` on sufficient decay,
on a stall after necessary decay, or when the cycle grows too long.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

CHECK_EVERY = 64
POWER_ITERS = 50
STEP_FRACTION = 0.998
NORM_SAFETY = 1.01
OMEGA_MIN, OMEGA_MAX = 1e-5, 1e5
SUFFICIENT, NECESSARY, ARTIFICIAL = 0.2, 0.8, 0.36


@dataclass
class PDHGResult:
    primal: tuple
    dual: np.ndarray
    iterations: int
    converged: bool
    fixed_point_residual: float
    primal_residual: float
    restarts: int
    omega: float


def power_norm(apply, apply_t, x0, iters=POWER_ITERS):
    """Estimate ``||K||_2`` by power iteration on ``K^T K`` from ``x0``."""
    x = x0 / np.linalg.norm(x0)
    est = 0.0
    for _ in range(iters):
        y = apply_t(apply(x))
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        est = math.sqrt(ny)
        x = y / ny
    return est


def _clamp_omega(w):
    return min(max(w, OMEGA_MIN), OMEGA_MAX)


class _Problem:
    """Adapter interface: split state into primal parts and one dual array."""

    def operator(self, z, tau, sigma):
        raise NotImplementedError

    def halpern(self, z, z0, k, nsteps, tau, sigma):
        raise NotImplementedError

    def primal_residual(self, primal):
        raise NotImplementedError


class GeneralProblem(_Problem):
    """min c.u  s.t. u >= 0, beta ordered, ||A(u) - V diag(beta) V^T|| <= radius.

    In distance mode the objective is ``||A(u) - V diag(beta) V^T||`` itself
    and ``radius`` is ignored.
    """

    def __init__(self, V, c, eta, eps2, anchor, radius, norm, mode, backend):
        self.V = np.ascontiguousarray(V, dtype=np.float64)
        self.n = n = self.V.shape[0]
        I, J = np.triu_indices(n, 1)
        self.I = np.ascontiguousarray(I, dtype=np.intp)
        self.J = np.ascontiguousarray(J, dtype=np.intp)
        self.m = self.I.size
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.eta, self.eps2, self.anchor = int(eta), float(eps2), bool(anchor)
        self.radius, self.norm, self.mode = float(radius), int(norm), int(mode)
        self.kern = backend

    def K(self, u, b):
        return self.kern.laplacian_from_weights(u, self.I, self.J, self.n) - (self.V * b) @ self.V.T

    def KT(self, Y):
        d = np.diag(Y)
        gu = d[self.I] + d[self.J] - Y[self.I, self.J] - Y[self.J, self.I]
        gb = -np.sum(self.V * (Y @ self.V), axis=0)
        return gu, gb

    def opnorm(self):
        rng = np.random.default_rng(12345)
        x0 = rng.standard_normal(self.m + self.n)
        m = self.m
        return power_norm(
            lambda x: self.K(x[:m], x[m:]),
            lambda Y: np.concatenate(self.KT(Y)),
            x0,
        )

    def norm_of(self, R):
        if self.norm == kernels.NORM_MAX:
            return float(np.abs(R).max())
        return float(np.linalg.norm(R))

    def operator(self, z, tau, sigma):
        u, b, Y = z
        return self.kern.general_operator(self.V, self.I, self.J, self.c, self.eta, self.eps2,
                                          self.anchor, self.radius, self.norm, self.mode,
                                          tau, sigma, u, b, Y)

    def halpern(self, z, z0, k, nsteps, tau, sigma):
        return self.kern.general_halpern(self.V, self.I, self.J, self.c, self.eta, self.eps2,
                                         self.anchor, self.radius, self.norm, self.mode,
                                         tau, sigma, z[0], z[1], z[2], z0[0], z0[1], z0[2],
                                         k, nsteps)

    def primal_residual(self, primal):
        if self.mode == kernels.MODE_DISTANCE:
            return 0.0
        return max(self.norm_of(self.K(*primal)) - self.radius, 0.0)


class ReducedProblem(_Problem):
    """min c.beta  s.t. G beta >= 0, beta ordered with beta_n = 0."""

    def __init__(self, G, c, eta, eps2, backend):
        self.G = np.ascontiguousarray(G, dtype=np.float64)
        self.c = np.ascontiguousarray(c, dtype=np.float64)
        self.eta, self.eps2 = int(eta), float(eps2)
        self.kern = backend

    def opnorm(self):
        rng = np.random.default_rng(12345)
        return power_norm(lambda x: self.G @ x, lambda y: self.G.T @ y,
                          rng.standard_normal(self.G.shape[1]))

    def operator(self, z, tau, sigma):
        b, y = z
        return self.kern.reduced_operator(self.G, self.c, self.eta, self.eps2, tau, sigma, b, y)

    def halpern(self, z, z0, k, nsteps, tau, sigma):
        return self.kern.reduced_halpern(self.G, self.c, self.eta, self.eps2, tau, sigma,
                                         z[0], z[1], z0[0], z0[1], k, nsteps)

    def primal_residual(self, primal):
        return float(np.linalg.norm(np.minimum(self.G @ primal[0], 0.0)))


def run_pdhg(problem, z, max_iters, tol, omega=1.0):
    """Drive restarted Halpern PDHG from state ``z`` (primal parts, then the dual array)."""
    Knorm = problem.opnorm() * NORM_SAFETY
    if Knorm == 0.0:
        Knorm = 1.0
    z = [np.array(a, dtype=np.float64, order="C", copy=True) for a in z]
    z0 = [a.copy() for a in z]
    total = k = restarts = 0
    r0 = r_prev = None
    r = pres = math.inf
    Tz = z
    while total < max_iters:
        tau = STEP_FRACTION / (Knorm * omega)
        sigma = STEP_FRACTION * omega / Knorm
        Tz = [np.asarray(a) for a in problem.operator(z, tau, sigma)]
        total += 1
        dp = math.fsum(float(np.sum((a - b) ** 2)) for a, b in zip(z[:-1], Tz[:-1]))
        dd = float(np.sum((z[-1] - Tz[-1]) ** 2))
        r = math.sqrt(omega * dp + dd / omega)
        primal = tuple(Tz[:-1])
        pres = problem.primal_residual(primal)
        scale = 1.0 + math.sqrt(math.fsum(float(np.sum(a * a)) for a in primal))
        if r / scale < tol and pres / scale < tol:
            return PDHGResult(primal, Tz[-1], total, True, r, pres, restarts, omega)
        if r0 is None:
            r0 = r_prev = r
        restart = k > 0 and (
            r <= SUFFICIENT * r0
            or (r <= NECESSARY * r0 and r > r_prev)
            or k >= ARTIFICIAL * total
        )
        r_prev = r
        if restart:
            dx = math.sqrt(math.fsum(float(np.sum((a - b) ** 2)) for a, b in zip(Tz[:-1], z0[:-1])))
            dy = float(np.linalg.norm(Tz[-1] - z0[-1]))
            if dx > 1e-10 and dy > 1e-10:
                omega = _clamp_omega(math.exp(0.5 * math.log(dy / dx) + 0.5 * math.log(omega)))
            z = [np.array(a, order="C", copy=True) for a in Tz]
            z0 = [a.copy() for a in z]
            k = 0
            r0 = None
            restarts += 1
            continue
        a = (k + 1.0) / (k + 2.0)
        for zi, ti, z0i in zip(z, Tz, z0):
            zi *= -a
            zi += 2.0 * a * ti + (1.0 - a) * z0i
        k += 1
        nsteps = min(CHECK_EVERY - 1, max_iters - total - 1)
        if nsteps > 0:
            k = problem.halpern(z, z0, k, nsteps, tau, sigma)
            total += nsteps
    primal = tuple(Tz[:-1])
    return PDHGResult(primal, Tz[-1], total, False, r, pres, restarts, omega)
