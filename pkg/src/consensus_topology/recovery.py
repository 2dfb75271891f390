"""Sparse Laplacian recovery from a spectral template.

The program, over edge weights ``u >= 0`` (so ``J = A(u)`` is a Laplacian
by construction) and spectral values ``beta``::

    minimize    4 * sum_e w_e u_e                      (= ||J||_1 for w = 1)
    subject to  ||A(u) - V diag(beta) V^T|| <= epsilon1  (Frobenius or max norm)
                beta_i >= beta_{i+eta} + epsilon2
                beta_n = 0                               (anchor, optional)

``V`` is the template basis with columns by ascending sample eigenvalue,
so ``beta`` descends along the columns.

Two solution paths share one PDHG driver:

* ``epsilon1 == 0`` and the last template column is constant: ``J`` must
  equal ``V diag(beta) V^T`` exactly, so ``u = G beta`` with
  ``G[e] = -V[i] * V[j]`` and the program collapses to an LP in ``beta``.
* otherwise the full ``(u, beta)`` program is solved.  Feasibility is
  decided first by minimizing ``||A(u) - V diag(beta) V^T||`` over the
  same constraint set; the minimizer doubles as a strictly feasible
  witness used for warm starts and a final convex-combination repair.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from ._solver import GeneralProblem, ReducedProblem, run_pdhg
from .errors import (
    DimensionError,
    DomainError,
    InfeasibleError,
    NonConvergenceError,
    SearchError,
    ZeroMatrixError,
)
from .spectral import SpectralTemplate
from .util import atomic_write_json, atomic_write_text

AUTO = "auto"
NORMS = {"frobenius": kernels.NORM_FROBENIUS, "max": kernels.NORM_MAX}
CONSTANT_COLUMN_TOL = 1e-9
WITNESS_CACHE_SIZE = 16


@dataclass(frozen=True)
class RecoveryConfig:
    """Program and solver settings.

    ``eta=None`` resolves to 1 for exact templates and ``min(5, n-1)`` for
    sampled ones.  ``anchor=False`` drops the ``beta_n = 0`` constraint.
    ``reweight_iters`` counts reweighted solves after the first, plain one.
    """

    epsilon1: float | str = AUTO
    epsilon2: float = 1.0
    eta: int | None = None
    norm_variant: str = "frobenius"
    reweight_iters: int = 0
    reweight_delta: float = 1e-4
    anchor: bool = True
    tol: float = 1e-7
    max_iters: int = 200_000
    feas_tol: float = 1e-6
    backend: str | None = None

    def __post_init__(self):
        if self.epsilon1 != AUTO:
            e1 = float(self.epsilon1)
            if not e1 >= 0:
                raise DomainError(f"epsilon1 must be nonnegative or 'auto', got {self.epsilon1!r}")
            object.__setattr__(self, "epsilon1", e1)
        if not self.epsilon2 > 0:
            raise DomainError(f"epsilon2 must be positive, got {self.epsilon2}")
        if self.eta is not None and int(self.eta) < 1:
            raise DomainError(f"eta must be at least 1, got {self.eta}")
        if self.norm_variant not in NORMS:
            raise DomainError(f"norm_variant must be one of {sorted(NORMS)}, got {self.norm_variant!r}")
        if int(self.reweight_iters) < 0:
            raise DomainError(f"reweight_iters must be nonnegative, got {self.reweight_iters}")
        if not self.reweight_delta > 0:
            raise DomainError(f"reweight_delta must be positive, got {self.reweight_delta}")
        if not (self.tol > 0 and self.feas_tol > 0 and int(self.max_iters) >= 1):
            raise DomainError("tol, feas_tol and max_iters must be positive")

    def to_dict(self):
        return {
            "epsilon1": self.epsilon1, "epsilon2": self.epsilon2, "eta": self.eta,
            "norm_variant": self.norm_variant, "reweight_iters": self.reweight_iters,
            "reweight_delta": self.reweight_delta, "anchor": self.anchor, "tol": self.tol,
            "max_iters": self.max_iters, "feas_tol": self.feas_tol,
        }


@dataclass(frozen=True, eq=False)
class RecoveryProblem:
    template: SpectralTemplate
    config: RecoveryConfig = field(default_factory=RecoveryConfig)

    def __post_init__(self):
        n = self.template.n
        if n < 2:
            raise DomainError("template dimension must be at least 2")
        eta = self.config.eta
        if eta is None:
            eta = 1 if self.template.exact else min(5, n - 1)
        if not 1 <= eta <= n - 1:
            raise DomainError(f"eta must lie in 1..{n - 1}, got {eta}")
        object.__setattr__(self, "config", replace(self.config, eta=int(eta)))

    @property
    def n(self):
        return self.template.n


@dataclass(frozen=True, eq=False)
class _SolverState:
    path: str
    primal: tuple
    dual: np.ndarray
    cost_scale: float
    omega: float


@dataclass(frozen=True, eq=False)
class RecoverySolution:
    """Optimal ``J`` (``L_star``), ``K = V diag(beta) V^T`` (``L_tilde_star``) and ``beta``."""

    L_star: np.ndarray
    L_tilde_star: np.ndarray
    lambda_star: np.ndarray
    objective: float
    epsilon1: float
    epsilon2: float
    eta: int
    norm_variant: str
    diagnostics: dict = field(default_factory=dict)
    # solver state for warm-starting a follow-up solve (reweighting)
    _state: _SolverState | None = field(default=None, repr=False)

    @property
    def n(self):
        return self.L_star.shape[0]

    @property
    def weights(self):
        """Recovered edge weights ``-L_star[i, j]`` for ``i < j``, row-major."""
        return -self.L_star[np.triu_indices(self.n, 1)]

    def to_dict(self):
        d = self.diagnostics
        return {
            "n": self.n,
            "epsilon1": self.epsilon1,
            "epsilon2": self.epsilon2,
            "eta": self.eta,
            "norm_variant": self.norm_variant,
            "objective": self.objective,
            "beta": self.lambda_star.tolist(),
            "L_star": self.L_star.ravel().tolist(),
            "residuals": {
                "primal": d.get("primal_residual"),
                "dual": d.get("dual_residual"),
                "constraint_gap": d.get("constraint_gap"),
            },
            "iterations": d.get("iterations"),
            "diagnostics": d,
        }

    def save_json(self, path, extra=None):
        doc = self.to_dict()
        if extra:
            doc["config"] = extra
        atomic_write_json(path, doc)

    def save_csv(self, path, which="L_star"):
        M = {"L_star": self.L_star, "L_tilde_star": self.L_tilde_star}[which]
        rows = (",".join(repr(float(x)) for x in row) for row in M)
        atomic_write_text(path, "\n".join(rows) + "\n")


# helpers

def _kern(cfg):
    return kernels.get_backend(cfg.backend)


def _matnorm(R, norm_variant):
    if norm_variant == "max":
        return float(np.abs(R).max())
    return float(np.linalg.norm(R))


def _constant_last_column(V):
    v = V[:, -1]
    return float(np.abs(v - v.mean()).max()) <= CONSTANT_COLUMN_TOL


def _edge_index(n):
    I, J = np.triu_indices(n, 1)
    return I.astype(np.intp), J.astype(np.intp)


def _check_weights(weights, m):
    if weights is None:
        return np.ones(m)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (m,) or not np.all(np.isfinite(w)) or np.any(w <= 0):
        raise DomainError(f"weights must be {m} positive finite numbers")
    return w


def _normalize_cost(c):
    s = float(np.abs(c).max()) if c.size else 0.0
    return (c / s, s) if s > 0 else (c, 1.0)


def _warm(warm, path, cost_scale):
    # duals scale with the cost; rescale to the new normalization
    if warm is None or warm.path != path:
        return None, 1.0
    return (*warm.primal, warm.dual * (warm.cost_scale / cost_scale)), warm.omega


def _ordering_gap(beta, eta, eps2, anchor):
    n = beta.size
    gap = 0.0
    if n > eta:
        gap = float(np.max(beta[eta:] + eps2 - beta[:-eta], initial=0.0))
    if anchor:
        gap = max(gap, abs(float(beta[-1])))
    return max(gap, 0.0)


def epsilon_upper(template, config):
    """``||V diag(beta0) V^T||`` for the minimal-norm ordered ``beta0``: feasible with ``J = 0``."""
    kern = _kern(config)
    b0 = kern.project_ordering(np.zeros(template.n), config.eta, config.epsilon2, config.anchor)
    V = template.basis
    return _matnorm((V * b0) @ V.T, config.norm_variant)


# witness / minimum constraint distance

@dataclass(frozen=True, eq=False)
class _Witness:
    u: np.ndarray
    beta: np.ndarray
    distance: float
    converged: bool
    iterations: int


_witness_cache: OrderedDict = OrderedDict()
_witness_lock = threading.Lock()


def _witness_key(template, cfg):
    return (template.basis.tobytes(), cfg.eta, cfg.epsilon2, cfg.norm_variant, cfg.anchor,
            cfg.tol, cfg.max_iters, _kern(cfg).__name__)


def clear_cache():
    with _witness_lock:
        _witness_cache.clear()


def _witness(template, cfg):
    key = _witness_key(template, cfg)
    with _witness_lock:
        hit = _witness_cache.get(key)
        if hit is not None:
            _witness_cache.move_to_end(key)
            return hit
    n = template.n
    kern = _kern(cfg)
    prob = GeneralProblem(template.basis, np.zeros(n * (n - 1) // 2), cfg.eta, cfg.epsilon2,
                          cfg.anchor, 0.0, NORMS[cfg.norm_variant], kernels.MODE_DISTANCE, kern)
    b0 = kern.project_ordering(np.zeros(n), cfg.eta, cfg.epsilon2, cfg.anchor)
    res = run_pdhg(prob, (np.zeros(prob.m), b0, np.zeros((n, n))), cfg.max_iters, cfg.tol)
    u = np.maximum(res.primal[0], 0.0)
    beta = res.primal[1]
    d = _matnorm(prob.K(u, beta), cfg.norm_variant)
    w = _Witness(u, beta, d, res.converged, res.iterations)
    with _witness_lock:
        _witness_cache[key] = w
        while len(_witness_cache) > WITNESS_CACHE_SIZE:
            _witness_cache.popitem(last=False)
    return w


def minimum_epsilon1(template, config=None):
    """Smallest achievable constraint distance (an upper estimate from the solver)."""
    problem = RecoveryProblem(template, config or RecoveryConfig())
    cfg = problem.config
    if _constant_last_column(template.basis):
        return 0.0
    w = _witness(template, cfg)
    if not w.converged:
        raise NonConvergenceError("distance solve did not converge", w.iterations)
    return w.distance


def _feasible_at(distance, eps, feas_tol):
    return distance <= eps + 0.5 * feas_tol


def auto_epsilon1(template, config=None) -> float:
    """Smallest feasible epsilon1 by bisection over ``[0, epsilon_upper]``.

    The bracket is narrowed to half of ``tol = 1e-4 * epsilon_upper`` and
    ``tol / 2`` is added to its upper end.  The result is feasible, lies
    within ``tol`` of the smallest feasible value, and the result minus
    ``tol`` is infeasible.  When the last template column is constant, ``0``
    is feasible and returned directly.
    """
    problem = RecoveryProblem(template, config or RecoveryConfig())
    cfg = problem.config
    if _constant_last_column(template.basis):
        return 0.0
    hi = epsilon_upper(template, cfg)
    w = _witness(template, cfg)
    feasible = lambda e: _feasible_at(w.distance, e, cfg.feas_tol)  # noqa: E731
    if not feasible(hi):
        if not w.converged:
            raise NonConvergenceError("distance solve did not converge", w.iterations)
        raise SearchError(f"epsilon1={hi:.6g} at the top of the bracket is infeasible")
    if feasible(0.0):
        return 0.0
    top = hi
    tol = 1e-4 * top
    lo = 0.0
    while hi - lo > 0.5 * tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    # keep a margin of tol/2 inside the feasible set: a near-empty set has
    # unbounded multipliers and stalls first-order solvers
    return min(hi + 0.5 * tol, top)


# solve

def _resolve(problem):
    cfg = problem.config
    if cfg.epsilon1 == AUTO:
        eps1 = auto_epsilon1(problem.template, cfg)
        problem = RecoveryProblem(problem.template, replace(cfg, epsilon1=eps1))
    return problem


def _finish(problem, u, beta, diag, weights, state):
    cfg = problem.config
    n = problem.n
    kern = _kern(cfg)
    I, J = _edge_index(n)
    L = kern.laplacian_from_weights(u, I, J, n)
    V = problem.template.basis
    K = (V * beta) @ V.T
    K = 0.5 * (K + K.T)
    gap = _matnorm(L - K, cfg.norm_variant)
    diag = dict(diag)
    diag["constraint_gap"] = gap
    diag["ordering_gap"] = _ordering_gap(beta, cfg.eta, cfg.epsilon2, cfg.anchor)
    diag["weighted_objective"] = float(4.0 * weights @ u)
    diag["feasible"] = bool(gap <= cfg.epsilon1 + cfg.feas_tol
                            and diag["ordering_gap"] <= cfg.feas_tol)
    for a in (L, K, beta):
        a.setflags(write=False)
    return RecoverySolution(L, K, beta, float(4.0 * u.sum()), float(cfg.epsilon1),
                            float(cfg.epsilon2), int(cfg.eta), cfg.norm_variant, diag, state)


def _solve_reduced(problem, w, warm=None):
    cfg = problem.config
    n = problem.n
    kern = _kern(cfg)
    V = problem.template.basis
    I, J = _edge_index(n)
    G = -(V[I] * V[J])
    c, cs = _normalize_cost(G.T @ (4.0 * w))
    prob = ReducedProblem(G, c, cfg.eta, cfg.epsilon2, kern)
    z, omega = _warm(warm, "reduced", cs)
    if z is None:
        z = (kern.project_ordering(np.zeros(n), cfg.eta, cfg.epsilon2, True), np.zeros(G.shape[0]))
    res = run_pdhg(prob, z, cfg.max_iters, cfg.tol, omega)
    if not res.converged:
        raise NonConvergenceError(
            f"reduced solve did not converge in {res.iterations} iterations",
            res.iterations, res.primal_residual, res.fixed_point_residual)
    beta = np.array(res.primal[0], copy=True)
    u = G @ beta
    shift = 0.0
    if u.min() < 0:
        # adding a*(1,...,1,0) to beta adds a*(I - 11^T/n) to J: every u_e grows by a/n
        shift = -float(u.min()) * n
        beta[:-1] += shift
        u = G @ beta
    u = np.maximum(u, 0.0)
    diag = {"path": "reduced", "iterations": res.iterations, "restarts": res.restarts,
            "primal_residual": res.primal_residual, "dual_residual": res.fixed_point_residual,
            "converged": True, "repair_shift": shift, "warm_start": warm is not None}
    state = _SolverState("reduced", (beta.copy(),), res.dual, cs, res.omega)
    return _finish(problem, u, beta, diag, w, state)


def _solve_general(problem, w, warm=None):
    cfg = problem.config
    n = problem.n
    kern = _kern(cfg)
    eps1 = float(cfg.epsilon1)
    wit = _witness(problem.template, cfg)
    if not _feasible_at(wit.distance, eps1, cfg.feas_tol):
        if not wit.converged:
            raise NonConvergenceError(
                f"feasibility check did not converge in {wit.iterations} iterations",
                wit.iterations)
        raise InfeasibleError(
            f"no feasible point at epsilon1={eps1:.6g}; the minimum is about {wit.distance:.6g}",
            min_epsilon1=wit.distance)
    c, cs = _normalize_cost(4.0 * w)
    prob = GeneralProblem(problem.template.basis, c, cfg.eta, cfg.epsilon2, cfg.anchor, eps1,
                          NORMS[cfg.norm_variant], kernels.MODE_CONSTRAINED, kern)
    z, omega = _warm(warm, "general", cs)
    if z is None:
        z = (wit.u, wit.beta, np.zeros((n, n)))
    res = run_pdhg(prob, z, cfg.max_iters, cfg.tol, omega)
    if not res.converged:
        raise NonConvergenceError(
            f"solve did not converge in {res.iterations} iterations",
            res.iterations, res.primal_residual, res.fixed_point_residual)
    u = np.maximum(res.primal[0], 0.0)
    beta = np.array(res.primal[1], copy=True)
    viol = _matnorm(prob.K(u, beta), cfg.norm_variant)
    target = eps1 + 0.5 * cfg.feas_tol
    theta = 0.0
    if viol > target:
        # pull toward the witness; the norm is convex, so this lands inside
        theta = min(1.0, (viol - target) / max(viol - wit.distance, 1e-300))
        u = (1.0 - theta) * u + theta * wit.u
        beta = (1.0 - theta) * beta + theta * wit.beta
    diag = {"path": "general", "iterations": res.iterations + wit.iterations,
            "restarts": res.restarts, "primal_residual": res.primal_residual,
            "dual_residual": res.fixed_point_residual, "converged": True,
            "min_distance": wit.distance, "repair_theta": theta, "warm_start": warm is not None}
    state = _SolverState("general", (u.copy(), beta.copy()), res.dual, cs, res.omega)
    return _finish(problem, u, beta, diag, w, state)


def solve(problem: RecoveryProblem, weights=None, warm_start=None) -> RecoverySolution:
    """Solve the recovery program once.

    ``weights`` (one positive number per node pair ``i < j``, row-major)
    turn the objective into ``4 * sum w_e u_e``; ``None`` means all ones.
    An ``epsilon1`` of ``"auto"`` is resolved with :func:`auto_epsilon1`.
    ``warm_start`` may be an earlier solution of the same program (possibly
    with other weights) whose primal-dual state seeds the iteration.
    """
    problem = _resolve(problem)
    n = problem.n
    w = _check_weights(weights, n * (n - 1) // 2)
    warm = warm_start._state if warm_start is not None else None
    if problem.config.epsilon1 == 0 and _constant_last_column(problem.template.basis):
        return _solve_reduced(problem, w, warm)
    return _solve_general(problem, w, warm)


def solve_reweighted(problem: RecoveryProblem, iters: int) -> RecoverySolution:
    """``iters`` solves; each after the first uses ``w_e = 1 / (u_e + delta * max(u))``.

    Every solve after the first is warm-started from its predecessor.
    """
    iters = int(iters)
    if iters < 1:
        raise DomainError(f"iters must be at least 1, got {iters}")
    problem = _resolve(problem)
    cfg = problem.config
    history = []
    weights = None
    total_iters = 0
    sol = None
    for _ in range(iters):
        sol = solve(problem, weights, warm_start=sol)
        history.append(sol.objective)
        total_iters += sol.diagnostics["iterations"]
        u = sol.weights
        floor = cfg.reweight_delta * max(float(u.max()), np.finfo(float).tiny)
        weights = 1.0 / (np.maximum(u, 0.0) + floor)
    sol.diagnostics["reweight_objectives"] = history
    sol.diagnostics["total_iterations"] = total_iters
    return sol


def recover(problem: RecoveryProblem) -> RecoverySolution:
    """Solve with the reweighting schedule from ``problem.config``."""
    return solve_reweighted(problem, 1 + int(problem.config.reweight_iters))


def rescale_to_reference(L_est, L_ref):
    """Least-squares scale ``c* = <L_est, L_ref> / ||L_est||_F^2``; returns ``(c* L_est, c*)``."""
    A = np.asarray(L_est, dtype=np.float64)
    B = np.asarray(L_ref, dtype=np.float64)
    if A.shape != B.shape:
        raise DimensionError(f"shapes {A.shape} and {B.shape} differ")
    nrm = float(np.sum(A * A))
    if nrm == 0.0:
        raise ZeroMatrixError("cannot rescale an all-zero matrix")
    c = float(np.sum(A * B)) / nrm
    return c * A, c
