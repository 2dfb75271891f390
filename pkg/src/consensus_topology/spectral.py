"""Sample covariance, spectral templates, diagnostics and sub-exponential bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import SnapshotSet
from .errors import DimensionError, DomainError, ZeroParamError
from .graph import Laplacian, spectral_decompose


def _observations(snapshots):
    if isinstance(snapshots, SnapshotSet):
        return snapshots.observations
    Y = np.asarray(snapshots, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] < 1:
        raise DimensionError(f"expected an n x M array with M >= 1, got shape {Y.shape}")
    return Y


def sample_covariance(snapshots):
    """Uncentered second moment ``Y @ Y.T / M``."""
    Y = _observations(snapshots)
    S = (Y @ Y.T) / Y.shape[1]
    return 0.5 * (S + S.T)


@dataclass(frozen=True, eq=False)
class SpectralTemplate:
    """Orthonormal basis with columns in ascending order of ``sample_eigenvalues``.

    ``M`` is the number of snapshots behind the template, or ``None`` for a
    template built from a known Laplacian.
    """

    basis: np.ndarray
    sample_eigenvalues: np.ndarray
    M: int | None = None

    def __post_init__(self):
        V = np.array(self.basis, dtype=np.float64, copy=True)
        lam = np.array(self.sample_eigenvalues, dtype=np.float64, copy=True)
        if V.ndim != 2 or V.shape[0] != V.shape[1] or lam.shape != (V.shape[0],):
            raise DimensionError(f"basis {V.shape} and eigenvalues {lam.shape} do not match")
        V.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "basis", V)
        object.__setattr__(self, "sample_eigenvalues", lam)

    @property
    def n(self):
        return self.basis.shape[0]

    @property
    def exact(self):
        return self.M is None


def extract_template(snapshots, backend=None) -> SpectralTemplate:
    S = sample_covariance(snapshots)
    dec = spectral_decompose(S, backend=backend)
    return SpectralTemplate(dec.eigenvectors, dec.eigenvalues, _observations(snapshots).shape[1])


def exact_template(L, backend=None) -> SpectralTemplate:
    """Template whose basis is the true Laplacian eigenbasis.

    Columns run from the largest Laplacian eigenvalue down to the zero
    eigenvalue, matching the column order a sampled template converges to.
    The stored eigenvalues are ``lambda_max - lambda`` so they ascend.
    """
    mat = L.matrix if isinstance(L, Laplacian) else np.asarray(L, dtype=np.float64)
    dec = spectral_decompose(mat, backend=backend)
    lam = dec.eigenvalues[::-1]
    return SpectralTemplate(dec.eigenvectors[:, ::-1], lam[0] - lam, None)


@dataclass(frozen=True, eq=False)
class DiagonalizationDiagnostics:
    offdiag_ratio: float
    ordering_violations: int
    B: np.ndarray

    def to_record(self, **extra):
        rec = dict(extra)
        rec["offdiag_ratio"] = self.offdiag_ratio
        rec["ordering_violations"] = self.ordering_violations
        return rec


def diagonalization_diagnostics(S, V_true) -> DiagonalizationDiagnostics:
    """How well ``V_true`` diagonalizes ``S`` and whether diag(B) descends.

    ``V_true`` should list the Laplacian eigenvectors by ascending eigenvalue,
    so ``B[0, 0]`` is expected to be the largest diagonal entry.  A pair
    ``i < j`` with ``B_ii <= B_jj`` counts as one violation.
    """
    S = np.asarray(S, dtype=np.float64)
    V = np.asarray(V_true, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or V.shape != S.shape:
        raise DimensionError(f"S {S.shape} and V_true {V.shape} must be matching square matrices")
    if np.abs(V.T @ V - np.eye(V.shape[0])).max() > 1e-8:
        raise ValueError("V_true is not orthonormal within 1e-8")
    B = V.T @ S @ V
    total = float(np.linalg.norm(B))
    off = float(np.linalg.norm(B - np.diag(np.diag(B))))
    ratio = off / total if total > 0 else 0.0
    d = np.diag(B)
    i, j = np.triu_indices(d.size, 1)
    violations = int(np.count_nonzero(d[i] <= d[j]))
    B.setflags(write=False)
    return DiagonalizationDiagnostics(ratio, violations, B)


@dataclass(frozen=True)
class SubExpParams:
    """Sub-exponential parameters ``(nu, b)``."""

    nu: float
    b: float

    def __post_init__(self):
        if not (self.nu >= 0 and self.b >= 0):
            raise DomainError(f"sub-exponential parameters must be nonnegative, got {self}")

    def mgf_bound(self, l):
        """``exp(nu^2 l^2 / 2)``, valid for ``|l| < 1/b``."""
        return math.exp(self.nu * self.nu * l * l / 2.0)


def _positive(name, x):
    if not x > 0:
        raise DomainError(f"{name} must be positive, got {x}")


def subexp_product_params(sigma1, sigma2) -> SubExpParams:
    """Parameters for the product of independent ``N(0, sigma1^2)`` and ``N(0, sigma2^2)``."""
    _positive("sigma1", sigma1)
    _positive("sigma2", sigma2)
    v = math.sqrt(2.0) * sigma1 * sigma2
    return SubExpParams(v, v)


def subexp_square_params(sigma) -> SubExpParams:
    """Parameters for ``x^2`` with ``x ~ N(0, sigma^2)``; the mean of ``x^2`` is ``sigma^2``."""
    _positive("sigma", sigma)
    return SubExpParams(2.0 * sigma * sigma, 4.0 * sigma * sigma)


def subexp_sum(p: SubExpParams, q: SubExpParams) -> SubExpParams:
    """Parameters of the sum of two independent sub-exponential variables."""
    return SubExpParams(math.hypot(p.nu, q.nu), max(p.b, q.b))


def subexp_tail_bound(params: SubExpParams, l) -> float:
    """Two-sided tail bound on ``P(|X - mean| >= l)``; may exceed 1."""
    if l < 0:
        raise DomainError(f"l must be nonnegative, got {l}")
    if l == 0:
        return 2.0
    nu, b = params.nu, params.b
    if nu == 0 or b == 0:
        raise ZeroParamError(f"tail bound undefined for nu={nu}, b={b} at l={l}")
    if l <= nu * nu / b:
        return 2.0 * math.exp(-l * l / (2.0 * nu * nu))
    return 2.0 * math.exp(-l / (2.0 * b))


def sample_size_bound(tau, beta, n, delta) -> int:
    """``ceil(8 beta^2 / tau^4 * log(2n / delta))`` snapshots."""
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    if not beta >= 2:
        raise DomainError(f"beta must be at least 2, got {beta}")
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    return math.ceil(8.0 * beta * beta / tau ** 4 * math.log(2.0 * n / delta))
