"""Weighted undirected graphs, their Laplacians and eigendecompositions."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .errors import ConnectivityError, DimensionError, SymmetryError

ER_MAX_ATTEMPTS = 1000
SYMMETRY_RTOL = 1e-10
JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 100


def _readonly(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Graph:
    """Undirected graph on nodes ``0..n-1`` with positive edge weights.

    ``edges`` holds ``(i, j, w)`` triples with ``i < j``.  Pairs given as
    ``(j, i)`` are normalized and zero-weight entries are dropped; self-loops,
    duplicate pairs and negative weights are rejected.
    """

    n: int
    edges: tuple = ()

    def __post_init__(self):
        n = int(self.n)
        if n < 2:
            raise ValueError(f"a graph needs at least 2 nodes, got {self.n}")
        seen = {}
        for e in self.edges:
            if len(e) == 2:
                i, j, w = e[0], e[1], 1.0
            else:
                i, j, w = e
            i, j, w = int(i), int(j), float(w)
            if not (0 <= i < n and 0 <= j < n):
                raise IndexError(f"edge ({i}, {j}) outside 0..{n - 1}")
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"edge ({i}, {j}) has invalid weight {w}")
            if i > j:
                i, j = j, i
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen[(i, j)] = w
        object.__setattr__(self, "n", n)
        object.__setattr__(
            self, "edges", tuple((i, j, w) for (i, j), w in sorted(seen.items()) if w > 0)
        )

    @property
    def num_edges(self):
        return len(self.edges)

    def weight(self, i, j):
        if i > j:
            i, j = j, i
        for a, b, w in self.edges:
            if (a, b) == (i, j):
                return w
        return 0.0

    def neighbors(self, i):
        out = []
        for a, b, _ in self.edges:
            if a == i:
                out.append(b)
            elif b == i:
                out.append(a)
        return sorted(out)

    def adjacency(self):
        A = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            A[i, j] = A[j, i] = w
        return A

    def is_connected(self):
        return _connected(self.n, [(i, j) for i, j, _ in self.edges])


def _connected(n, pairs):
    adj = [[] for _ in range(n)]
    for i, j in pairs:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if not seen[w]:
                seen[w] = True
                count += 1
                queue.append(w)
    return count == n


@dataclass(frozen=True, eq=False)
class Laplacian:
    """Combinatorial Laplacian ``D - A`` stored as a read-only matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        L = _readonly(self.matrix)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise DimensionError(f"Laplacian must be square, got shape {L.shape}")
        if not np.array_equal(L, L.T):
            raise SymmetryError("Laplacian is not exactly symmetric")
        object.__setattr__(self, "matrix", L)

    @property
    def n(self):
        return self.matrix.shape[0]

    @cached_property
    def decomposition(self):
        return spectral_decompose(self.matrix)

    @property
    def lambda_max(self):
        return float(self.decomposition.eigenvalues[-1])

    def edge_weights(self):
        """Upper-triangle edge weights ``-L_ij`` for ``i < j`` in row-major order."""
        iu = np.triu_indices(self.n, 1)
        return -self.matrix[iu]

    def to_graph(self, tol=0.0):
        I, J = np.triu_indices(self.n, 1)
        w = -self.matrix[I, J]
        keep = w > tol
        return Graph(self.n, tuple(zip(I[keep].tolist(), J[keep].tolist(), w[keep].tolist())))

    def __eq__(self, other):
        return isinstance(other, Laplacian) and np.array_equal(self.matrix, other.matrix)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """Eigenvalues in ascending order with the paired orthonormal eigenvectors as columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sweeps: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", _readonly(self.eigenvalues))
        object.__setattr__(self, "eigenvectors", _readonly(self.eigenvectors))

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def build_laplacian(g: Graph) -> Laplacian:
    n = g.n
    L = np.zeros((n, n))
    for i, j, w in g.edges:
        L[i, j] -= w
        L[j, i] -= w
    # exact zero row sums: diagonal is the negated off-diagonal sum
    L[np.diag_indices(n)] = -L.sum(axis=1)
    return Laplacian(L)


def _parse_weight_dist(weight_dist):
    if weight_dist == "unit" or weight_dist is None:
        return None
    if isinstance(weight_dist, str):
        s = weight_dist.strip().lower()
        if s.startswith("uniform(") and s.endswith(")"):
            a, b = (float(t) for t in s[len("uniform("):-1].split(","))
            weight_dist = ("uniform", a, b)
    if isinstance(weight_dist, (tuple, list)) and len(weight_dist) == 3 and weight_dist[0] == "uniform":
        a, b = float(weight_dist[1]), float(weight_dist[2])
        if not 0 < a <= b:
            raise ValueError(f"uniform weights need 0 < a <= b, got ({a}, {b})")
        return a, b
    raise ValueError(f"unknown weight distribution {weight_dist!r}")


def erdos_renyi(n, p, weight_dist="unit", seed=0) -> Graph:
    """Connected G(n, p) sample, resampled until connected.

    ``weight_dist`` is ``"unit"`` or ``("uniform", a, b)`` (the string form
    ``"uniform(a,b)"`` is also accepted).  The result depends only on the
    arguments.
    """
    n = int(n)
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    bounds = _parse_weight_dist(weight_dist)
    rng = np.random.default_rng(seed)
    I, J = np.triu_indices(n, 1)
    for _ in range(ER_MAX_ATTEMPTS):
        mask = rng.random(I.size) < p
        if bounds is None:
            w = np.ones(int(mask.sum()))
        else:
            w = rng.uniform(bounds[0], bounds[1], int(mask.sum()))
        pairs = list(zip(I[mask].tolist(), J[mask].tolist()))
        if _connected(n, pairs):
            return Graph(n, tuple((i, j, float(x)) for (i, j), x in zip(pairs, w)))
    raise ConnectivityError(
        f"no connected G({n}, {p}) sample in {ER_MAX_ATTEMPTS} attempts; p is too small for n"
    )


def _fix_signs(V, tiny=1e-12):
    V = V.copy()
    for k in range(V.shape[1]):
        idx = np.flatnonzero(np.abs(V[:, k]) > tiny)
        if idx.size and V[idx[0], k] < 0:
            V[:, k] = -V[:, k]
    return V


def _order_columns(w, V, tie_tol):
    order = np.argsort(w, kind="stable")
    w = w[order]
    V = V[:, order]
    # ties: equal-eigenvalue runs are reordered lexicographically by eigenvector
    start = 0
    n = w.size
    while start < n:
        stop = start + 1
        while stop < n and w[stop] - w[stop - 1] <= tie_tol:
            stop += 1
        if stop - start > 1:
            cols = [tuple(V[:, k]) for k in range(start, stop)]
            perm = sorted(range(len(cols)), key=cols.__getitem__)
            V[:, start:stop] = V[:, [start + k for k in perm]]
        start = stop
    return w, V


def spectral_decompose(m, backend=None) -> SpectralDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Eigenvalues come back ascending.  Each eigenvector's first component
    with magnitude above 1e-12 is positive, and runs of equal eigenvalues
    (within 1e-12 of the spectral radius) are ordered lexicographically by
    their eigenvectors.
    """
    A = np.array(m, dtype=np.float64, copy=True)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    scale = float(np.abs(A).max()) if A.size else 0.0
    if np.abs(A - A.T).max(initial=0.0) > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise SymmetryError("matrix is not symmetric within 1e-10 relative tolerance")
    A = 0.5 * (A + A.T)
    kern = kernels.get_backend(backend)
    w, V, sweeps, _ = kern.jacobi_eigh(A, JACOBI_TOL, JACOBI_MAX_SWEEPS)
    V = _fix_signs(np.asarray(V))
    w, V = _order_columns(np.asarray(w), V, JACOBI_TOL * max(scale, np.finfo(float).tiny))
    return SpectralDecomposition(w, V, int(sweeps))
