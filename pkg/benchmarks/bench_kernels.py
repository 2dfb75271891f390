"""Compare the compiled kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 20] [--repeat 3]

Prints the best wall time per kernel for each backend and the speedup.
"""

import argparse
import sys
import time

import numpy as np

from consensus_topology import kernels
from consensus_topology.graph import build_laplacian, erdos_renyi
from consensus_topology.recovery import RecoveryConfig, RecoveryProblem, clear_cache, solve
from consensus_topology.spectral import exact_template


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, seed):
    rng = np.random.default_rng(seed)
    L = build_laplacian(erdos_renyi(n, 0.3, "uniform(0.5,1.5)", seed))
    V = exact_template(L).basis
    I, J = np.triu_indices(n, 1)
    I, J = I.astype(np.intp), J.astype(np.intp)
    m = I.size
    G = np.ascontiguousarray(-V[I] * V[J])
    c = rng.random(m)
    cb = np.ascontiguousarray(G.T @ c)
    beta = rng.standard_normal(n) * n
    u, b, Y = rng.random(m), rng.random(n), rng.standard_normal((n, n))
    y = rng.random(m)
    tau = sigma = 0.1
    steps = 200

    def general(k):
        return lambda: k.general_halpern(V, I, J, c, 1, 1.0, True, 0.5, kernels.NORM_FROBENIUS,
                                         kernels.MODE_CONSTRAINED, tau, sigma, u.copy(), b.copy(),
                                         Y.copy(), u, b, Y, 1, steps)

    def reduced(k):
        return lambda: k.reduced_halpern(G, cb, 1, 1.0, tau, sigma, b.copy(), y.copy(), b, y, 1, steps)

    def recover(k):
        name = "compiled" if k is kernels.compiled_backend else "python"

        def run():
            clear_cache()
            solve(RecoveryProblem(exact_template(L, backend=name), RecoveryConfig(backend=name)))
        return run

    return [
        ("jacobi_eigh", lambda k: (lambda: k.jacobi_eigh(L.matrix))),
        ("project_ordering", lambda k: (lambda: k.project_ordering(beta, 2, 1.0, True))),
        (f"general_halpern x{steps}", general),
        (f"reduced_halpern x{steps}", reduced),
        ("solve (exact template)", recover),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if kernels.compiled_backend is None:
        print("compiled kernels not built; only the numpy backend is available", file=sys.stderr)
        return 1
    print(f"n={args.n}, best of {args.repeat}")
    print(f"{'kernel':<26}{'compiled [s]':>14}{'python [s]':>14}{'speedup':>10}")
    for name, make in cases(args.n, args.seed):
        tc = best_of(make(kernels.compiled_backend), args.repeat)
        tp = best_of(make(kernels.python_backend), args.repeat)
        print(f"{name:<26}{tc:>14.5f}{tp:>14.5f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
