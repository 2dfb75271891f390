import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from consensus_topology.dynamics import DynamicsConfig, SnapshotSet, generate_snapshots
from consensus_topology.errors import DimensionError, DomainError, ZeroParamError
from consensus_topology.graph import Graph, build_laplacian, erdos_renyi
from consensus_topology.spectral import (
    SpectralTemplate,
    SubExpParams,
    diagonalization_diagnostics,
    exact_template,
    extract_template,
    sample_covariance,
    sample_size_bound,
    subexp_product_params,
    subexp_square_params,
    subexp_sum,
    subexp_tail_bound,
)

from conftest import random_orthonormal


class TestSampleCovariance:
    def test_single_snapshot(self):
        np.testing.assert_array_equal(sample_covariance(np.array([[1.0], [0.0]])), [[1, 0], [0, 0]])

    def test_identical_columns(self):
        y = np.array([1.0, -2.0, 0.5])
        np.testing.assert_allclose(sample_covariance(np.tile(y[:, None], 7)), np.outer(y, y), rtol=1e-15)

    def test_white_noise(self):
        Y = np.random.default_rng(0).standard_normal((4, 100_000))
        assert np.linalg.norm(sample_covariance(Y) - np.eye(4)) / 2.0 <= 0.05

    @given(st.integers(0, 2**31))
    def test_permutation_and_scale(self, seed):
        rng = np.random.default_rng(seed)
        Y = rng.standard_normal((5, 12))
        S = sample_covariance(Y)
        np.testing.assert_allclose(sample_covariance(Y[:, rng.permutation(12)]), S, atol=1e-13)
        np.testing.assert_allclose(sample_covariance(3.0 * Y), 9.0 * S, rtol=1e-12)
        np.testing.assert_array_equal(S, S.T)
        assert np.linalg.eigvalsh(S).min() >= -1e-12

    def test_rejects_bad_shape(self):
        with pytest.raises(DimensionError):
            sample_covariance(np.ones(4))


class TestTemplates:
    def test_k2_basis_angle(self):
        L = build_laplacian(Graph(2, ((0, 1, 1.0),)))
        t = extract_template(generate_snapshots(L, 20_000, DynamicsConfig(seed=0)))
        V = L.decomposition.eigenvectors
        # ascending sample eigenvalues pair with descending Laplacian eigenvalues
        for k in range(2):
            cos = abs(t.basis[:, k] @ V[:, 1 - k])
            assert math.degrees(math.acos(min(cos, 1.0))) <= 5.0

    def test_rank_deficient(self):
        L = build_laplacian(erdos_renyi(6, 0.6, seed=1))
        t = extract_template(generate_snapshots(L, 3, DynamicsConfig(seed=0)))
        assert t.M == 3 and not t.exact
        assert np.abs(t.sample_eigenvalues[:3]).max() <= 1e-10
        assert np.abs(t.basis.T @ t.basis - np.eye(6)).max() <= 1e-10

    @given(st.integers(0, 2**31), st.floats(0.1, 10.0))
    def test_invariants_and_scale_invariance(self, seed, c):
        Y = np.random.default_rng(seed).standard_normal((5, 40))
        t = extract_template(SnapshotSet(Y))
        assert np.abs(t.basis.T @ t.basis - np.eye(5)).max() <= 1e-10
        assert (np.diff(t.sample_eigenvalues) >= 0).all()
        assert t.sample_eigenvalues.min() >= -1e-10
        t2 = extract_template(SnapshotSet(c * Y))
        np.testing.assert_allclose(t2.basis, t.basis, atol=1e-8)

    def test_exact_template_convention(self, backend):
        L = build_laplacian(erdos_renyi(7, 0.5, "uniform(0.5,1.5)", 4))
        t = exact_template(L, backend=backend)
        dec = L.decomposition
        assert t.exact and t.M is None
        np.testing.assert_allclose(t.basis, dec.eigenvectors[:, ::-1], atol=1e-10)
        np.testing.assert_allclose(t.sample_eigenvalues, dec.eigenvalues[-1] - dec.eigenvalues[::-1],
                                   atol=1e-12)
        # the last column is the constant vector
        np.testing.assert_allclose(t.basis[:, -1], 1 / math.sqrt(7), atol=1e-12)

    def test_template_validation(self):
        with pytest.raises(DimensionError):
            SpectralTemplate(np.eye(3), np.zeros(2))


class TestDiagnostics:
    def test_exact_diagonal(self):
        rng = np.random.default_rng(0)
        V = random_orthonormal(5, rng)
        S = (V * np.array([5.0, 4.0, 3.0, 2.0, 1.0])) @ V.T
        d = diagonalization_diagnostics(S, V)
        assert d.offdiag_ratio <= 1e-10
        assert d.ordering_violations == 0

    def test_identity_counts_ties(self):
        d = diagonalization_diagnostics(np.eye(5), np.eye(5))
        assert d.ordering_violations == 10
        assert d.offdiag_ratio == 0.0

    def test_reversed_order(self):
        d = diagonalization_diagnostics(np.diag([1.0, 2.0, 3.0]), np.eye(3))
        assert d.ordering_violations == 3

    @given(st.integers(0, 2**31))
    def test_ranges(self, seed):
        rng = np.random.default_rng(seed)
        Y = rng.standard_normal((6, 10))
        d = diagonalization_diagnostics(sample_covariance(Y), random_orthonormal(6, rng))
        assert 0.0 <= d.offdiag_ratio <= 1.0
        assert 0 <= d.ordering_violations <= 15

    def test_record(self):
        rec = diagonalization_diagnostics(np.eye(2), np.eye(2)).to_record(M=10, seed=3)
        assert rec == {"M": 10, "seed": 3, "offdiag_ratio": 0.0, "ordering_violations": 1}

    def test_errors(self):
        with pytest.raises(DimensionError):
            diagonalization_diagnostics(np.eye(3), np.eye(2))
        with pytest.raises(ValueError):
            diagonalization_diagnostics(np.eye(2), np.array([[1.0, 0.0], [0.0, 2.0]]))

    def test_trend_on_weighted_graph(self):
        L = build_laplacian(erdos_renyi(10, 0.4, "uniform(0.5,1.5)", 0))
        V = L.decomposition.eigenvectors
        med = []
        for M in (100, 10_000):
            r = [diagonalization_diagnostics(
                     sample_covariance(generate_snapshots(L, M, DynamicsConfig(seed=s))), V).offdiag_ratio
                 for s in range(20)]
            med.append(np.median(r))
        assert med[1] < med[0]


class TestSubExponential:
    def test_product_params(self):
        p = subexp_product_params(1, 1)
        assert p.nu == pytest.approx(math.sqrt(2), rel=1e-15) and p.b == p.nu
        p = subexp_product_params(2, 3)
        assert p.nu == pytest.approx(6 * math.sqrt(2), rel=1e-15) and p.b == p.nu

    def test_square_params(self):
        assert subexp_square_params(1) == SubExpParams(2, 4)
        assert subexp_square_params(0.5) == SubExpParams(0.5, 1)

    @pytest.mark.parametrize("fn,args", [(subexp_product_params, (0, 1)), (subexp_product_params, (1, -1)),
                                         (subexp_square_params, (0,))])
    def test_param_domain(self, fn, args):
        with pytest.raises(DomainError):
            fn(*args)

    def test_negative_params(self):
        with pytest.raises(DomainError):
            SubExpParams(-1, 1)

    def test_square_mean_monte_carlo(self):
        x = np.random.default_rng(1).normal(0, 2, 1_000_000)
        sq = x * x
        assert abs(sq.mean() - 4.0) <= 3 * sq.std() / math.sqrt(sq.size)

    def test_product_mgf_monte_carlo(self):
        rng = np.random.default_rng(2)
        l = 0.5
        z = np.exp(l * rng.standard_normal(1_000_000) * rng.standard_normal(1_000_000))
        bound = subexp_product_params(1, 1).mgf_bound(l)
        assert bound == pytest.approx(math.exp(2 * l * l / 2))
        assert z.mean() <= bound + 3 * z.std() / math.sqrt(z.size)

    @given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10), st.floats(0, 10),
           st.floats(0, 10), st.floats(0, 10))
    def test_sum_composition(self, a, b, c, d, e, f):
        p, q, r = SubExpParams(a, b), SubExpParams(c, d), SubExpParams(e, f)
        pq = subexp_sum(p, q)
        assert pq == subexp_sum(q, p)
        left, right = subexp_sum(pq, r), subexp_sum(p, subexp_sum(q, r))
        assert left.nu == pytest.approx(right.nu, rel=1e-12, abs=1e-300)
        assert left.b == right.b

    def test_tail_bound_examples(self):
        one = SubExpParams(1, 1)
        assert subexp_tail_bound(one, 0) == 2.0
        assert subexp_tail_bound(one, 1) == pytest.approx(2 * math.exp(-0.5), rel=1e-15)
        assert subexp_tail_bound(one, 2) == pytest.approx(2 * math.exp(-1), rel=1e-15)

    @given(st.floats(0.01, 100), st.floats(0.01, 100))
    def test_tail_bound_continuous_at_branch(self, nu, b):
        p = SubExpParams(nu, b)
        lb = nu * nu / b
        below = subexp_tail_bound(p, lb)
        above = subexp_tail_bound(p, math.nextafter(lb, math.inf))
        assert abs(below - above) <= 1e-12

    def test_tail_bound_errors(self):
        with pytest.raises(ZeroParamError):
            subexp_tail_bound(SubExpParams(0, 1), 1.0)
        with pytest.raises(ZeroParamError):
            subexp_tail_bound(SubExpParams(1, 0), 1.0)
        assert subexp_tail_bound(SubExpParams(0, 0), 0.0) == 2.0
        with pytest.raises(DomainError):
            subexp_tail_bound(SubExpParams(1, 1), -1.0)


class TestSampleSizeBound:
    def test_reference_value(self):
        with mpmath.workdps(50):
            exact = int(mpmath.ceil(mpmath.mpf(8) * 4 / 1 * mpmath.log(mpmath.mpf(64) / mpmath.mpf("0.05"))))
        assert exact == 229
        assert sample_size_bound(1, 2, 32, 0.05) == 229

    @given(st.floats(0.1, 3), st.floats(2, 10), st.integers(1, 1000), st.floats(0.001, 0.999))
    def test_matches_high_precision(self, tau, beta, n, delta):
        with mpmath.workdps(60):
            v = 8 * mpmath.mpf(beta) ** 2 / mpmath.mpf(tau) ** 4 * mpmath.log(2 * n / mpmath.mpf(delta))
            exact = int(mpmath.ceil(v))
            # skip draws that sit within rounding distance of an integer
            if abs(v - mpmath.nint(v)) < 1e-9 * v:
                return
        assert sample_size_bound(tau, beta, n, delta) == exact

    def test_monotone_in_delta_and_tau_scaling(self):
        vals = [sample_size_bound(1, 2, 10, d) for d in (0.01, 0.1, 0.5, 0.9)]
        assert vals == sorted(vals, reverse=True)
        raw = lambda tau: 8 * 4 / tau**4 * math.log(2 * 10 / 0.1)  # noqa: E731
        assert raw(0.5) == pytest.approx(16 * raw(1.0))
        assert sample_size_bound(0.5, 2, 10, 0.1) == math.ceil(raw(0.5))

    @pytest.mark.parametrize("args", [(0, 2, 10, 0.1), (1, 1.5, 10, 0.1), (1, 2, 0, 0.1),
                                      (1, 2, 2.5, 0.1), (1, 2, 10, 0.0), (1, 2, 10, 1.0)])
    def test_domain(self, args):
        with pytest.raises(DomainError):
            sample_size_bound(*args)
