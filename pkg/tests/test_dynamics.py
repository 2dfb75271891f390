import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from consensus_topology.dynamics import (
    DynamicsConfig,
    SnapshotSet,
    column_rng,
    generate_snapshots,
    load_snapshots,
    provenance_path,
    run_dynamics,
    save_snapshots,
    step,
)
from consensus_topology.errors import DimensionError, ParseError, RateError
from consensus_topology.graph import Graph, build_laplacian, erdos_renyi

from conftest import path_laplacian

K2 = build_laplacian(Graph(2, ((0, 1, 1.0),)))
K5 = build_laplacian(Graph(5, tuple((i, j, 1.0) for i in range(5) for j in range(i + 1, 5))))


def product_form(x0, rates, L):
    dec = L.decomposition
    V, lam = dec.eigenvectors, dec.eigenvalues
    h = np.prod([1.0 - r * lam for r in rates], axis=0) if len(rates) else np.ones_like(lam)
    return V @ (h * (V.T @ x0))


class TestStep:
    def test_k2_hand_computed(self):
        np.testing.assert_allclose(step([1.0, -1.0], 0.25, K2), [0.5, -0.5], rtol=0, atol=1e-15)

    def test_tiny_rate_is_identity(self):
        x = np.array([0.3, -2.0, 1.5])
        np.testing.assert_allclose(step(x, 1e-15, path_laplacian(3)), x, rtol=1e-12)

    @pytest.mark.parametrize("rate", [0.0, -0.1, 0.5 + 1e-9, 1.0])
    def test_rate_error(self, rate):
        # lambda_max(K2) = 2, so valid rates lie in (0, 0.5)
        with pytest.raises(RateError):
            step([1.0, 0.0], rate, K2)

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            step([1.0, 0.0, 0.0], 0.1, K2)

    @given(st.integers(0, 2**31), st.floats(0.001, 0.999))
    def test_mean_preserved(self, seed, frac):
        L = build_laplacian(erdos_renyi(7, 0.5, "uniform(0.5,1.5)", seed))
        x = np.random.default_rng(seed).standard_normal(7)
        y = step(x, frac / L.lambda_max, L)
        assert abs(y.mean() - x.mean()) <= 1e-12


class TestRunDynamics:
    def test_empty_rates(self):
        x = np.array([1.0, 2.0])
        np.testing.assert_array_equal(run_dynamics(x, [], K2), x)

    def test_path_two_steps_product_form(self):
        L = path_laplacian(3)
        x = np.array([1.0, -2.0, 0.5])
        rates = [0.2, 0.3]
        np.testing.assert_allclose(run_dynamics(x, rates, L), product_form(x, rates, L), atol=1e-12)
        np.testing.assert_allclose(run_dynamics(x, rates, L), step(step(x, 0.2, L), 0.3, L), atol=0)

    def test_consensus_limit(self):
        L = build_laplacian(erdos_renyi(10, 0.4, seed=1))
        x = np.random.default_rng(0).standard_normal(10)
        y = run_dynamics(x, [0.9 / L.lambda_max] * 10_000, L)
        np.testing.assert_allclose(y, x.mean(), atol=1e-6)

    def test_bad_rate_anywhere(self):
        with pytest.raises(RateError):
            run_dynamics([1.0, 0.0], [0.1, 0.7], K2)


class TestGenerateSnapshots:
    def test_deterministic_and_seed_sensitive(self):
        L = path_laplacian(5)
        a = generate_snapshots(L, 50, DynamicsConfig(seed=3)).observations
        b = generate_snapshots(L, 50, DynamicsConfig(seed=3)).observations
        c = generate_snapshots(L, 50, DynamicsConfig(seed=4)).observations
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_columns_are_independent_of_M(self):
        L = path_laplacian(5)
        a = generate_snapshots(L, 10, DynamicsConfig(seed=3)).observations
        b = generate_snapshots(L, 25, DynamicsConfig(seed=3)).observations
        np.testing.assert_array_equal(a, b[:, :10])

    def test_single_column_matches_run_dynamics(self):
        L = path_laplacian(4)
        ss = generate_snapshots(L, 1, DynamicsConfig(seed=9), keep_provenance=True)
        prov = ss.provenance
        assert ss.M == 1 and prov.durations[0] in (3, 4, 5)
        np.testing.assert_array_equal(ss.observations[:, 0],
                                      run_dynamics(prov.inputs[:, 0], prov.rates[0], L))
        rng = column_rng(9, 0)
        np.testing.assert_array_equal(prov.inputs[:, 0], rng.standard_normal(4))

    def test_provenance_recomputes_every_column(self):
        ss = generate_snapshots(K5, 10_000, DynamicsConfig(seed=1), keep_provenance=True)
        prov = ss.provenance
        lmax = K5.lambda_max
        worst = 0.0
        for k in range(ss.M):
            rates = prov.rates[k]
            assert len(rates) == prov.durations[k]
            assert all(0 < r * lmax < 1 for r in rates)
            y = product_form(prov.inputs[:, k], rates, K5)
            worst = max(worst, float(np.linalg.norm(ss.observations[:, k] - y)))
        assert worst <= 1e-9
        assert set(prov.durations) == {3, 4, 5}

    def test_white_noise_pass_through(self):
        # step sizes near zero leave x untouched, so E[y y^T] = sigma^2 I
        sigma = 1.5
        cfg = DynamicsConfig(sigma=sigma, duration_set=(1,), rate_policy="fixed", rates=(1e-15,), seed=2)
        Y = generate_snapshots(K5, 20_000, cfg).observations
        S = Y @ Y.T / Y.shape[1]
        target = sigma**2 * np.eye(5)
        assert np.linalg.norm(S - target) <= 0.05 * np.linalg.norm(target)

    def test_fixed_rates_cycle(self):
        cfg = DynamicsConfig(duration_set=(5,), rate_policy="fixed", rates=(0.1, 0.2), seed=0)
        ss = generate_snapshots(K2, 2, cfg, keep_provenance=True)
        assert ss.provenance.rates[0] == (0.1, 0.2, 0.1, 0.2, 0.1)

    def test_fixed_rate_validated(self):
        cfg = DynamicsConfig(rate_policy="fixed", rates=(0.9,))
        with pytest.raises(RateError):
            generate_snapshots(K2, 3, cfg)

    @pytest.mark.parametrize("kw", [dict(sigma=0), dict(duration_set=()), dict(duration_set=(0, 3)),
                                    dict(rate_policy="gauss"), dict(rate_policy="fixed"), dict(rho=0.6)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            DynamicsConfig(**kw)

    def test_M_validation(self):
        with pytest.raises(ValueError):
            generate_snapshots(K2, 0)


class TestSnapshotIO:
    @pytest.fixture
    def ss(self):
        return generate_snapshots(path_laplacian(4), 7, DynamicsConfig(seed=5), keep_provenance=True)

    def test_csv_round_trip_is_exact(self, tmp_path, ss):
        path = tmp_path / "y.csv"
        save_snapshots(ss, path, provenance=True)
        back = load_snapshots(path, provenance=True)
        np.testing.assert_array_equal(back.observations, ss.observations)
        np.testing.assert_array_equal(back.provenance.inputs, ss.provenance.inputs)
        assert back.provenance.rates == ss.provenance.rates
        assert len(path.read_text().splitlines()) == 4
        assert provenance_path(path).endswith(".provenance.json")

    def test_json_round_trip(self, tmp_path, ss):
        path = tmp_path / "y.json"
        save_snapshots(ss, path, extra={"note": "x"})
        doc = json.loads(path.read_text())
        assert (doc["n"], doc["M"], doc["seed"], doc["config"]) == (4, 7, 5, {"note": "x"})
        back = load_snapshots(path)
        np.testing.assert_array_equal(back.observations, ss.observations)
        assert back.sigma == 1.0

    def test_provenance_required(self, tmp_path):
        ss = SnapshotSet(np.ones((2, 2)))
        with pytest.raises(ValueError):
            save_snapshots(ss, tmp_path / "y.csv", provenance=True)

    @pytest.mark.parametrize("name,text", [("y.csv", "1,2\n3,x\n"), ("y.json", "{"),
                                           ("y.json", '{"n": 2, "M": 3, "data": [[1, 2]]}')])
    def test_parse_errors(self, tmp_path, name, text):
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(ParseError):
            load_snapshots(path)

    def test_snapshot_set_validation(self):
        with pytest.raises(DimensionError):
            SnapshotSet(np.ones(3))
        with pytest.raises(ValueError):
            SnapshotSet(np.array([[1.0, np.nan]]))
