import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from consensus_topology.errors import DimensionError, DomainError
from consensus_topology.experiments import (
    CSV_FIELDS,
    GridReport,
    TrialResult,
    derive_seed,
    long_format_csv,
    read_trials_csv,
    relative_error,
    run_er_grid,
    run_error_vs_M,
    summarize_by_M,
    support_overlap,
    trials_to_csv,
    trials_to_jsonl,
    write_report,
    write_trials,
)
from consensus_topology.graph import Graph, build_laplacian, erdos_renyi
from consensus_topology.recovery import RecoveryConfig

from conftest import path_laplacian


class TestRelativeError:
    def test_examples(self):
        L = path_laplacian(4).matrix
        assert relative_error(L, L) == (0.0, 0.0)
        raw, resc = relative_error(2 * L, L)
        assert raw == pytest.approx(1.0) and resc == pytest.approx(0.0, abs=1e-15)
        assert relative_error(np.zeros_like(L), L) == (1.0, 1.0)

    @given(st.integers(0, 2**31), st.floats(0.01, 100))
    def test_invariants(self, seed, c):
        rng = np.random.default_rng(seed)
        L = build_laplacian(erdos_renyi(5, 0.6, "uniform(0.5,1.5)", seed)).matrix
        A = rng.standard_normal((5, 5))
        raw, resc = relative_error(A, L)
        assert resc <= raw + 1e-12
        assert relative_error(c * L, L)[1] == pytest.approx(0.0, abs=1e-12)

    def test_errors(self):
        with pytest.raises(DimensionError):
            relative_error(np.eye(2), np.eye(3))
        with pytest.raises(DomainError):
            relative_error(np.eye(2), np.zeros((2, 2)))


class TestSupportOverlap:
    def test_identity_and_permuted_weights(self):
        L = build_laplacian(erdos_renyi(6, 0.5, "uniform(0.5,1.5)", 1))
        E = L.to_graph().num_edges
        assert support_overlap(L, L) == E
        g = L.to_graph()
        w = [e[2] for e in g.edges][::-1]
        permuted = build_laplacian(Graph(6, tuple((i, j, x) for (i, j, _), x in zip(g.edges, w))))
        assert support_overlap(permuted, L) == E

    def test_ties_go_lexicographic(self):
        # truth: edges (0,2) only; estimate has equal magnitude on (0,1) and (0,2)
        truth = build_laplacian(Graph(3, ((0, 2, 1.0),)))
        est = build_laplacian(Graph(3, ((0, 1, 1.0), (0, 2, 1.0))))
        assert support_overlap(est, truth) == 0
        truth = build_laplacian(Graph(3, ((0, 1, 1.0),)))
        assert support_overlap(est, truth) == 1

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            support_overlap(np.eye(2), np.eye(3))


def test_derive_seed():
    assert derive_seed(0, 10, 1, 2) == derive_seed(0, 10, 1, 2)
    assert len({derive_seed(0, 10, 1, t) for t in range(50)}) == 50
    assert derive_seed(0, 1) != derive_seed(1, 1)
    assert 0 <= derive_seed(7, 3) < 2**32


@pytest.fixture(scope="module")
def small_grid():
    return run_er_grid((6, 8), (0.4, 0.7), trials=3, exact_basis=True, seed=5)


class TestErGrid:
    def test_structure(self, small_grid):
        rep = small_grid
        assert len(rep.results) == 12
        rates = rep.cell_rates()
        assert set(rates) == {(6, 0.4), (6, 0.7), (8, 0.4), (8, 0.7)}
        assert all(0.0 <= r <= 1.0 for r in rates.values())
        assert rep.overall_rate() == pytest.approx(np.mean(list(rates.values())))
        assert rep.overall_rate(5e-2) >= rep.overall_rate()
        for r in rep.results:
            assert r.M is None and r.M_label == "exact-basis"
            assert 0 <= r.support_overlap <= r.true_edge_count
            assert r.rel_error_rescaled <= r.rel_error_raw + 1e-12
            assert r.epsilon1 == 0.0
            assert r.success == (r.rel_error_rescaled < 2e-2)

    def test_deterministic_and_recomputable(self, small_grid):
        again = run_er_grid((6, 8), (0.4, 0.7), trials=3, exact_basis=True, seed=5)
        assert trials_to_csv([_no_time(r) for r in again.results]) == \
            trials_to_csv([_no_time(r) for r in small_grid.results])
        rebuilt = GridReport(small_grid.n_list, small_grid.p_list, 3, 2e-2, True,
                             read_trials_csv(trials_to_csv(small_grid.results)))
        assert rebuilt.cell_rates() == small_grid.cell_rates()

    def test_sampled_mode_and_callback(self):
        seen = []
        rep = run_er_grid((6,), (0.6,), trials=2, exact_basis=False, seed=1, M=2000,
                          reweight_iters=0, on_result=seen.append)
        assert len(seen) == 2
        assert all(r.M == 2000 and r.epsilon1 > 0 for r in rep.results if r.error is None)

    def test_failed_trials_are_recorded(self):
        rep = run_er_grid((6,), (0.6,), trials=2, exact_basis=True, seed=1,
                          recovery=RecoveryConfig(max_iters=5), reweight_iters=0)
        for r in rep.results:
            assert r.error.startswith("NonConvergenceError")
            assert not r.success and r.rel_error_rescaled == 1.0
        assert rep.overall_rate() == 0.0

    def test_report_json(self, small_grid, tmp_path):
        write_report(small_grid, tmp_path / "r.json", extra={"seed": 5})
        doc = json.loads((tmp_path / "r.json").read_text())
        assert doc["config"] == {"seed": 5}
        assert len(doc["cells"]) == 4 and "0.05" in doc["by_threshold"]

    def test_trials_validation(self):
        with pytest.raises(DomainError):
            run_er_grid((6,), (0.5,), trials=0)


def _no_time(r):
    from dataclasses import replace
    return replace(r, runtime_seconds=None)


@pytest.fixture(scope="module")
def results():
    g = erdos_renyi(8, 0.4, seed=0)
    return g, run_error_vs_M(g, (100, 10000), trials=3, seed=2)


class TestErrorVsM:
    def test_rows_and_trend(self, results):
        g, res = results
        assert len(res) == 6
        assert {r.M for r in res} == {100, 10000}
        s = summarize_by_M(res)
        assert s[10000]["median_rel_error_rescaled"] < s[100]["median_rel_error_rescaled"]
        assert all(r.true_edge_count == g.num_edges for r in res)

    def test_trial_reproducible(self, results):
        g, res = results
        again = run_error_vs_M(g, (100,), trials=1, seed=2)[0]
        first = res[0]
        assert (again.seed, again.rel_error_raw, again.support_overlap) == \
            (first.seed, first.rel_error_raw, first.support_overlap)

    def test_outputs(self, results, tmp_path):
        _, res = results
        text = trials_to_csv(res)
        assert text.splitlines()[0].split(",") == CSV_FIELDS
        back = read_trials_csv(text)
        assert [r.to_dict() for r in back] == [r.to_dict() for r in res]
        lines = trials_to_jsonl(res).splitlines()
        assert len(lines) == 6 and json.loads(lines[0])["M"] == "100"
        long = long_format_csv(res).splitlines()
        assert long[0] == "M,seed,metric,value" and len(long) == 1 + 3 * 6
        write_trials(res, tmp_path / "t.jsonl")
        write_trials(res, tmp_path / "t.csv")
        assert (tmp_path / "t.csv").read_text() == text

    @pytest.mark.parametrize("M_list", [(), (100, 10), (0, 10)])
    def test_validation(self, M_list):
        with pytest.raises(DomainError):
            run_error_vs_M(erdos_renyi(5, 0.6, seed=0), M_list, trials=1)


def test_trial_result_round_trip():
    r = TrialResult(5, None, "net", None, 1, 0.5, 0.1, False, 3, 4, 0.25)
    assert TrialResult.from_dict(r.to_dict()) == r
