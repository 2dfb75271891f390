"""Metrics and the two experiment harnesses (ER success grid, error versus M).

Seeds: every trial gets an integer seed from
``SeedSequence(master_seed, spawn_key=key).generate_state(1)[0]`` where
``key`` is ``(n, p_index, trial)`` for the grid and ``(M, trial)`` for the
error-versus-M sweep.  Inside a trial the graph uses ``derive_seed(trial_seed, 0)``
and the snapshot simulation ``derive_seed(trial_seed, 1)``.
"""

from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .dynamics import DynamicsConfig, generate_snapshots
from .errors import DimensionError, DomainError, TopologyError, ZeroMatrixError
from .graph import Graph, Laplacian, build_laplacian, erdos_renyi
from .recovery import RecoveryConfig, RecoveryProblem, rescale_to_reference, solve_reweighted
from .spectral import exact_template, extract_template
from .util import atomic_write_json, atomic_write_text

SUCCESS_THRESHOLD = 2e-2
LOOSE_THRESHOLD = 5e-2
DEFAULT_N = (10, 20, 30)
DEFAULT_P = (0.1, 0.3, 0.5)
DEFAULT_M = (10, 100, 1000, 10000)
DEFAULT_REWEIGHT = 3


def derive_seed(master, *key):
    return int(np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
               .generate_state(1)[0])


def _matrix(L):
    return L.matrix if isinstance(L, Laplacian) else np.asarray(L, dtype=np.float64)


def relative_error(L_est, L_true):
    """``(raw, rescaled)`` Frobenius errors relative to ``||L_true||_F``.

    ``rescaled`` first applies the least-squares scale; an all-zero estimate
    scores ``rescaled = raw = 1``.
    """
    A, B = _matrix(L_est), _matrix(L_true)
    if A.shape != B.shape:
        raise DimensionError(f"shapes {A.shape} and {B.shape} differ")
    ref = float(np.linalg.norm(B))
    if ref == 0.0:
        raise DomainError("reference Laplacian is zero")
    raw = float(np.linalg.norm(A - B)) / ref
    try:
        scaled, _ = rescale_to_reference(A, B)
    except ZeroMatrixError:
        return raw, raw
    return raw, min(float(np.linalg.norm(scaled - B)) / ref, raw)


def support_overlap(L_est, L_true):
    """True edges among the ``|E|`` largest off-diagonal magnitudes of ``L_est``.

    Ties at equal magnitude go to the lexicographically smaller ``(i, j)``.
    """
    A, B = _matrix(L_est), _matrix(L_true)
    if A.shape != B.shape:
        raise DimensionError(f"shapes {A.shape} and {B.shape} differ")
    I, J = np.triu_indices(A.shape[0], 1)
    truth = B[I, J] != 0
    k = int(truth.sum())
    order = np.argsort(-np.abs(A[I, J]), kind="stable")
    return int(truth[order[:k]].sum())


@dataclass
class TrialResult:
    n: int
    p: float | None
    dataset: str | None
    M: int | None
    seed: int
    rel_error_raw: float
    rel_error_rescaled: float
    success: bool
    support_overlap: int
    true_edge_count: int
    runtime_seconds: float
    epsilon1: float | None = None
    iterations: int | None = None
    error: str | None = None

    @property
    def M_label(self):
        return "exact-basis" if self.M is None else str(self.M)

    def to_dict(self):
        d = asdict(self)
        d["M"] = self.M_label
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["M"] = None if d["M"] in ("exact-basis", None, "") else int(d["M"])
        return cls(**d)


@dataclass
class GridReport:
    n_list: tuple
    p_list: tuple
    trials: int
    threshold: float
    exact_basis: bool
    results: list = field(default_factory=list, repr=False)

    def cell_rates(self, threshold=None):
        """``{(n, p): mean success}`` at ``threshold`` (default: the report's)."""
        t = self.threshold if threshold is None else threshold
        out = {}
        for n in self.n_list:
            for p in self.p_list:
                cell = [r for r in self.results if r.n == n and r.p == p]
                if cell:
                    out[(n, p)] = float(np.mean([_succeeds(r, t) for r in cell]))
        return out

    def overall_rate(self, threshold=None):
        t = self.threshold if threshold is None else threshold
        if not self.results:
            return 0.0
        return float(np.mean([_succeeds(r, t) for r in self.results]))

    def to_dict(self, extra_thresholds=(LOOSE_THRESHOLD,)):
        doc = {
            "n_list": list(self.n_list),
            "p_list": list(self.p_list),
            "trials": self.trials,
            "exact_basis": self.exact_basis,
            "threshold": self.threshold,
            "overall_rate": self.overall_rate(),
            "cells": [{"n": n, "p": p, "rate": r} for (n, p), r in self.cell_rates().items()],
        }
        doc["by_threshold"] = {
            repr(t): {"overall_rate": self.overall_rate(t),
                      "cells": [{"n": n, "p": p, "rate": r}
                                for (n, p), r in self.cell_rates(t).items()]}
            for t in extra_thresholds
        }
        return doc


def _succeeds(r, threshold):
    return r.error is None and r.rel_error_rescaled < threshold


def _score(sol, L, threshold):
    raw, resc = relative_error(sol.L_star, L)
    return raw, resc, resc < threshold, support_overlap(sol.L_star, L)


def _run_trial(L, template, rcfg, reweight, threshold, meta):
    t0 = time.perf_counter()
    E = int(np.count_nonzero(L.edge_weights()))
    try:
        sol = solve_reweighted(RecoveryProblem(template, rcfg), 1 + reweight)
        raw, resc, ok, ov = _score(sol, L, threshold)
        return TrialResult(**meta, rel_error_raw=raw, rel_error_rescaled=resc, success=ok,
                           support_overlap=ov, true_edge_count=E,
                           runtime_seconds=time.perf_counter() - t0, epsilon1=sol.epsilon1,
                           iterations=sol.diagnostics.get("total_iterations"))
    except TopologyError as exc:
        return TrialResult(**meta, rel_error_raw=1.0, rel_error_rescaled=1.0, success=False,
                           support_overlap=0, true_edge_count=E,
                           runtime_seconds=time.perf_counter() - t0,
                           error=f"{type(exc).__name__}: {exc}")


def _grid_trial(args):
    n, p, pi, t, seed, exact_basis, M, weight_dist, rcfg, dcfg, reweight, threshold = args
    tseed = derive_seed(seed, n, pi, t)
    g = erdos_renyi(n, p, weight_dist, derive_seed(tseed, 0))
    L = build_laplacian(g)
    meta = dict(n=n, p=p, dataset=None, M=None if exact_basis else M, seed=tseed)
    if exact_basis:
        template = exact_template(L, backend=rcfg.backend)
        rcfg = replace(rcfg, epsilon1=0.0, eta=1)
    else:
        ss = generate_snapshots(L, M, replace(dcfg, seed=derive_seed(tseed, 1)))
        template = extract_template(ss, backend=rcfg.backend)
    return _run_trial(L, template, rcfg, reweight, threshold, meta)


def _map(fn, items, jobs, on_result):
    out = []
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            for r in ex.map(fn, items):
                out.append(r)
                if on_result:
                    on_result(r)
    else:
        for item in items:
            r = fn(item)
            out.append(r)
            if on_result:
                on_result(r)
    return out


def run_er_grid(n_list=DEFAULT_N, p_list=DEFAULT_P, trials=10, exact_basis=True, seed=0,
                M=10000, weight_dist="unit", recovery=None, dynamics=None,
                reweight_iters=DEFAULT_REWEIGHT, threshold=SUCCESS_THRESHOLD,
                jobs=1, on_result=None) -> GridReport:
    """Success rate of recovery on connected ER graphs for every ``(n, p)`` cell.

    With ``exact_basis`` the template is the true eigenbasis and the program
    runs with ``epsilon1 = 0``, ``eta = 1``.  Otherwise ``M`` snapshots are
    simulated and ``recovery`` (default: auto epsilon1, eta 5) is used.
    Failed solves are kept as unsuccessful trials with the error recorded.
    """
    if int(trials) < 1:
        raise DomainError(f"trials must be at least 1, got {trials}")
    rcfg = recovery or RecoveryConfig()
    dcfg = dynamics or DynamicsConfig()
    items = [(int(n), float(p), pi, t, seed, exact_basis, M, weight_dist, rcfg, dcfg,
              int(reweight_iters), threshold)
             for n in n_list for pi, p in enumerate(p_list) for t in range(int(trials))]
    results = _map(_grid_trial, items, jobs, on_result)
    return GridReport(tuple(int(n) for n in n_list), tuple(float(p) for p in p_list),
                      int(trials), threshold, bool(exact_basis), results)


def _m_trial(args):
    g, dataset, M, t, seed, rcfg, dcfg, reweight, threshold = args
    L = build_laplacian(g)
    tseed = derive_seed(seed, M, t)
    ss = generate_snapshots(L, M, replace(dcfg, seed=derive_seed(tseed, 1)))
    template = extract_template(ss, backend=rcfg.backend)
    meta = dict(n=g.n, p=None, dataset=dataset, M=M, seed=tseed)
    return _run_trial(L, template, rcfg, reweight, threshold, meta)


def run_error_vs_M(graph: Graph, M_list=DEFAULT_M, trials=10, seed=0, recovery=None,
                   dynamics=None, reweight_iters=0, threshold=SUCCESS_THRESHOLD,
                   dataset=None, jobs=1, on_result=None):
    """Recovery error on a fixed graph as the number of snapshots grows.

    ``recovery`` defaults to ``eta = 5`` with automatic epsilon1.
    """
    M_list = [int(m) for m in M_list]
    if not M_list or any(a >= b for a, b in zip(M_list, M_list[1:])) or M_list[0] < 1:
        raise DomainError(f"M_list must be nonempty, positive and strictly ascending, got {M_list}")
    if int(trials) < 1:
        raise DomainError(f"trials must be at least 1, got {trials}")
    rcfg = recovery or RecoveryConfig(eta=min(5, graph.n - 1))
    dcfg = dynamics or DynamicsConfig()
    items = [(graph, dataset, M, t, seed, rcfg, dcfg, int(reweight_iters), threshold)
             for M in M_list for t in range(int(trials))]
    return _map(_m_trial, items, jobs, on_result)


def summarize_by_M(results):
    """Per-M medians of rescaled error and support overlap, plus full-overlap counts."""
    out = {}
    for M in sorted({r.M for r in results}, key=lambda m: -1 if m is None else m):
        rs = [r for r in results if r.M == M]
        out[M] = {
            "median_rel_error_rescaled": float(np.median([r.rel_error_rescaled for r in rs])),
            "median_rel_error_raw": float(np.median([r.rel_error_raw for r in rs])),
            "median_support_overlap": float(np.median([r.support_overlap for r in rs])),
            "full_overlap_trials": sum(r.support_overlap == r.true_edge_count for r in rs),
            "trials": len(rs),
        }
    return out


# output

CSV_FIELDS = [f.name for f in fields(TrialResult)]


def trials_to_csv(results):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in results:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v)
                    for k, v in r.to_dict().items()})
    return buf.getvalue()


def trials_to_jsonl(results):
    return "".join(json.dumps(r.to_dict(), sort_keys=True) + "\n" for r in results)


def long_format_csv(results):
    """One row per (M, trial, metric) for plotting error-versus-M curves."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["M", "seed", "metric", "value"])
    for r in results:
        for metric in ("rel_error_raw", "rel_error_rescaled", "support_overlap"):
            v = getattr(r, metric)
            w.writerow([r.M_label, r.seed, metric, repr(v) if isinstance(v, float) else v])
    return buf.getvalue()


def write_trials(results, path):
    text = trials_to_jsonl(results) if str(path).endswith((".jsonl", ".ndjson")) else trials_to_csv(results)
    atomic_write_text(path, text)


def write_report(report, path, extra=None):
    doc = report.to_dict() if isinstance(report, GridReport) else report
    if extra:
        doc = dict(doc, config=extra)
    atomic_write_json(path, doc)


def read_trials_csv(text):
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        d = {}
        for f in fields(TrialResult):
            v = row[f.name]
            if v == "":
                d[f.name] = None
            elif f.name in ("n", "seed", "support_overlap", "true_edge_count", "iterations"):
                d[f.name] = int(v)
            elif f.name == "success":
                d[f.name] = v == "True"
            elif f.name in ("dataset", "error", "M"):
                d[f.name] = v
            else:
                d[f.name] = float(v)
        out.append(TrialResult.from_dict(d))
    return out

