"""Command-line entry point: ``consensus-topology <command> [options]``.

Exit codes: 0 ok, 2 invalid arguments, 3 unreadable or unwritable files,
4 infeasible program, 5 solver did not converge, 130 interrupted.

Options may also come from ``--config FILE`` (JSON object or ``key = value``
lines with optional ``[section]`` headers named after a command); flags given
on the command line always win.  Relative output paths are resolved against
``$CONSENSUS_TOPOLOGY_OUTDIR`` when it is set.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__, kernels
from .dynamics import DynamicsConfig, generate_snapshots, load_snapshots, save_snapshots
from .errors import (
    InfeasibleError,
    NonConvergenceError,
    ParseError,
    SearchError,
    TopologyError,
)
from .experiments import (
    CSV_FIELDS,
    DEFAULT_REWEIGHT,
    LOOSE_THRESHOLD,
    SUCCESS_THRESHOLD,
    derive_seed,
    long_format_csv,
    relative_error,
    run_er_grid,
    run_error_vs_M,
    summarize_by_M,
    support_overlap,
    trials_to_csv,
    trials_to_jsonl,
    write_report,
)
from .graph import build_laplacian, erdos_renyi
from .graphio import read_graph, write_graph
from .recovery import AUTO, RecoveryConfig, RecoveryProblem, recover
from .spectral import diagonalization_diagnostics, extract_template, sample_covariance
from .util import atomic_write_json, atomic_write_text, dumps

OUTDIR_ENV = "CONSENSUS_TOPOLOGY_OUTDIR"

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_INFEASIBLE, EXIT_NONCONVERGENCE = 0, 2, 3, 4, 5
EXIT_INTERRUPTED = 130


class UsageError(Exception):
    pass


# argument types

def int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    try:
        return [int(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(x) for x in text]
    try:
        return [float(x) for x in str(text).split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def epsilon_arg(text):
    if str(text).strip().lower() == AUTO:
        return AUTO
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or a number, got {text!r}") from None


# config files

def _coerce(value):
    value = value.strip()
    try:
        return json.loads(value)
    except ValueError:
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "'\"":
            return value[1:-1]
        return value


def load_config(path):
    """Read a config file into ``{section: {key: value}}``; top-level keys live under ``""``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    sections = {"": {}}
    if str(path).lower().endswith(".json") or text.lstrip().startswith("{"):
        try:
            doc = json.loads(text)
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}") from None
        if not isinstance(doc, dict):
            raise ParseError(f"{path}: config must be a JSON object")
        for k, v in doc.items():
            if isinstance(v, dict):
                sections.setdefault(k, {}).update(v)
            else:
                sections[""][k] = v
        return sections
    current = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"{path}: expected 'key = value'", lineno)
        sections[current][key.strip()] = _coerce(value)
    return sections


def _config_defaults(sections, names, known):
    """Merge top-level keys the command knows with its sections (later names win)."""
    out = {}
    for k, v in sections.get("", {}).items():
        dest = k.replace("-", "_")
        if dest in known:
            out[dest] = v
    for name in names:
        for k, v in sections.get(name, {}).items():
            dest = k.replace("-", "_")
            if dest not in known:
                raise UsageError(f"config section [{name}]: unknown option {k!r}")
            out[dest] = v
    return out


# outputs

def out_path(path):
    base = os.environ.get(OUTDIR_ENV)
    path = os.fspath(path)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def config_sidecar(path, config):
    """Echo the effective config next to a non-JSON artifact."""
    atomic_write_json(os.fspath(path) + ".config.json", config)


def effective_config(args):
    skip = {"func", "config", "command", "experiment"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    cfg["command"] = args.command if args.command != "experiment" else f"experiment {args.experiment}"
    cfg["backend_active"] = kernels.BACKEND if args.__dict__.get("backend") is None else args.backend
    cfg["version"] = __version__
    return cfg


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"missing required option(s): {flags}")


# commands

def cmd_gen_graph(args):
    _need(args, "n", "p", "output")
    g = erdos_renyi(args.n, args.p, args.weights, args.seed)
    path = out_path(args.output)
    write_graph(g, path, args.format)
    config_sidecar(path, effective_config(args))
    print(f"n={g.n} edges={g.num_edges} connected={str(g.is_connected()).lower()} -> {path}")


def _dynamics_config(args):
    if args.rates:
        return DynamicsConfig(args.sigma, tuple(args.durations), "fixed", tuple(args.rates), args.seed)
    return DynamicsConfig(args.sigma, tuple(args.durations), "uniform", (), args.seed)


def cmd_simulate(args):
    _need(args, "graph", "M", "output")
    if args.M < 1:
        raise UsageError(f"-M must be at least 1, got {args.M}")
    L = build_laplacian(read_graph(args.graph, args.graph_format))
    ss = generate_snapshots(L, args.M, _dynamics_config(args), keep_provenance=args.provenance)
    path = out_path(args.output)
    cfg = effective_config(args)
    save_snapshots(ss, path, args.format, provenance=args.provenance, extra=cfg)
    if not str(path).lower().endswith(".json") and args.format != "json":
        config_sidecar(path, cfg)
    print(f"n={ss.n} M={ss.M} -> {path}")


def _recovery_config(args, **over):
    kw = dict(epsilon1=args.epsilon1, epsilon2=args.epsilon2, eta=args.eta,
              norm_variant=args.norm, reweight_iters=args.reweight, anchor=not args.no_anchor,
              tol=args.tol, max_iters=args.max_iters, backend=args.backend)
    kw.update(over)
    return RecoveryConfig(**kw)


def cmd_recover(args):
    _need(args, "snapshots", "output")
    ss = load_snapshots(args.snapshots, args.snapshot_format)
    template = extract_template(ss, backend=args.backend)
    problem = RecoveryProblem(template, _recovery_config(args))
    sol = recover(problem)
    cfg = effective_config(args)
    path = out_path(args.output)
    extra = {}
    if args.reference:
        L = build_laplacian(read_graph(args.reference))
        raw, resc = relative_error(sol.L_star, L)
        extra = {"rel_error_raw": raw, "rel_error_rescaled": resc,
                 "support_overlap": support_overlap(sol.L_star, L),
                 "true_edge_count": int(np.count_nonzero(L.edge_weights()))}
    doc = sol.to_dict()
    doc["config"] = cfg
    if extra:
        doc["evaluation"] = extra
    atomic_write_json(path, doc)
    if args.csv:
        csv_path = out_path(args.csv)
        sol.save_csv(csv_path)
        config_sidecar(csv_path, cfg)
    d = sol.diagnostics
    print(f"objective={sol.objective!r} epsilon1={sol.epsilon1!r} eta={sol.eta} "
          f"norm={sol.norm_variant} primal_residual={d.get('primal_residual')!r} "
          f"dual_residual={d.get('dual_residual')!r} iterations={d.get('total_iterations', d.get('iterations'))}")
    for k, v in extra.items():
        print(f"{k}={v!r}")
    print(f"-> {path}")


class _PartialWriter:
    """Append trial rows to ``<path>.partial`` as they finish."""

    def __init__(self, path, timings):
        self.path = os.fspath(path) + ".partial"
        self.timings = timings
        self.count = 0
        self._fh = open(self.path, "w", encoding="utf-8", newline="\n")
        self._w = csv.DictWriter(self._fh, fieldnames=CSV_FIELDS, lineterminator="\n")
        self._w.writeheader()
        self._fh.flush()

    def __call__(self, r):
        text = trials_to_csv([_strip_timing(r, self.timings)])
        self._fh.write(text.split("\n", 1)[1])
        self._fh.flush()
        self.count += 1

    def close(self, keep):
        self._fh.close()
        if not keep:
            os.unlink(self.path)


def _strip_timing(r, timings):
    return r if timings else replace(r, runtime_seconds=None)


def _run_with_partial(args, run):
    path = out_path(args.output)
    partial = _PartialWriter(path, args.timings)
    try:
        results = run(partial)
    except KeyboardInterrupt:
        partial.close(keep=True)
        print(f"interrupted after {partial.count} trials; partial results in {partial.path}",
              file=sys.stderr)
        raise
    except BaseException:
        partial.close(keep=partial.count > 0)
        raise
    partial.close(keep=False)
    return path, results


def _write_stream(args, path, results, cfg):
    rows = [_strip_timing(r, args.timings) for r in results]
    atomic_write_text(path, trials_to_csv(rows))
    config_sidecar(path, cfg)
    if args.jsonl:
        atomic_write_text(out_path(args.jsonl), trials_to_jsonl(rows))


def cmd_er_grid(args):
    rcfg = _recovery_config(args, reweight_iters=0)
    dcfg = DynamicsConfig(args.sigma, tuple(args.durations))
    cfg = effective_config(args)

    def run(cb):
        return run_er_grid(args.n, args.p, args.trials, args.exact_basis, args.seed, args.M,
                           args.weights, rcfg, dcfg, args.reweight, args.threshold,
                           args.jobs, on_result=cb)

    path, report = _run_with_partial(args, run)
    _write_stream(args, path, report.results, cfg)
    report_path = out_path(args.report)
    write_report(report, report_path, extra=cfg)
    failed = sum(r.error is not None for r in report.results)
    print(f"trials={len(report.results)} overall_rate={report.overall_rate():.3f} "
          f"rate@{LOOSE_THRESHOLD:g}={report.overall_rate(LOOSE_THRESHOLD):.3f} failed_solves={failed}")
    for (n, p), rate in report.cell_rates().items():
        print(f"  n={n} p={p:g} rate={rate:.2f}")
    print(f"-> {path}, {report_path}")


def cmd_error_vs_m(args):
    _need(args, "graph")
    g = read_graph(args.graph, args.graph_format)
    eta = args.eta if args.eta is not None else min(5, g.n - 1)
    rcfg = _recovery_config(args, eta=eta, reweight_iters=0)
    dcfg = DynamicsConfig(args.sigma, tuple(args.durations))
    cfg = effective_config(args)
    dataset = os.path.basename(os.fspath(args.graph))

    def run(cb):
        return run_error_vs_M(g, args.M, args.trials, args.seed, rcfg, dcfg, args.reweight,
                              args.threshold, dataset, args.jobs, on_result=cb)

    path, results = _run_with_partial(args, run)
    _write_stream(args, path, results, cfg)
    summary = summarize_by_M(results)
    report_path = out_path(args.report)
    atomic_write_json(report_path, {"by_M": {str(m): s for m, s in summary.items()},
                                    "true_edge_count": g.num_edges, "config": cfg})
    if args.long:
        long_path = out_path(args.long)
        atomic_write_text(long_path, long_format_csv(results))
        config_sidecar(long_path, cfg)
    for m, s in summary.items():
        print(f"M={m} median_rel_error_rescaled={s['median_rel_error_rescaled']:.4g} "
              f"median_support_overlap={s['median_support_overlap']:g}/{g.num_edges}")
    print(f"-> {path}, {report_path}")


def cmd_diagnostics(args):
    _need(args, "graph")
    L = build_laplacian(read_graph(args.graph, args.graph_format))
    V = L.decomposition.eigenvectors
    dcfg = DynamicsConfig(args.sigma, tuple(args.durations))
    records = []
    for M in args.M:
        for t in range(args.trials):
            seed = derive_seed(args.seed, M, t)
            ss = generate_snapshots(L, M, replace(dcfg, seed=seed))
            diag = diagonalization_diagnostics(sample_covariance(ss), V)
            records.append(diag.to_record(M=M, trial=t, seed=seed))
    cfg = effective_config(args)
    path = out_path(args.output)
    buf = io.StringIO()
    for rec in records:
        buf.write(dumps(rec, sort_keys=True) + "\n")
    atomic_write_text(path, buf.getvalue())
    config_sidecar(path, cfg)
    summary = {}
    for M in args.M:
        rs = [r for r in records if r["M"] == M]
        summary[str(M)] = {
            "median_offdiag_ratio": float(np.median([r["offdiag_ratio"] for r in rs])),
            "median_ordering_violations": float(np.median([r["ordering_violations"] for r in rs])),
            "trials": len(rs),
        }
        s = summary[str(M)]
        print(f"M={M} median_offdiag_ratio={s['median_offdiag_ratio']:.4g} "
              f"median_ordering_violations={s['median_ordering_violations']:g}")
    if args.report:
        atomic_write_json(out_path(args.report), {"by_M": summary, "config": cfg})
    print(f"-> {path}")


# parser

def _add_dynamics(p):
    p.add_argument("--sigma", type=float, default=1.0, help="input standard deviation")
    p.add_argument("--durations", type=int_list, default=[3, 4, 5],
                   help="allowed dynamics lengths, comma-separated (default 3,4,5)")


def _add_recovery(p, eta_default=None, reweight_default=0):
    p.add_argument("--eta", type=int, default=eta_default,
                   help="eigenvalue gap stride (default: 1 for exact templates, min(5, n-1) otherwise)")
    p.add_argument("--epsilon1", type=epsilon_arg, default=AUTO, help="'auto' or a nonnegative radius")
    p.add_argument("--epsilon2", type=float, default=1.0, help="minimum eigenvalue gap")
    p.add_argument("--norm", choices=["frobenius", "max"], default="frobenius")
    p.add_argument("--reweight", type=int, default=reweight_default,
                   help="reweighted l1 solves after the first one")
    p.add_argument("--no-anchor", action="store_true", help="drop the beta_n = 0 constraint")
    p.add_argument("--tol", type=float, default=1e-7)
    p.add_argument("--max-iters", type=int, default=200_000)
    p.add_argument("--backend", choices=["compiled", "python"], default=None)


def _add_experiment_io(p, stem):
    p.add_argument("-o", "--output", default=f"{stem}.csv", help="trial CSV (one row per trial)")
    p.add_argument("--report", default=f"{stem}.json", help="aggregate JSON report")
    p.add_argument("--jsonl", default=None, help="also write the trials as JSON lines")
    p.add_argument("--timings", action="store_true",
                   help="fill runtime_seconds (makes the CSV run-dependent)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--threshold", type=float, default=SUCCESS_THRESHOLD)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or key = value config file")

    parser = argparse.ArgumentParser(
        prog="consensus-topology", parents=[common],
        description="Infer network topology from snapshots of consensus dynamics.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", parents=[common], help="sample a connected Erdos-Renyi graph")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--weights", default="unit", help="'unit' or 'uniform(a,b)'")
    p.add_argument("--format", choices=["edge-list", "pajek-net"], default=None)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("simulate", parents=[common], help="simulate consensus snapshots on a graph")
    p.add_argument("-g", "--graph")
    p.add_argument("--graph-format", choices=["edge-list", "pajek-net"], default=None)
    p.add_argument("-M", type=int, dest="M")
    p.add_argument("--seed", type=int, default=0)
    _add_dynamics(p)
    p.add_argument("--rates", type=float_list, default=None,
                   help="fixed step sizes cycled through every dynamics (default: random)")
    p.add_argument("--format", choices=["csv", "json"], default=None)
    p.add_argument("--provenance", action="store_true", help="write inputs, durations and rates")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("recover", parents=[common], help="recover a Laplacian from snapshots")
    p.add_argument("-i", "--snapshots")
    p.add_argument("--snapshot-format", choices=["csv", "json"], default=None)
    _add_recovery(p)
    p.add_argument("--reference", help="true graph file; adds errors and support overlap")
    p.add_argument("--csv", help="also write L_star as CSV")
    p.add_argument("-o", "--output", default="solution.json")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("experiment", help="run an experiment harness")
    esub = p.add_subparsers(dest="experiment", required=True)

    q = esub.add_parser("er-grid", parents=[common], help="success rate over an (n, p) grid")
    q.add_argument("--n", type=int_list, default=[10, 20, 30])
    q.add_argument("--p", type=float_list, default=[0.1, 0.3, 0.5])
    q.add_argument("--trials", type=int, default=10)
    q.add_argument("--exact-basis", action="store_true",
                   help="use the true eigenbasis with epsilon1=0, eta=1")
    q.add_argument("-M", type=int, dest="M", default=10000, help="snapshots per trial when sampling")
    q.add_argument("--weights", default="unit")
    q.add_argument("--seed", type=int, default=0)
    _add_dynamics(q)
    _add_recovery(q, reweight_default=DEFAULT_REWEIGHT)
    _add_experiment_io(q, "er_grid")
    q.set_defaults(func=cmd_er_grid)

    q = esub.add_parser("error-vs-m", parents=[common], help="error on one graph as M grows")
    q.add_argument("-g", "--graph")
    q.add_argument("--graph-format", choices=["edge-list", "pajek-net"], default=None)
    q.add_argument("-M", "--M", type=int_list, dest="M", default=[10, 100, 1000, 10000])
    q.add_argument("--trials", type=int, default=10)
    q.add_argument("--seed", type=int, default=0)
    _add_dynamics(q)
    _add_recovery(q)
    _add_experiment_io(q, "error_vs_m")
    q.add_argument("--long", default=None, help="also write a long-format CSV for plotting")
    q.set_defaults(func=cmd_error_vs_m)

    p = sub.add_parser("diagnostics", parents=[common],
                       help="how well the true eigenbasis diagonalizes the sample covariance")
    p.add_argument("-g", "--graph")
    p.add_argument("--graph-format", choices=["edge-list", "pajek-net"], default=None)
    p.add_argument("-M", "--M", type=int_list, dest="M", default=[100, 1000, 10000])
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _add_dynamics(p)
    p.add_argument("-o", "--output", default="diagnostics.jsonl")
    p.add_argument("--report", default=None, help="per-M medians as JSON")
    p.set_defaults(func=cmd_diagnostics)
    return parser


def _leaf_parser(parser, args):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    leaf = sub.choices[args.command]
    names = [args.command]
    if args.command == "experiment":
        esub = next(a for a in leaf._actions if isinstance(a, argparse._SubParsersAction))
        leaf = esub.choices[args.experiment]
        names.append(args.experiment)
    return leaf, names


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        leaf, names = _leaf_parser(parser, args)
        known = {a.dest for a in leaf._actions} - {"help", "config"}
        defaults = _config_defaults(load_config(args.config), names, known)
        for action in leaf._actions:
            if action.dest not in defaults or not action.type:
                continue
            value = defaults[action.dest]
            # list options also accept a single number
            if isinstance(value, str) or action.type in (int_list, float_list):
                defaults[action.dest] = action.type(value)
        leaf.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
        args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleError, SearchError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except NonConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (OSError, ParseError, IndexError, UnicodeDecodeError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TopologyError, ValueError, argparse.ArgumentTypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except KeyboardInterrupt:
        return EXIT_INTERRUPTED
    except SystemExit as exc:
        # argparse: 0 for --help/--version, 2 for bad arguments
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
