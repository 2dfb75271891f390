"""Discrete-time consensus dynamics and snapshot generation."""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParseError, RateError
from .graph import Laplacian
from .util import atomic_write_json, atomic_write_text

RATE_GUARD = 1e-6


def _as_laplacian(L):
    return L if isinstance(L, Laplacian) else Laplacian(L)


def _check_rate(rate, lmax):
    if not (rate > 0 and (lmax <= 0 or rate * lmax < 1)):
        bound = "inf" if lmax <= 0 else f"{1 / lmax:.6g}"
        raise RateError(f"rate {rate!r} outside (0, {bound})")


def _step(x, rate, L):
    return x - rate * (L @ x)


def step(state, rate, L):
    """One consensus update ``(I - rate*L) @ state``."""
    L = _as_laplacian(L)
    x = np.asarray(state, dtype=np.float64)
    if x.shape != (L.n,):
        raise DimensionError(f"state has shape {x.shape}, expected ({L.n},)")
    _check_rate(rate, L.lambda_max)
    return _step(x, float(rate), L.matrix)


def run_dynamics(x0, rates, L):
    """Apply one consensus step per entry of ``rates``, in order."""
    L = _as_laplacian(L)
    x = np.array(x0, dtype=np.float64, copy=True)
    if x.shape != (L.n,):
        raise DimensionError(f"state has shape {x.shape}, expected ({L.n},)")
    rates = [float(r) for r in rates]
    lmax = L.lambda_max if rates else 0.0
    for r in rates:
        _check_rate(r, lmax)
    A = L.matrix
    for r in rates:
        x = _step(x, r, A)
    return x


@dataclass(frozen=True)
class DynamicsConfig:
    """Input scale, admissible durations and step-size policy for snapshot generation.

    With ``rate_policy="uniform"`` every step size is drawn from
    ``U(rho/lambda_max, (1-rho)/lambda_max)``.  With ``rate_policy="fixed"``
    step ``t`` of every dynamics uses ``rates[(t-1) % len(rates)]``.
    """

    sigma: float = 1.0
    duration_set: tuple = (3, 4, 5)
    rate_policy: str = "uniform"
    rates: tuple = ()
    seed: int = 0
    rho: float = RATE_GUARD

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        durations = tuple(sorted({int(t) for t in self.duration_set}))
        if not durations or durations[0] < 1:
            raise ValueError(f"durations must be positive integers, got {self.duration_set}")
        object.__setattr__(self, "duration_set", durations)
        if self.rate_policy not in ("uniform", "fixed"):
            raise ValueError(f"unknown rate policy {self.rate_policy!r}")
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.rate_policy == "fixed" and not self.rates:
            raise ValueError("fixed rate policy needs a nonempty rates sequence")
        if not 0 < self.rho < 0.5:
            raise ValueError(f"rho must lie in (0, 0.5), got {self.rho}")


@dataclass(frozen=True, eq=False)
class Provenance:
    """Ground truth behind a SnapshotSet; for evaluation only."""

    inputs: np.ndarray
    durations: tuple
    rates: tuple

    def to_dict(self):
        return {
            "inputs": self.inputs.tolist(),
            "durations": list(self.durations),
            "rates": [list(r) for r in self.rates],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            np.asarray(d["inputs"], dtype=np.float64),
            tuple(int(t) for t in d["durations"]),
            tuple(tuple(float(a) for a in r) for r in d["rates"]),
        )


@dataclass(frozen=True, eq=False)
class SnapshotSet:
    """Observed states, one column per consensus run."""

    observations: np.ndarray
    sigma: float | None = None
    seed: int | None = None
    provenance: Provenance | None = field(default=None, repr=False)

    def __post_init__(self):
        Y = np.array(self.observations, dtype=np.float64, copy=True)
        if Y.ndim != 2 or Y.shape[1] < 1:
            raise DimensionError(f"observations must be n x M with M >= 1, got {Y.shape}")
        if not np.all(np.isfinite(Y)):
            raise ValueError("observations contain non-finite values")
        Y.setflags(write=False)
        object.__setattr__(self, "observations", Y)

    @property
    def n(self):
        return self.observations.shape[0]

    @property
    def M(self):
        return self.observations.shape[1]


def column_rng(seed, k):
    """Generator for snapshot column ``k``; equals child ``k`` of ``SeedSequence(seed).spawn``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def rate_bounds(lmax, rho=RATE_GUARD):
    if lmax <= 0:
        return rho, 1.0 - rho
    return rho / lmax, (1.0 - rho) / lmax


def generate_snapshots(L, M, cfg=None, keep_provenance=False) -> SnapshotSet:
    """Simulate ``M`` independent consensus runs and keep their final states.

    Column ``k`` draws, from its own generator, an input ``x ~ N(0, sigma^2 I)``,
    a duration from ``cfg.duration_set`` and that many step sizes.
    """
    cfg = cfg or DynamicsConfig()
    L = _as_laplacian(L)
    M = int(M)
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    n = L.n
    lmax = L.lambda_max
    lo, hi = rate_bounds(lmax, cfg.rho)
    if cfg.rate_policy == "fixed":
        for r in cfg.rates:
            _check_rate(r, lmax)
    durations = np.array(cfg.duration_set)
    A = L.matrix
    Y = np.empty((n, M))
    X = np.empty((n, M)) if keep_provenance else None
    Ts, Rs = [], []
    for k in range(M):
        rng = column_rng(cfg.seed, k)
        x = cfg.sigma * rng.standard_normal(n)
        T = int(rng.choice(durations))
        if cfg.rate_policy == "uniform":
            rates = rng.uniform(lo, hi, T)
        else:
            rates = np.array([cfg.rates[t % len(cfg.rates)] for t in range(T)])
        y = x
        for r in rates:
            y = _step(y, r, A)
        Y[:, k] = y
        if keep_provenance:
            X[:, k] = x
            Ts.append(T)
            Rs.append(tuple(rates.tolist()))
    prov = Provenance(X, tuple(Ts), tuple(Rs)) if keep_provenance else None
    return SnapshotSet(Y, cfg.sigma, cfg.seed, prov)


# serialization

def _fmt_for(path, fmt):
    if fmt is None:
        fmt = "json" if str(path).lower().endswith(".json") else "csv"
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown snapshot format {fmt!r}")
    return fmt


def provenance_path(path):
    return os.fspath(path) + ".provenance.json"


def save_snapshots(ss, path, format=None, provenance=False, extra=None):
    """Write ``ss`` as headerless CSV or a JSON envelope; optionally a provenance sidecar."""
    fmt = _fmt_for(path, format)
    if fmt == "csv":
        buf = io.StringIO()
        np.savetxt(buf, ss.observations, delimiter=",", fmt="%.17g")
        atomic_write_text(path, buf.getvalue())
    else:
        doc = {"n": ss.n, "M": ss.M, "sigma": ss.sigma, "seed": ss.seed,
               "data": ss.observations.tolist()}
        if extra:
            doc["config"] = extra
        atomic_write_json(path, doc)
    if provenance:
        if ss.provenance is None:
            raise ValueError("snapshot set carries no provenance")
        atomic_write_json(provenance_path(path), ss.provenance.to_dict())


def load_snapshots(path, format=None, provenance=False) -> SnapshotSet:
    fmt = _fmt_for(path, format)
    path = os.fspath(path)
    sigma = seed = None
    if fmt == "csv":
        try:
            Y = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ParseError(f"bad snapshot CSV: {exc}") from None
    else:
        with open(path, encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ParseError(exc.msg, exc.lineno) from None
        try:
            Y = np.asarray(doc["data"], dtype=np.float64)
            sigma, seed = doc.get("sigma"), doc.get("seed")
            if Y.shape != (doc["n"], doc["M"]):
                raise ParseError(f"data shape {Y.shape} does not match n={doc['n']}, M={doc['M']}")
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(f"bad snapshot JSON envelope: {exc}") from None
    prov = None
    if provenance:
        with open(provenance_path(path), encoding="utf-8") as fh:
            prov = Provenance.from_dict(json.load(fh))
    return SnapshotSet(Y, sigma, seed, prov)
