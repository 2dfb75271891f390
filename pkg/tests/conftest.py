import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from consensus_topology import kernels
from consensus_topology.graph import Graph, build_laplacian
from consensus_topology.recovery import clear_cache

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

BACKENDS = ["python"] + (["compiled"] if kernels.compiled_backend is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(autouse=True)
def _fresh_witness_cache():
    clear_cache()
    yield


def path_graph(n, w=1.0):
    return Graph(n, tuple((i, i + 1, w) for i in range(n - 1)))


def path_laplacian(n):
    return build_laplacian(path_graph(n))


def random_orthonormal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


# acceptance verdicts, echoed at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
