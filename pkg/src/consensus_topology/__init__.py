"""Network topology inference from snapshots of consensus dynamics."""

__version__ = "0.1.0"

from .dynamics import (
    DynamicsConfig,
    Provenance,
    SnapshotSet,
    generate_snapshots,
    load_snapshots,
    run_dynamics,
    save_snapshots,
    step,
)
from .errors import (
    ConnectivityError,
    DimensionError,
    DomainError,
    InfeasibleError,
    NonConvergenceError,
    ParseError,
    RateError,
    SearchError,
    SymmetryError,
    TopologyError,
    ZeroMatrixError,
    ZeroParamError,
)
from .experiments import (
    GridReport,
    TrialResult,
    derive_seed,
    relative_error,
    run_er_grid,
    run_error_vs_M,
    support_overlap,
)
from .graph import (
    Graph,
    Laplacian,
    SpectralDecomposition,
    build_laplacian,
    erdos_renyi,
    spectral_decompose,
)
from .graphio import parse_edge_list, parse_pajek, read_graph, write_graph
from .kernels import BACKEND
from .recovery import (
    AUTO,
    RecoveryConfig,
    RecoveryProblem,
    RecoverySolution,
    auto_epsilon1,
    minimum_epsilon1,
    recover,
    rescale_to_reference,
    solve,
    solve_reweighted,
)
from .spectral import (
    DiagonalizationDiagnostics,
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
