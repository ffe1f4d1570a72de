"""Seeded randomized sketching for model gradients and curvature.

Structured projections R^n -> R^d rebuilt bit for bit from a spec, with
exact adjoints, plus the downstream probes that motivate them: sketched
gradients and Hessian operators, Krylov spectrum estimates, intrinsic
dimension search, and attribution-score fidelity.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend
from .baseline import ChunkedDenseBaseline
from .calculus import (
    SketchedOperator,
    apply_sketched_operator,
    explicit_grad_sketch,
    explicit_hvp_sketch,
    implicit_grad_sketch,
    implicit_hvp_sketch,
)
from .errors import NumericError, SearchExhaustedError, UndefinedCorrelationError
from .intrinsic import (
    SearchConfig,
    SearchResult,
    SearchTrace,
    make_loss_metric,
    search_intrinsic_dimension,
    subspace_sgd_step,
    verify_half,
)
from .kron import (
    KronShape,
    allocate_qk_rows,
    compute_kron_shapes,
    kron_apply,
    kron_apply_transpose,
    next_pow2,
    sample_haar_factor,
)
from .oracles import (
    LogisticOracle,
    ModelOracle,
    PlantedSubspaceOracle,
    QuadraticOracle,
    finite_difference_check,
)
from .sketch import (
    ALGORITHMS,
    PRECONDITIONERS,
    SketchSpec,
    Sketcher,
    build_sketcher,
    ffd_adversarial_input,
    jl_distortion_trial,
)
from .spectral import (
    KrylovResult,
    SpectrumReport,
    arnoldi,
    outlier_alignment,
    relative_mae,
    ritz_from_hessenberg,
    spectrum_report,
)
from .tda import (
    CorrelationResult,
    MaskedCorrelation,
    block_masks,
    correlation_harness,
    layer_masked_correlation,
    minimal_sketch_dim,
    pearson,
    tda_score,
)

__all__ = [
    "__version__",
    "kernel_backend",
    "ALGORITHMS",
    "PRECONDITIONERS",
    "SketchSpec",
    "Sketcher",
    "build_sketcher",
    "jl_distortion_trial",
    "ffd_adversarial_input",
    "next_pow2",
    "compute_kron_shapes",
    "allocate_qk_rows",
    "sample_haar_factor",
    "kron_apply",
    "kron_apply_transpose",
    "KronShape",
    "ModelOracle",
    "QuadraticOracle",
    "LogisticOracle",
    "PlantedSubspaceOracle",
    "finite_difference_check",
    "explicit_grad_sketch",
    "implicit_grad_sketch",
    "explicit_hvp_sketch",
    "implicit_hvp_sketch",
    "SketchedOperator",
    "apply_sketched_operator",
    "arnoldi",
    "outlier_alignment",
    "ritz_from_hessenberg",
    "relative_mae",
    "spectrum_report",
    "KrylovResult",
    "SpectrumReport",
    "SearchConfig",
    "SearchResult",
    "SearchTrace",
    "make_loss_metric",
    "search_intrinsic_dimension",
    "subspace_sgd_step",
    "verify_half",
    "tda_score",
    "pearson",
    "correlation_harness",
    "minimal_sketch_dim",
    "layer_masked_correlation",
    "block_masks",
    "CorrelationResult",
    "MaskedCorrelation",
    "ChunkedDenseBaseline",
    "NumericError",
    "SearchExhaustedError",
    "UndefinedCorrelationError",
]
