"""qimex: implicit-explicit integration of stiff multiscale linear
ODE/PDE systems, recast as an all-at-once linear system, relaxed by a
continuous-time flow, and emulated through its warped-phase (Hermitian)
lift -- together with the decay certificates, matrix-exponential bounds,
and cost estimators that size such a computation.
"""

from .linalg import (
    HermitianSplit,
    hermitian_split,
    log_norm,
    matrix_exp,
    second_derivative_matrix,
    central_difference_matrix,
    block_norm_bound,
    weyl_gap_bound,
)
from .imex import (
    MultiscaleProblem,
    ImexSystem,
    StepCountEstimate,
    build_imex,
    classical_imex_solve,
    estimate_step_count,
    contraction_threshold,
)
from .allatonce import (
    BlockSystem,
    HomogeneousEmbedding,
    DecayCertificate,
    assemble_block_system,
    steady_state,
    embed_homogeneous,
    decay_certificate,
    richardson_flow_reference,
)
from .schrodingerize import (
    PGrid,
    SchrodingerizedSystem,
    PipelineResult,
    build_grid,
    warped_initial,
    from_flow,
    evolve,
    reconstruct,
    materialize_hschr,
    run_pipeline,
)
from .bounds import (
    BoundCurve,
    JordanUnavailable,
    exact_norm_curve,
    bound_lognorm,
    bound_jordan,
    bound_schur,
    laplace_blocks,
    bound_timeordered,
    bound_curve,
)
from .complexity import (
    ComplexityReport,
    PhysicalBranch,
    sparsity,
    berry_queries,
    schr_hmax_and_sparsity,
    repetition_counts,
    success_probability,
    telegraph_branch,
    telegraph_chi_norm_sq,
    complexity_report,
)
from .frontends import (
    HeatConfig,
    TelegraphConfig,
    TelegraphSystem,
    OrderStudyResult,
    heat_problem,
    heat_build,
    heat_grid,
    steps_for_dt,
    telegraph_build,
    telegraph_unrescaled_build,
    telegraph_recover,
    telegraph_chi,
    dissipative_order_study,
)

__version__ = "0.1.0"
