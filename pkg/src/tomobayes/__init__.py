"""Maximum-likelihood quantum state estimation with certified optimality and
sharp-peak (Laplace) Bayesian error bars, validated against quadrature and
Monte Carlo references."""

from .hermitian import (
    DensityMatrix,
    HermitianMatrix,
    SpectralDecomposition,
    frobenius_inner,
    from_json_array,
    numerical_rank,
    project_to_density,
    pseudo_inverse,
    spectral_decompose,
    to_json_array,
)
from .laplace import (
    AsymptoticValue,
    ExpansionInput,
    QuadratureError,
    ScalarField,
    boundary_leading,
    boundary_second_order,
    corollary_mean_variance,
    expansion_input_from_fields,
    interior_leading,
    interior_second_order,
    quadrature_reference,
    trace_pairing,
)
from .likelihood import (
    HessianForm,
    MeasurementDataset,
    PovmEffect,
    gradient,
    hessian_form,
    log_likelihood,
)
from .maxlike import (
    IterationRecord,
    OptimalityCertificate,
    SolverOptions,
    certify,
    solve,
    spectral_gap,
)
from .bayes import (
    AsymptoticReport,
    TangentBasis,
    bayes_report,
    build_tangent_basis,
    fisher_apply,
    fisher_matrix,
    fisher_solve,
    kernel_face_dim,
    tangent_dim,
    tangent_project,
)
from .montecarlo import (
    EffectiveSampleSizeError,
    McEstimate,
    McOptions,
    mc_bayes,
    sample_density_hs,
)

__version__ = "0.1.0"
