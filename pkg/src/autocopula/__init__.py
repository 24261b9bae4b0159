"""Semi-parametric time-series modelling: NIG marginals + empirical autocopula."""

__version__ = "0.1.0"

from .nig import (
    IgParams,
    MomentSet,
    NigParams,
    NonConvergenceError,
    fit_mle,
    fit_moment_matching,
    ig_pdf,
    log_likelihood,
    moments_from_params,
    nig_cdf,
    nig_inv_cdf,
    nig_logpdf,
    nig_pdf,
    params_from_moments,
)
from .seasonal import (
    DeltaFan,
    MonthlyDeltaSeries,
    NuArModel,
    fit_monthly_delta,
    fit_nu_ar,
    seasonal_value,
    simulate_delta_paths,
)
from .copula import (
    EmpiricalAutocopula,
    PitSeries,
    RectPartition,
    build_joint_cdf,
    build_partition,
    conditional_cdf,
    conditional_partial_cdf,
    copula_eval,
    inverse_conditional,
    pit_transform,
    tail_dependence_curves,
)
from .simulate import (
    Ar1Spec,
    FrozenDeltaMarginals,
    SimulationConfig,
    SimulationEnsemble,
    ar1_gaussian_copula_oracle,
    simulate_ensemble,
    simulate_path,
    tail_dependence_bands,
)
from .pipeline import (
    ModelBundle,
    ObservationSeries,
    PipelineConfig,
    ingest_csv,
    load_bundle,
    load_config,
    run_pipeline,
)
