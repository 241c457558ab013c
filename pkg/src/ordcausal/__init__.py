"""Marginal causal odds ratios for ordinal longitudinal outcomes observed at
covariate-driven visit times.

The package fits a weighted proportional-odds model of the outcome on a
continuous exposure over visit records, with two optional record weights:
a stabilized generalized propensity-score weight for the exposure and an
inverse visit-intensity weight for the monitoring process. A simulation
engine reproduces replicated bias/variance comparisons of the four resulting
estimators, and a cluster bootstrap provides confidence intervals.
"""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, bootstrap_ci, cluster_resample
from .errors import (
    BinningError,
    BootstrapError,
    CollinearityError,
    ConvergenceError,
    CoverageError,
    DegeneracyError,
    DomainError,
    EstimationStageError,
    OrderingError,
    ParseError,
    SeparationError,
    SingularHessianError,
    StudyError,
)
from .estimators import (
    ESTIMATOR_ORDER,
    CovariateRoles,
    EstimatorResult,
    EstimatorSpec,
    combined_weights,
    estimate,
    estimate_all_four,
)
from .gps import (
    BinnedGPSFit,
    GPSFit,
    LinearFit,
    fit_binned_gps,
    fit_exposure_models,
    ipt_weight_binned,
    ipt_weight_continuous,
)
from .intensity import (
    CountingProcessData,
    IntensityFit,
    fit_proportional_intensity,
    from_panel,
    iiv_weight,
)
from .optim import (
    ObjectiveEvaluation,
    SolverResult,
    finite_diff_gradient,
    finite_diff_hessian,
    newton_maximize,
)
from .panel import PanelDataset, PanelRecord, load_csv, to_csv, validate, visit_records
from .pom import (
    OddsRatioPair,
    POMFit,
    cumulative_prob,
    fit_pom,
    marginal_or,
    pom_objective,
    probability_curve,
)
from .simulate import (
    ScenarioConfig,
    ScenarioSummary,
    load_scenario,
    monte_carlo_target,
    run_study,
    simulate_dataset,
)

__all__ = [name for name in dir() if not name.startswith("_")]
