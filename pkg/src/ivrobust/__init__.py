"""2SLS and linear GMM with variance estimators that stay valid when instruments identify different LATEs."""

__version__ = "0.1.0"

from .data import Dataset, DesignMatrices, ModelSpec, build_design, design_from_arrays, load_csv
from .estimator import EstimateResult, WeightSpec, fit_2sls, fit_first_stage, fit_gmm_weighted
from .variance import VarianceResult, influence, sigma_c, sigma_cmr, sigma_mr, standard_errors
from .diagnostics import cragg_donald, diagnose, first_stage_f, j_test
from .bootstrap import BootstrapResult, bootstrap_t, percentile_t_ci
from .psiv import fit_logit, psiv_estimate, psiv_variance
from .simulator import (
    DgpConfig, constant_effect_config, draw_sample, heterogeneous_config, population_estimand,
    run_monte_carlo, sample_design,
)
from .errors import DataError, DegenerateInferenceError, IVRobustError, NumericalError, RankDeficiencyError

__all__ = [
    "Dataset", "DesignMatrices", "ModelSpec", "build_design", "design_from_arrays", "load_csv",
    "EstimateResult", "WeightSpec", "fit_2sls", "fit_first_stage", "fit_gmm_weighted",
    "VarianceResult", "influence", "sigma_c", "sigma_cmr", "sigma_mr", "standard_errors",
    "cragg_donald", "diagnose", "first_stage_f", "j_test",
    "BootstrapResult", "bootstrap_t", "percentile_t_ci",
    "fit_logit", "psiv_estimate", "psiv_variance",
    "DgpConfig", "constant_effect_config", "draw_sample", "heterogeneous_config", "population_estimand",
    "run_monte_carlo", "sample_design",
    "DataError", "DegenerateInferenceError", "IVRobustError", "NumericalError", "RankDeficiencyError",
]
