"""Two-arm trial simulation under covariate-adaptive randomization.

Randomization designs, GLM working-model tests with and without variance
adjustment, an exact large-sample oracle and a replication harness.
"""
from .adjust import (
    VarianceComponents,
    adjusted_statistic_cr,
    adjusted_statistic_general,
    adjusted_statistic_stratified,
    estimate_sigma_h_mc,
    pooled_within_stratum_variance,
    variance_components,
)
from .core import (
    CovariateSpace,
    TestReport,
    TrialData,
    TrialRecord,
    decode_stratum,
    encode_stratum,
    sample_profile,
    sample_profiles,
)
from .glm import FitResult, GlmFamily, fit_working_model, get_family, sample_response, wald_statistic
from .harness import run_cell, run_plan, run_power_curve, run_size_cell, run_trial
from .randomize import Design, DesignState, HuHuWeights, assign_sequences, imbalance_snapshot
from .scenario import ExperimentPlan, Scenario, linear_predictor, load_plan, load_scenario
from .theory import asymptotic_s_variance, population_moments, predicted_size

__version__ = "0.1.0"
