"""Risk engine for a derivatives clearing house's default waterfall.

Sizes variation and initial margin from exact conditional exposure laws of
CDS books, sizes the prefunded default fund by expected shortfall of the
simulated member exposures, allocates it through the worst-case density of
the dual representation, and studies coverage and scaling behaviour under
joint credit-migration dynamics.
"""

from .cds import (
    CdsContract,
    ExposureLaw,
    PositionMatrix,
    margin_period_exposure,
    portfolio_exposure_law,
    pre_default_upfront,
    upfront,
)
from .distributions import (
    DiscreteDistribution,
    ExtremeDensity,
    LossTransformMode,
    RiskMeasureKind,
    RiskMeasureSpec,
    avar,
    entropic,
    expectation_under_density,
    extreme_density,
    loss_transform,
    lower_quantile,
    upper_quantile,
    var,
)
from .errors import CalibrationError, ConfigError, MarginalInfeasibleError
from .migration import (
    CalibrationResult,
    DependenceType,
    JointMigrationModel,
    JointState,
    MigrationPath,
    RatingTransitionMatrix,
    calibrate_daily,
    joint_transition_row,
    simulate_path,
    simulate_paths_batch,
    survival_indicator,
)
from .simulation import (
    ExperimentConfig,
    StudyResult,
    config_from_dict,
    run_df_study,
    run_im_study,
    run_scaling_study,
    sample_reference_defaults,
)
from .waterfall import (
    DefaultFundResult,
    ExposureMode,
    ImMethod,
    WaterfallConfig,
    default_fund,
    effective_loss,
    empirical_extreme_density,
    initial_margin,
    member_period_exposure,
    unfunded_df,
    variation_margin,
)

__version__ = "0.1.0"
