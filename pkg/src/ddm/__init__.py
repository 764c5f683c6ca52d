"""Dividend discount model valuation engine.

Deterministic Gordon-family models, i.i.d. step models, univariate and
multivariate Markov chain stock models, estimation from dividend
histories, and Monte Carlo / truncated-series oracles.
"""

from .binomial import (
    BinomialAdditiveParams,
    BinomialGeometricParams,
    GeneralizedOutcomes,
    TrinomialParams,
    hurley_additive,
    hurley_general_additive,
    hurley_general_geometric,
    hurley_geometric,
    yao_additive,
    yao_geometric,
)
from .core import (
    DiscountRate,
    DividendSeries,
    GrowthStateSpace,
    MarkovGrowthModel,
    PriceDividendSolution,
    TransitionMatrix,
    matrix_power_apply,
    solve_linear_system,
    validate_stochastic,
)
from .deterministic import (
    BarskyParams,
    GordonParams,
    HModelParams,
    ThreeStageParams,
    TwoStageParams,
    barsky_growth,
    gordon_price,
    h_model_price,
    interpolate_decline_dividends,
    quarterly_rate,
    three_stage_price,
    two_stage_price,
)
from .errors import *  # noqa: F401,F403
from .estimation import (
    CapmEstimate,
    CapmInputs,
    capm_cost_of_equity,
    discretize_states,
    estimate_cross_transitions,
    estimate_lambda,
    estimate_transition_matrix,
    growth_series,
)
from .markov import (
    TransversalityReport,
    check_conditions,
    price_and_risk,
    solve_psi1,
    solve_psi2,
    variance_ratio,
)
from .mtd import (
    JointSolution,
    JointState,
    MtdModel,
    check_multi_conditions,
    covariance,
    covariance_matrix,
    joint_states,
    mtd_step,
    solve_all_products,
    solve_joint_psi1,
    solve_joint_psi2,
    solve_price_product,
)
from .simulation import (
    DividendStepProcess,
    SimConfig,
    dk_simulate,
    simulate_dividend_paths,
    truncated_ddm,
    truncated_psi1_series,
)

__version__ = "0.1.0"
