"""Contextual dynamic pricing with nonparametric demand estimation.

The library simulates a posted-price market with contextual buyers,
learns the mean utility by distributional nearest neighbors (one- and
two-scale) and the noise distribution by kernel smoothing, prices
through virtual-valuation inversion inside doubling explore-then-commit
episodes, and benchmarks cumulative regret against parametric baselines
and the zero-regret oracle.
"""

from .market import (
    MarketEnvironment,
    NoiseSpec,
    OracleSolution,
    calibration_env,
    expected_revenue,
    mean_utility,
    oracle_price,
    quadratic_sim_env,
)
from .neighbors import (
    DnnConfig,
    LabeledSample,
    TdnnConfig,
    choose_scales,
    dnn_predict,
    dnn_weights,
    tdnn_predict,
)
from .noisecdf import CdfEstimate, KernelSpec, bandwidth, cdf_estimate, fit_cdf
from .policy import (
    AlgorithmConfig,
    EpisodeSchedule,
    PhiFunction,
    RegretTrace,
    phi_eval,
    phi_inverse,
    price_map,
    run_algorithm1,
)
from .harness import RunConfig, load_config, run_trials

__version__ = "0.1.0"

__all__ = [
    "MarketEnvironment",
    "NoiseSpec",
    "OracleSolution",
    "calibration_env",
    "expected_revenue",
    "mean_utility",
    "oracle_price",
    "quadratic_sim_env",
    "DnnConfig",
    "LabeledSample",
    "TdnnConfig",
    "choose_scales",
    "dnn_predict",
    "dnn_weights",
    "tdnn_predict",
    "CdfEstimate",
    "KernelSpec",
    "bandwidth",
    "cdf_estimate",
    "fit_cdf",
    "AlgorithmConfig",
    "EpisodeSchedule",
    "PhiFunction",
    "RegretTrace",
    "phi_eval",
    "phi_inverse",
    "price_map",
    "run_algorithm1",
    "RunConfig",
    "load_config",
    "run_trials",
    "__version__",
]
