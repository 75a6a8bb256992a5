"""Adaptive importance sampling with proposals tuned by stochastic Langevin dynamics.

The proposal parameters minimize ``R(theta) = E_q[(Pi/q)^2]``, the second
moment of the importance weights, using SGLD or SGHMC with score-function
or pathwise gradient estimates. Quadrature oracles give exact reference
values in one and two dimensions.
"""

from oais import adapt, grad, harness, kernels, model, oracle, snis
from oais.adapt import OptimizerState, sghmc_step, sgld_step
from oais.config import RunConfig, load_config, validate
from oais.errors import (
    ConfigError,
    ContractError,
    DegenerateEnsembleError,
    DivergenceError,
    HeavyTailError,
    NonFiniteError,
    OAISError,
    QuadratureWarning,
    UnsupportedDimensionError,
    UnsupportedEstimatorError,
)
from oais.harness import calibration_sweep, fit_rate, run_ais, run_replicates
from oais.model import gaussian_target, make_proposal, mixture_target
from oais.oracle import QuadratureSpec, quad_R, quad_rho
from oais.snis import diagnostics, log_weights, snis_estimate

__version__ = "0.1.0"

__all__ = [
    "adapt", "grad", "harness", "kernels", "model", "oracle", "snis",
    "OptimizerState", "sgld_step", "sghmc_step",
    "RunConfig", "load_config", "validate",
    "ConfigError", "ContractError", "DegenerateEnsembleError", "DivergenceError", "HeavyTailError",
    "NonFiniteError", "OAISError", "QuadratureWarning", "UnsupportedDimensionError",
    "UnsupportedEstimatorError",
    "calibration_sweep", "fit_rate", "run_ais", "run_replicates",
    "gaussian_target", "make_proposal", "mixture_target",
    "QuadratureSpec", "quad_R", "quad_rho",
    "diagnostics", "log_weights", "snis_estimate",
]
