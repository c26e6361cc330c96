"""Hub selection with false discovery rate control.

The pipeline estimates a weight matrix (a precision matrix or a multitask
coefficient matrix), debiases it, approximates the law of edge-wise maximum
statistics by a Gaussian bootstrap, turns each row into a combinatorial
p-value for "degree below ``k_tau``" and selects rows by a
Benjamini-Hochberg step.
"""

from ._version import __version__
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateDenominator,
    InvalidCovariance,
    InvalidInput,
    NegativeUnderLog,
    ParseError,
    ShapeError,
    StarTrekError,
    ZeroVariance,
)
from .ggm import GGMBootstrap, build_scores, fit_ggm, onestep_debias
from .graphgen import GraphModel, generate_graph, ground_truth, sample_gaussian
from .harness import ExperimentConfig, run_ggm_experiment, run_multitask_experiment, verify_ccb
from .multitask import fit_multitask, select_hub_responses
from .quantile import BootstrapEnsemble, build_ensemble, c_hat, c_hat_inv
from .select import HypothesisConfig, bh_select, node_alpha, skipdown_test, startrek
from .solvers import SolverConfig, glasso, glasso_cv, lasso, m_program, scaled_lasso

__all__ = [
    "__version__",
    "BootstrapEnsemble", "ConfigError", "ConvergenceError", "DegenerateDenominator",
    "ExperimentConfig", "GGMBootstrap", "GraphModel", "HypothesisConfig", "InvalidCovariance",
    "InvalidInput", "NegativeUnderLog", "ParseError", "ShapeError", "SolverConfig",
    "StarTrekError", "ZeroVariance",
    "bh_select", "build_ensemble", "build_scores", "c_hat", "c_hat_inv", "fit_ggm",
    "fit_multitask", "generate_graph", "glasso", "glasso_cv", "ground_truth", "lasso",
    "m_program", "node_alpha", "onestep_debias", "run_ggm_experiment",
    "run_multitask_experiment", "sample_gaussian", "scaled_lasso", "select_hub_responses",
    "skipdown_test", "startrek", "verify_ccb",
]
