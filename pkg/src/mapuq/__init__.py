"""MAP estimation with conservative credible regions for convex imaging problems."""

__version__ = "0.1.0"

from .errors import (
    ChainFailureError,
    ConvergenceError,
    DegenerateSweepError,
    InvalidInputError,
    NumericError,
    UQError,
)
from .model import Kind, PosteriorModel, eval_potential, gen_gaussian, l1_deconvolution, potential, tv_tomography
from .admm import AdmmConfig, SolveReport, kkt_check, solve_map
from .region import (
    CredibleRegion,
    ErrorBand,
    SweepResult,
    TestOutcome,
    build_region,
    is_member,
    knockout_test,
    scalar_sweep,
    error_band,
)
from .pxmala import ChainConfig, ChainOutput, QuantileEstimate, estimate_gamma, relative_error, run_chain
from .analytic import GenGaussianModel, asymptotic_limit, error_curve, exact_gamma, mc_gamma

__all__ = [
    "AdmmConfig", "ChainConfig", "ChainFailureError", "ChainOutput", "ConvergenceError",
    "CredibleRegion", "DegenerateSweepError", "ErrorBand", "GenGaussianModel", "InvalidInputError",
    "Kind", "NumericError", "PosteriorModel", "QuantileEstimate", "SolveReport", "SweepResult",
    "TestOutcome", "UQError", "asymptotic_limit", "build_region", "error_band", "error_curve",
    "estimate_gamma", "eval_potential", "exact_gamma", "gen_gaussian", "is_member", "kkt_check",
    "knockout_test", "l1_deconvolution", "mc_gamma", "potential", "relative_error", "run_chain",
    "scalar_sweep", "solve_map", "tv_tomography",
]
