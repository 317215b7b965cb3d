"""Non-stationary angular dependence functions and bivariate return curves."""

__version__ = "0.1.0"

from .adf import (AdfGrid, BernsteinFitConfig, BernsteinModel, QuantileSchedule, RayGrid,
                  apply_bounds, bernstein_eval, eta_from_adf, fit_bernstein, lambda_qr_average,
                  lambda_qr_pointwise, min_projection)
from .basis import BasisSpec
from .copulas import (FAMILIES, CopulaSpec, McmcConfig, frozen_sampler, oracle_adf_mc,
                      param_trajectory, sample, true_adf)
from .errors import ConfigError, NsadfError, NumericalError
from .evaluation import (BootstrapPlan, ReplicationSet, block_bootstrap, chi_u, curve_check,
                         envelope, ise, mise, rolling_eta)
from .margins import (ExpSeries, MarginalModel, fit_marginal, from_exponential, gpd_cdf,
                      gpd_fit, gpd_fit_ns, locscale_fit, semi_empirical_cdf,
                      semi_empirical_quantile, to_exponential)
from .quantreg import QuantileFit, check_loss, fit_quantile, fit_quantile_path
from .return_curve import (ReturnCurve, average_curves, back_transform, enforce_ordering,
                           exp_curve, return_curve)
from .surrogate import (CaseConfig, SurrogateSpec, generate_surrogate, run_case_pipeline)

__all__ = [
    "AdfGrid", "BasisSpec", "BernsteinFitConfig", "BernsteinModel", "BootstrapPlan",
    "CaseConfig", "ConfigError", "CopulaSpec", "ExpSeries", "FAMILIES", "MarginalModel",
    "McmcConfig", "NsadfError", "NumericalError", "QuantileFit", "QuantileSchedule",
    "RayGrid", "ReplicationSet", "ReturnCurve", "SurrogateSpec", "apply_bounds",
    "average_curves", "back_transform", "bernstein_eval", "block_bootstrap", "check_loss",
    "chi_u", "curve_check", "enforce_ordering", "envelope", "eta_from_adf", "exp_curve",
    "fit_bernstein", "fit_marginal", "fit_quantile", "fit_quantile_path", "from_exponential",
    "frozen_sampler", "generate_surrogate", "gpd_cdf", "gpd_fit", "gpd_fit_ns", "ise",
    "lambda_qr_average", "lambda_qr_pointwise", "locscale_fit", "min_projection", "mise",
    "oracle_adf_mc", "param_trajectory", "return_curve", "rolling_eta", "run_case_pipeline",
    "sample", "semi_empirical_cdf", "semi_empirical_quantile", "to_exponential", "true_adf",
]
