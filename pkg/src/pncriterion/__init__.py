"""Sample-size adequacy for parametric models via the expected KL estimation risk."""
__version__ = "0.1.0"

from .estimator import PNCriterion
from .exceptions import ConfigError, DataError, NumericError, PNError
from .expfam import (
    CategoricalModel,
    GenericModel,
    MultinomialModel,
    ProductReference,
    QuadraticModel,
    Sampled,
    build_generic_model,
    eta_of_theta,
    kl_between_members,
)
from .general import GeneralModel, NormalRegressionModel, PoissonRegressionModel
from .mle import MleSolution, solve_mle
from .modelsel import compare_models, tic
from .pipeline import run_criterion
from .risk import (
    RiskReport,
    first_order_expfam,
    first_order_general,
    m_statistic,
    multinomial_risk,
    required_sample_size,
    second_order_expfam,
    second_order_general_theorem1,
)
from .threshold import min_bayes_error_bound, threshold_for_alpha

__all__ = [
    "CategoricalModel", "ConfigError", "DataError", "GeneralModel", "GenericModel",
    "MleSolution", "MultinomialModel", "NormalRegressionModel", "NumericError", "PNCriterion",
    "PNError", "PoissonRegressionModel", "ProductReference", "QuadraticModel", "RiskReport",
    "Sampled", "build_generic_model", "compare_models", "eta_of_theta", "first_order_expfam",
    "first_order_general", "kl_between_members", "m_statistic", "min_bayes_error_bound",
    "multinomial_risk", "required_sample_size", "run_criterion", "second_order_expfam",
    "second_order_general_theorem1", "solve_mle", "threshold_for_alpha", "tic",
]
