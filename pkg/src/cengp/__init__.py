"""GP regression with a censorship-aware likelihood for demand modeling."""

from .censoring import (CensorSpec, censor_random_fraction, censor_two_stage,
                        gen_synthetic, rand_dropoff, synthetic_latent)
from .dataset import Dataset
from .ep import (Cavity, CavityError, EPConfig, EPPosterior, Sites, cavity,
                 censored_log_likelihood, ep_fit, ep_predict, site_update)
from .exact import (ExactFit, NumericalError, fit_exact, log_marginal_gaussian,
                    log_marginal_with_gradient, predict_exact)
from .hyperopt import (OptimizerConfig, default_init, maximize,
                       numeric_gradient, optimize_type2_ml)
from .kernels import (Kernel, KernelError, Matern, Periodic, Product,
                      SquaredExp, Sum, from_dict, from_json)
from .metrics import (EvalReport, FoldPlan, evaluate_split, make_time_folds,
                      r2, rmse)
from .models import MODEL_IDS, FittedModel, fit_model
from .tilted import (TiltedMoments, censored_moments, gaussian_moments,
                     inv_mills_ratio, log_norm_cdf, log_norm_pdf)
from .tobit import TobitFit, fit_tobit, tobit_log_likelihood

__version__ = "0.1.0"

__all__ = [
    "CensorSpec", "censor_random_fraction", "censor_two_stage",
    "gen_synthetic", "rand_dropoff", "synthetic_latent",
    "Dataset",
    "Cavity", "CavityError", "EPConfig", "EPPosterior", "Sites", "cavity",
    "censored_log_likelihood", "ep_fit", "ep_predict", "site_update",
    "ExactFit", "NumericalError", "fit_exact", "log_marginal_gaussian",
    "log_marginal_with_gradient", "predict_exact",
    "OptimizerConfig", "default_init", "maximize", "numeric_gradient",
    "optimize_type2_ml",
    "Kernel", "KernelError", "Matern", "Periodic", "Product", "SquaredExp",
    "Sum", "from_dict", "from_json",
    "EvalReport", "FoldPlan", "evaluate_split", "make_time_folds", "r2",
    "rmse",
    "MODEL_IDS", "FittedModel", "fit_model",
    "TiltedMoments", "censored_moments", "gaussian_moments",
    "inv_mills_ratio", "log_norm_cdf", "log_norm_pdf",
    "TobitFit", "fit_tobit", "tobit_log_likelihood",
    "__version__",
]
