"""The three model variants behind one fit/predict surface.

ncgp    Gaussian-likelihood GP on every observation.
ncgp_a  Gaussian-likelihood GP trained only on unlabeled rows.
cgp     GP with the censored likelihood, inferred by EP.

Hyperparameters are fitted by evidence ascent unless the caller disables
optimization, in which case the heuristic initialization is used as-is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .ep import EPConfig, EPPosterior, ep_fit, ep_predict
from .exact import ExactFit, fit_exact, predict_exact
from .hyperopt import OptimizerConfig, default_init, optimize_type2_ml
from .kernels import Kernel

MODEL_IDS = ("ncgp", "ncgp_a", "cgp")


@dataclass
class FittedModel:
    model_id: str
    kernel: Kernel
    noise_var: float
    data: Dataset
    exact: ExactFit | None = None
    posterior: EPPosterior | None = None
    log_evidence: float = float("nan")

    @property
    def converged(self) -> bool:
        return self.posterior.converged if self.posterior is not None else True

    @property
    def sweeps(self) -> int:
        return self.posterior.sweeps_used if self.posterior is not None else 0

    def predict(self, Xq) -> tuple[np.ndarray, np.ndarray]:
        if self.posterior is not None:
            return ep_predict(self.posterior, self.data, self.kernel, Xq)
        return predict_exact(self.exact, Xq)


def default_method(model_id: str) -> str:
    """First-order ascent for the EP evidence, quasi-Newton otherwise."""
    return "adam_like_first_order" if model_id == "cgp" else "quasi_newton"


def fit_model(model_id: str, data: Dataset, kernel_template: Kernel,
              opt_config: OptimizerConfig | None = None,
              ep_config: EPConfig | None = None,
              optimize: bool = True) -> FittedModel:
    if model_id not in MODEL_IDS:
        raise ValueError(f"model_id must be one of {MODEL_IDS}")
    subset = "noncensored_only" if model_id == "ncgp_a" else "all"
    objective = "ep_censored" if model_id == "cgp" else "exact_gaussian"
    ep_config = ep_config or EPConfig()

    if optimize:
        opt_config = opt_config or OptimizerConfig(method=default_method(model_id))
        kernel, noise_var, value, _ = optimize_type2_ml(
            objective, data, kernel_template, opt_config,
            ep_config=ep_config, subset=subset)
    else:
        theta = default_init(data, kernel_template, subset=subset)
        k = kernel_template.n_params
        kernel = kernel_template.with_log_params(theta[:k])
        noise_var = float(np.exp(theta[k]))
        value = float("nan")

    if model_id == "cgp":
        cfg = EPConfig(noise_var=noise_var, max_sweeps=ep_config.max_sweeps,
                       tol=ep_config.tol, damping=ep_config.damping)
        post = ep_fit(data, kernel, cfg)
        return FittedModel(model_id, kernel, noise_var, data,
                           posterior=post, log_evidence=post.log_evidence)
    fit = fit_exact(data, kernel, noise_var, subset=subset)
    from .exact import log_marginal_gaussian

    return FittedModel(model_id, kernel, noise_var, data, exact=fit,
                       log_evidence=log_marginal_gaussian(fit))
