"""Censored linear regression baseline (Tobit-style likelihood).

The joint likelihood mixes Gaussian density terms on unlabeled rows with
survival terms 1 - Phi on labeled rows; evaluation is entirely in the log
domain.  Fitting maximizes that likelihood over (beta, log sigma) with the
generic ascent machinery from :mod:`cengp.hyperopt`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .dataset import Dataset


def tobit_log_likelihood(beta, sigma: float, data: Dataset) -> float:
    """Log likelihood of a linear predictor under upper censorship."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.dim,):
        raise ValueError(f"beta must have shape ({data.dim},)")
    xb = data.X @ beta
    lab = data.labels
    dens = norm.logpdf(data.y[~lab], loc=xb[~lab], scale=sigma)
    surv = norm.logsf(data.y[lab], loc=xb[lab], scale=sigma)
    return float(np.sum(dens) + np.sum(surv))


@dataclass(frozen=True)
class TobitFit:
    beta: np.ndarray
    sigma: float
    intercept: bool
    log_likelihood: float

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.intercept:
            X = np.hstack([np.ones((X.shape[0], 1)), X])
        return X @ self.beta


def fit_tobit(data: Dataset, add_intercept: bool = True,
              config=None) -> TobitFit:
    """Maximum-likelihood linear fit under the censored likelihood.

    Starts from the ordinary least-squares solution and ascends the log
    likelihood over (beta, log sigma).
    """
    from .hyperopt import OptimizerConfig, maximize

    X = data.X
    if add_intercept:
        X = np.hstack([np.ones((data.n, 1)), X])
    work = Dataset(X=X, y=data.y, labels=data.labels,
                   thresholds=data.thresholds)

    beta0, *_ = np.linalg.lstsq(X, data.y, rcond=None)
    resid = data.y - X @ beta0
    sigma0 = max(float(resid.std()), 1e-3)
    theta0 = np.concatenate([beta0, [np.log(sigma0)]])

    def objective(theta):
        return tobit_log_likelihood(theta[:-1], float(np.exp(theta[-1])), work)

    config = config or OptimizerConfig(method="quasi_newton", max_iters=500)
    theta, value, _ = maximize(objective, theta0, config)
    return TobitFit(beta=theta[:-1], sigma=float(np.exp(theta[-1])),
                    intercept=add_intercept, log_likelihood=value)
