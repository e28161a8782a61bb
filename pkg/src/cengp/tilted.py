"""Stable normal-tail helpers and analytic tilted moments.

The censored-likelihood moment updates need the normal log-CDF and the
hazard-style ratio phi(z)/Phi(z) far into the left tail, where naive
formulas underflow.  Both are computed through the complementary error
function in log space, which stays accurate down to z of order -1e6, far
beyond the z ~ -30 regime extreme censoring can reach.

Given a Gaussian cavity N(m, v) and observation noise s2, the product of the
cavity with a single likelihood factor has moments:

  density factor (observation y below its threshold), with t = v + s2:
      Z    = N(y | m, t)
      mean = m + v (y - m) / t
      var  = v - v^2 / t

  survival factor (observation clipped at y_u), with z = (m - y_u)/sqrt(t):
      Z    = Phi(z)
      mean = m + v R(z) / sqrt(t)
      var  = v - v^2 R(z) (z + R(z)) / t          R(z) = phi(z)/Phi(z)

The survival-branch mean always shifts upward and its variance always
shrinks: R > 0 and 0 < R (z + R) < 1 for every finite z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

LOG_2PI = float(np.log(2.0 * np.pi))


def log_norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return -0.5 * (z * z + LOG_2PI)


def log_norm_cdf(z):
    return log_ndtr(np.asarray(z, dtype=float))


def inv_mills_ratio(z):
    """phi(z) / Phi(z), stable for arbitrarily negative z."""
    z = np.asarray(z, dtype=float)
    return np.exp(log_norm_pdf(z) - log_ndtr(z))


@dataclass(frozen=True)
class TiltedMoments:
    """Zeroth (log), first and second central moments of a tilted marginal."""

    log_z: np.ndarray
    mean: np.ndarray
    var: np.ndarray


def _check_inputs(var_cav, noise_var):
    if np.any(np.asarray(var_cav) <= 0):
        raise ValueError("cavity variance must be positive")
    if np.any(np.asarray(noise_var) <= 0):
        raise ValueError("noise variance must be positive")


def gaussian_moments(y, mean_cav, var_cav, noise_var) -> TiltedMoments:
    """Moments of cavity times the Gaussian density factor (elementwise)."""
    _check_inputs(var_cav, noise_var)
    y = np.asarray(y, dtype=float)
    m = np.asarray(mean_cav, dtype=float)
    v = np.asarray(var_cav, dtype=float)
    t = np.asarray(noise_var, dtype=float) + v
    log_z = -0.5 * (np.log(t) + LOG_2PI) - (y - m) ** 2 / (2.0 * t)
    mean = m + v * (y - m) / t
    var = v - v * v / t
    return TiltedMoments(log_z=log_z, mean=mean, var=var)


def censored_moments(y_u, mean_cav, var_cav, noise_var) -> TiltedMoments:
    """Moments of cavity times the survival factor 1 - Phi((y_u - f)/sigma)."""
    _check_inputs(var_cav, noise_var)
    y_u = np.asarray(y_u, dtype=float)
    m = np.asarray(mean_cav, dtype=float)
    v = np.asarray(var_cav, dtype=float)
    t = np.asarray(noise_var, dtype=float) + v
    rt = np.sqrt(t)
    z = (m - y_u) / rt
    ratio = inv_mills_ratio(z)
    log_z = log_norm_cdf(z)
    mean = m + v * ratio / rt
    var = v - v * v * ratio * (z + ratio) / t
    return TiltedMoments(log_z=log_z, mean=mean, var=var)
