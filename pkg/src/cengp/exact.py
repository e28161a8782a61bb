"""Exact GP regression with Gaussian observation noise.

Targets are centered and scaled to unit variance before factorization (the
zero-mean prior then holds by construction) and predictions are mapped back
to original units on the way out.  Kernel variance and observation noise are
always interpreted in original target units; internally both are divided by
the squared target scale, which leaves the model identical and the linear
algebra well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .dataset import Dataset, target_affine
from .kernels import Kernel

LOG_2PI = float(np.log(2.0 * np.pi))

# Relative jitter ladder for near-singular Gram matrices: deterministic,
# bounded recovery before declaring the parameterization unusable.
JITTER_START = 1e-8
JITTER_MAX = 1e-2

SUBSETS = ("all", "noncensored_only")


class NumericalError(RuntimeError):
    """Factorization failed after jitter escalation, or variance went bad."""


def jittered_cholesky(A: np.ndarray, diag_ref: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A + jitter*I``.

    ``diag_ref`` anchors the jitter ladder (mean kernel diagonal).  Starts at
    ``1e-8 * diag_ref`` and escalates tenfold up to ``1e-2 * diag_ref``.
    """
    jitter = JITTER_START * diag_ref
    limit = JITTER_MAX * diag_ref
    n = A.shape[0]
    while jitter <= limit * (1 + 1e-12):
        try:
            L = cholesky(A + jitter * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        "Cholesky failed after jitter escalation; kernel parameters likely "
        "produce a numerically singular covariance")


def subset_mask(data: Dataset, subset: str) -> np.ndarray:
    if subset not in SUBSETS:
        raise ValueError(f"subset must be one of {SUBSETS}, got {subset!r}")
    if subset == "all":
        return np.ones(data.n, dtype=bool)
    return ~data.labels


@dataclass
class ExactFit:
    """Frozen result of ``fit_exact``; prediction and evidence are pure."""

    kernel: Kernel
    noise_var: float
    X: np.ndarray
    z: np.ndarray            # standardized targets
    chol: np.ndarray         # L with L L^T = K/s^2 + noise/s^2 I + jitter I
    alpha: np.ndarray        # (K/s^2 + noise/s^2 I + jitter I)^-1 z
    y_shift: float
    y_scale: float
    jitter: float

    @property
    def n(self) -> int:
        return self.X.shape[0]


def fit_exact(data: Dataset, kernel: Kernel, noise_var: float,
              subset: str = "all") -> ExactFit:
    """Factorize the Gaussian-likelihood GP over the selected rows.

    ``subset="all"`` trains on every observation; ``"noncensored_only"``
    drops labeled rows first (the censorship-aware preprocessing variant).
    """
    if not (np.isfinite(noise_var) and noise_var > 0):
        raise ValueError(f"noise_var must be positive, got {noise_var!r}")
    mask = subset_mask(data, subset)
    if not mask.any():
        raise ValueError("subset selection left no rows to fit")
    X = data.X[mask]
    y = data.y[mask]
    shift, scale = target_affine(y)
    z = (y - shift) / scale
    K = kernel.gram(X) / scale**2
    diag_ref = float(np.mean(np.diag(K)))
    A = K + (noise_var / scale**2) * np.eye(X.shape[0])
    L, jitter = jittered_cholesky(A, diag_ref)
    alpha = cho_solve((L, True), z)
    return ExactFit(kernel=kernel, noise_var=noise_var, X=X, z=z, chol=L,
                    alpha=alpha, y_shift=shift, y_scale=scale, jitter=jitter)


def _clamp_variance(var: np.ndarray, prior: np.ndarray) -> np.ndarray:
    floor = -1e-8 * np.maximum(prior, 1e-300)
    if np.any(var < floor):
        raise NumericalError("predictive variance went negative beyond tolerance")
    return np.maximum(var, 0.0)


def predict_exact(fit: ExactFit, Xq) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and latent-function variance at query rows.

    Both are de-standardized; a central 95% band is ``mean +- 1.96 sqrt(var)``.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != fit.X.shape[1]:
        raise ValueError(
            f"query dimensionality {Xq.shape[1]} != training {fit.X.shape[1]}")
    s2 = fit.y_scale**2
    Ks = fit.kernel.gram(Xq, fit.X) / s2
    mean_z = Ks @ fit.alpha
    V = solve_triangular(fit.chol, Ks.T, lower=True)
    prior_diag = fit.kernel.diag(Xq) / s2
    var_z = _clamp_variance(prior_diag - np.sum(V * V, axis=0), prior_diag)
    return fit.y_shift + fit.y_scale * mean_z, s2 * var_z


def log_marginal_gaussian(fit: ExactFit) -> float:
    """Exact Gaussian evidence of the fitted rows, in original target units."""
    n = fit.n
    return float(
        -0.5 * fit.z @ fit.alpha
        - np.sum(np.log(np.diag(fit.chol)))
        - 0.5 * n * LOG_2PI
        - n * np.log(fit.y_scale)
    )


def log_marginal_with_gradient(
    data: Dataset, kernel: Kernel, noise_var: float, subset: str = "all"
) -> tuple[float, np.ndarray]:
    """Evidence and its gradient w.r.t. ``[kernel log params..., log noise]``.

    Uses the standard trace identity: for covariance A(theta),
    d log evidence / d theta = 0.5 tr((alpha alpha^T - A^-1) dA/dtheta).
    """
    mask = subset_mask(data, subset)
    if not mask.any():
        raise ValueError("subset selection left no rows to fit")
    X = data.X[mask]
    y = data.y[mask]
    shift, scale = target_affine(y)
    z = (y - shift) / scale
    s2 = scale**2
    K, grads = kernel.gram_with_grads(X)
    K = K / s2
    diag_ref = float(np.mean(np.diag(K)))
    n = X.shape[0]
    A = K + (noise_var / s2) * np.eye(n)
    L, _ = jittered_cholesky(A, diag_ref)
    alpha = cho_solve((L, True), z)
    value = float(-0.5 * z @ alpha - np.sum(np.log(np.diag(L)))
                  - 0.5 * n * LOG_2PI - n * np.log(scale))
    Ainv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Ainv
    grad = np.empty(len(grads) + 1)
    for j, G in enumerate(grads):
        grad[j] = 0.5 * np.sum(W * (G / s2))
    grad[-1] = 0.5 * np.trace(W) * (noise_var / s2)
    return value, grad
