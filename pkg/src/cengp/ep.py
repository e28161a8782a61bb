"""Expectation Propagation for the censored GP likelihood.

Each likelihood factor (a Gaussian density on unlabeled rows, a survival
term on labeled rows) is replaced by an un-normalized Gaussian site stored in
natural parameters: precision ``tau >= 0`` and precision-weighted mean
``nu``, plus a log normalizer ``log_scale`` fixed by zeroth-moment matching.
A zeroed site (tau = nu = log_scale = 0) is the neutral factor 1.

One sweep visits every site in index order against the posterior from the
last refresh: form the cavity by precision subtraction, compute the tilted
moments analytically, moment-match, and damp the natural-parameter step.
Density-factor matches are exact and independent of the cavity, so those
sites take undamped steps and lock after one sweep; survival sites use the
configured damping.  After each sweep the posterior is recomputed from
scratch,

    Sigma = (K^-1 + diag(tau))^-1,   mu = Sigma nu,

through the well-conditioned factor B = I + S^1/2 K S^1/2 (S = diag(tau)),
which tolerates zero-precision sites.  The evidence estimate uses the
standard decomposition: with site normalizers fixed so each site integrates
against its cavity to the tilted zeroth moment,

    log Z = sum_i log_scale_i - 0.5 log|B| + 0.5 nu . mu,

which reproduces the exact Gaussian evidence whenever no row is labeled.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.stats import norm

from .dataset import Dataset, target_affine
from .exact import NumericalError, _clamp_variance, jittered_cholesky
from .kernels import Kernel
from .tilted import TiltedMoments, censored_moments, gaussian_moments

_PREC_EPS = 1e-12


class CavityError(ArithmeticError):
    """Cavity precision came out non-positive; skip the site this sweep."""


@dataclass
class EPConfig:
    noise_var: float = 1.0
    max_sweeps: int = 100
    tol: float = 1e-6
    damping: float = 0.8

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be positive")


@dataclass
class Sites:
    """Per-observation site factors in natural parameters."""

    tau: np.ndarray        # precision, >= 0
    nu: np.ndarray         # precision * mean
    log_scale: np.ndarray  # log normalizer of the bare exponential factor

    @classmethod
    def zeros(cls, n: int) -> "Sites":
        return cls(np.zeros(n), np.zeros(n), np.zeros(n))

    def copy(self) -> "Sites":
        return Sites(self.tau.copy(), self.nu.copy(), self.log_scale.copy())

    @property
    def n(self) -> int:
        return self.tau.shape[0]

    def site_mean(self) -> np.ndarray:
        """Mean-form site locations (zero where the site is neutral)."""
        out = np.zeros_like(self.nu)
        active = self.tau > 0
        out[active] = self.nu[active] / self.tau[active]
        return out

    def site_log_z(self) -> np.ndarray:
        """Normal-form log amplitudes, recovered from the natural storage.

        Only defined for active sites; neutral sites report 0 (the factor 1).
        """
        out = np.zeros_like(self.log_scale)
        active = self.tau > 0
        t, v = self.tau[active], self.nu[active]
        out[active] = (self.log_scale[active]
                       - 0.5 * np.log(t / (2.0 * np.pi))
                       + v * v / (2.0 * t))
        return out


@dataclass(frozen=True)
class Cavity:
    mean: float
    var: float


@dataclass(frozen=True)
class SweepRecord:
    sweep: int
    max_delta: float
    skipped: int
    log_evidence: float


@dataclass
class EPPosterior:
    """Gaussian approximation to the censored-likelihood posterior.

    ``mu``/``Sigma`` live in standardized target space; predictions through
    ``ep_predict`` are already mapped back to original units.
    """

    mu: np.ndarray
    Sigma: np.ndarray
    log_evidence: float
    sites: Sites
    converged: bool
    sweeps_used: int
    y_shift: float
    y_scale: float
    noise_var: float            # original target units
    jitter: float               # applied to the standardized Gram
    trace: list[SweepRecord] = field(default_factory=list)


def cavity(i: int, mu: np.ndarray, Sigma: np.ndarray, sites: Sites) -> Cavity:
    """Leave-one-out marginal: subtract site i from the posterior marginal."""
    var_i = Sigma[i, i]
    prec_i = 1.0 / var_i
    prec_cav = prec_i - sites.tau[i]
    if prec_cav <= _PREC_EPS:
        raise CavityError(f"non-positive cavity precision at site {i}")
    nu_cav = mu[i] * prec_i - sites.nu[i]
    return Cavity(mean=nu_cav / prec_cav, var=1.0 / prec_cav)


def site_update(tilted: TiltedMoments, cav: Cavity, tau_old: float,
                nu_old: float, damping: float) -> tuple[float, float]:
    """Moment-matched natural parameters, blended with the old site.

    A negative damped precision is clamped to the neutral site.
    """
    if tilted.var <= 0:
        raise ValueError("tilted variance must be positive")
    tau_new = 1.0 / tilted.var - 1.0 / cav.var
    nu_new = tilted.mean / tilted.var - cav.mean / cav.var
    tau = (1.0 - damping) * tau_old + damping * tau_new
    nu = (1.0 - damping) * nu_old + damping * nu_new
    if tau < 0.0:
        return 0.0, 0.0
    return tau, nu


def _refresh(K: np.ndarray, sites: Sites):
    """Posterior (mu, Sigma) from scratch via B = I + S^1/2 K S^1/2."""
    srt = np.sqrt(sites.tau)
    n = K.shape[0]
    B = np.eye(n) + srt[:, None] * K * srt[None, :]
    try:
        L = cholesky(B, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("EP posterior refresh lost positive definiteness") from exc
    V = solve_triangular(L, srt[:, None] * K, lower=True)
    Sigma = K - V.T @ V
    Sigma = 0.5 * (Sigma + Sigma.T)
    mu = Sigma @ sites.nu
    log_det_B = 2.0 * float(np.sum(np.log(np.diag(L))))
    return mu, Sigma, log_det_B


def _cavities(mu, Sigma, sites: Sites):
    """Vectorized leave-one-out marginals; invalid sites are masked out.

    Returns (valid mask, cavity means, cavity variances); entries outside the
    mask hold placeholder values and must be ignored.
    """
    prec = 1.0 / np.diag(Sigma)
    prec_cav = prec - sites.tau
    valid = prec_cav > _PREC_EPS
    safe = np.where(valid, prec_cav, 1.0)
    nu_cav = mu * prec - sites.nu
    return valid, nu_cav / safe, 1.0 / safe


def _tilted_all(z, censored, mean_cav, var_cav, noise_var):
    """Tilted moments for every site against its own branch of Eq-style."""
    gm = gaussian_moments(z, mean_cav, var_cav, noise_var)
    cm = censored_moments(z, mean_cav, var_cav, noise_var)
    pick = lambda a, b: np.where(censored, a, b)
    return TiltedMoments(log_z=pick(cm.log_z, gm.log_z),
                         mean=pick(cm.mean, gm.mean),
                         var=pick(cm.var, gm.var))


def _evidence(sites: Sites, mu, Sigma, z, censored, noise_var,
              log_det_B) -> float:
    """Assemble log Z from cavities, tilted normalizers and the refresh."""
    valid, mc, vc = _cavities(mu, Sigma, sites)
    tilted = _tilted_all(z, censored, mc, vc, noise_var)
    t, u = sites.tau, sites.nu
    log_scale = (tilted.log_z + 0.5 * np.log1p(t * vc) + mc * mc / (2.0 * vc)
                 - (mc / vc + u) ** 2 / (2.0 * (1.0 / vc + t)))
    # a site whose cavity failed stays neutral in the evidence
    sites.log_scale = np.where(valid, log_scale, 0.0)
    return float(np.sum(sites.log_scale) - 0.5 * log_det_B
                 + 0.5 * sites.nu @ mu)


def ep_fit(data: Dataset, kernel: Kernel, config: EPConfig,
           init_sites: Sites | None = None) -> EPPosterior:
    """Run EP sweeps until site parameters stop moving.

    Non-convergence within ``max_sweeps`` is reported through the
    ``converged`` flag, not raised; a Gram factorization failure is an error.
    """
    X = data.X
    y = data.y
    censored = data.labels
    shift, scale = target_affine(y)
    z = (y - shift) / scale
    noise_std_units = config.noise_var / scale**2
    K = kernel.gram(X) / scale**2
    diag_ref = float(np.mean(np.diag(K)))
    # factorization check also fixes the jitter once for this fit
    _, jitter = jittered_cholesky(K, diag_ref)
    K = K + jitter * np.eye(data.n)

    sites = init_sites.copy() if init_sites is not None else Sites.zeros(data.n)
    if sites.n != data.n:
        raise ValueError("init_sites size does not match the dataset")
    if init_sites is not None:
        mu, Sigma, log_det_B = _refresh(K, sites)
    else:
        mu, Sigma, log_det_B = np.zeros(data.n), K.copy(), 0.0

    trace: list[SweepRecord] = []
    converged = False
    sweeps = 0
    for sweep in range(config.max_sweeps):
        # All sites in a sweep update against the same refreshed posterior,
        # so the index-ordered pass vectorizes without changing any value.
        valid, mc, vc = _cavities(mu, Sigma, sites)
        skipped = int(np.sum(~valid))
        tilted = _tilted_all(z, censored, mc, vc, noise_std_units)
        tau_full = 1.0 / tilted.var - 1.0 / vc
        nu_full = tilted.mean / tilted.var - mc / vc
        damping = np.where(censored, config.damping, 1.0)
        tau_new = (1.0 - damping) * sites.tau + damping * tau_full
        nu_new = (1.0 - damping) * sites.nu + damping * nu_full
        clamp = tau_new < 0.0
        tau_new[clamp] = 0.0
        nu_new[clamp] = 0.0
        tau_new = np.where(valid, tau_new, sites.tau)
        nu_new = np.where(valid, nu_new, sites.nu)
        deltas = np.maximum(np.abs(tau_new - sites.tau),
                            np.abs(nu_new - sites.nu))
        max_delta = float(deltas.max()) if deltas.size else 0.0
        sites.tau = tau_new
        sites.nu = nu_new
        mu, Sigma, log_det_B = _refresh(K, sites)
        sweeps = sweep + 1
        log_z = _evidence(sites, mu, Sigma, z, censored, noise_std_units,
                          log_det_B)
        trace.append(SweepRecord(sweep=sweeps, max_delta=max_delta,
                                 skipped=skipped, log_evidence=log_z))
        if max_delta < config.tol:
            converged = True
            break

    # evidence in original units: change of variables adds -n log(scale)
    log_evidence = trace[-1].log_evidence - data.n * np.log(scale)
    return EPPosterior(mu=mu, Sigma=Sigma, log_evidence=log_evidence,
                       sites=sites, converged=converged, sweeps_used=sweeps,
                       y_shift=shift, y_scale=scale, noise_var=config.noise_var,
                       jitter=jitter, trace=trace)


def ep_predict(post: EPPosterior, data: Dataset, kernel: Kernel,
               Xq) -> tuple[np.ndarray, np.ndarray]:
    """Latent predictive mean/variance at query rows, in original units.

    ``data`` and ``kernel`` must be the ones the posterior was fitted on.
    With no censored sites this reduces to the exact Gaussian predictive.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != data.X.shape[1]:
        raise ValueError(
            f"query dimensionality {Xq.shape[1]} != training {data.X.shape[1]}")
    s2 = post.y_scale**2
    K = kernel.gram(data.X) / s2 + post.jitter * np.eye(data.n)
    srt = np.sqrt(post.sites.tau)
    n = data.n
    B = np.eye(n) + srt[:, None] * K * srt[None, :]
    L = cholesky(B, lower=True)
    nu = post.sites.nu
    w = nu - srt * solve_triangular(
        L.T, solve_triangular(L, srt * (K @ nu), lower=True), lower=False)
    Ks = kernel.gram(Xq, data.X) / s2
    mean_z = Ks @ w
    V = solve_triangular(L, srt[:, None] * Ks.T, lower=True)
    prior_diag = kernel.diag(Xq) / s2
    var_z = _clamp_variance(prior_diag - np.sum(V * V, axis=0), prior_diag)
    return post.y_shift + post.y_scale * mean_z, s2 * var_z


def censored_log_likelihood(f, data: Dataset, sigma: float) -> float:
    """Log of the censored likelihood at a fixed latent vector ``f``.

    Unlabeled rows contribute Gaussian log densities, labeled rows log
    survival terms; everything stays in the log domain.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    f = np.asarray(f, dtype=float)
    if f.shape != (data.n,):
        raise ValueError(f"latent vector must have shape ({data.n},)")
    lab = data.labels
    dens = norm.logpdf(data.y[~lab], loc=f[~lab], scale=sigma)
    surv = norm.logsf(data.y[lab], loc=f[lab], scale=sigma)
    return float(np.sum(dens) + np.sum(surv))
