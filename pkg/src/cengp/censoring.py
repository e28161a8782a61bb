"""Censoring-process simulators with ground-truth latent targets.

All generators are pure functions of their inputs and a 64-bit seed; the
stream is NumPy's seeded PCG64 generator, created fresh per call, so
identical arguments always reproduce identical outputs.  Every variant
produces upper censorship: censored observations never exceed their latent
value (for nonnegative latents), and unlabeled observations equal it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

SYNTHETIC_DOMAIN = (0.0, 10.0)
DEFAULT_THRESHOLD = 2.3  # sits between the latent mean and its peak band

VARIANTS = ("fixed_threshold", "random_fraction", "two_stage", "rand_dropoff")


def synthetic_latent(x):
    """Latent curve for the 1-d synthetic benchmark: 2 + sin(2x)/2 + x/10."""
    x = np.asarray(x, dtype=float)
    return 2.0 + 0.5 * np.sin(2.0 * x) + 0.1 * x


def gen_synthetic(n: int, seed: int, noise_var: float = 0.1,
                  threshold: float = DEFAULT_THRESHOLD) -> Dataset:
    """Noisy samples of the synthetic curve, clipped from above at ``threshold``.

    Inputs are equally spaced on [0, 10].  Rows whose noisy latent reaches the
    threshold are labeled censored and observed at the threshold itself; an
    infinite threshold disables censoring entirely.
    """
    if n < 2:
        raise ValueError("need at least two points")
    if noise_var < 0:
        raise ValueError("noise_var must be nonnegative")
    x = np.linspace(*SYNTHETIC_DOMAIN, n)
    rng = np.random.default_rng(seed)
    y_star = synthetic_latent(x) + math.sqrt(noise_var) * rng.standard_normal(n)
    labels = y_star >= threshold
    y = np.minimum(y_star, threshold)
    thresholds = np.full(n, threshold) if np.isfinite(threshold) else y.copy()
    return Dataset(X=x[:, None], y=y, y_star=y_star, labels=labels,
                   thresholds=thresholds)


def censor_random_fraction(y_star, p: float, a: float, b: float,
                           seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Censor an exact ceil(p*n) random subset by a random intensity.

    Each selected observation i draws an intensity u ~ Uniform[a, b] and is
    clipped to (1 - u) * y_star[i]; everything else is untouched.
    """
    y_star = np.asarray(y_star, dtype=float)
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if not (0.0 <= a < b <= 1.0):
        raise ValueError("intensity range must satisfy 0 <= a < b <= 1")
    n = y_star.shape[0]
    rng = np.random.default_rng(seed)
    k = math.ceil(p * n)
    idx = rng.choice(n, size=k, replace=False)
    intens = rng.uniform(a, b, size=k)
    y = y_star.copy()
    y[idx] = (1.0 - intens) * y_star[idx]
    labels = np.zeros(n, dtype=bool)
    labels[idx] = True
    return y, labels


def censor_two_stage(y_star, availability_flags, c: float) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic two-stage censoring: fixed labels, scaled values.

    Labels come straight from the zero-availability flags and do not depend
    on the intensity; flagged observations are reduced to (1 - c) of their
    latent value.  At c = 0 the values are untouched but the labels remain
    set.
    """
    y_star = np.asarray(y_star, dtype=float)
    flags = np.asarray(availability_flags, dtype=bool)
    if flags.shape != y_star.shape:
        raise ValueError("availability flags must align with the series")
    if not 0.0 <= c <= 1.0:
        raise ValueError("intensity c must lie in [0, 1]")
    y = y_star.copy()
    y[flags] = (1.0 - c) * y_star[flags]
    return y, flags.copy()


def rand_dropoff(y_star, dropoffs, gamma: float, c: float,
                 seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Stochastic supply-driven censoring from a dropoff series.

    Observation i is labeled censored with probability

        p_i = 1 / (1 + exp(ln((1 - gamma)/gamma) - (y*_i - d_i) / y*_i)),

    where d_i is the dropoff count from the interval preceding observation i
    (pass the series already aligned that way; the first entry covers the
    interval before the first observation).  When every y*_i equals its
    preceding dropoffs, each p_i is exactly gamma.  Labeled observations are
    scaled to (1 - c) of their latent value.
    """
    y_star = np.asarray(y_star, dtype=float)
    d = np.asarray(dropoffs, dtype=float)
    if d.shape != y_star.shape:
        raise ValueError("dropoff series must align with the pickup series")
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie strictly inside (0, 1)")
    if not 0.0 <= c <= 1.0:
        raise ValueError("intensity c must lie in [0, 1]")
    if np.any(y_star <= 0):
        raise ValueError("latent pickups must be positive (relative gap is undefined)")
    logit = math.log((1.0 - gamma) / gamma) - (y_star - d) / y_star
    prob = 1.0 / (1.0 + np.exp(logit))
    rng = np.random.default_rng(seed)
    labels = rng.random(y_star.shape[0]) < prob
    y = y_star * (1.0 - c) ** labels
    return y, labels


@dataclass(frozen=True)
class CensorSpec:
    """Parameters of one censoring process; ``apply`` dispatches by variant."""

    variant: str
    p: float | None = None
    a: float | None = None
    b: float | None = None
    c: float | None = None
    gamma: float | None = None
    threshold: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        need = {
            "fixed_threshold": ("threshold",),
            "random_fraction": ("p", "a", "b"),
            "two_stage": ("c",),
            "rand_dropoff": ("gamma", "c"),
        }[self.variant]
        for name in need:
            if getattr(self, name) is None:
                raise ValueError(f"{self.variant} censoring requires {name!r}")

    def apply(self, y_star, *, availability_flags=None,
              dropoffs=None) -> tuple[np.ndarray, np.ndarray]:
        y_star = np.asarray(y_star, dtype=float)
        if self.variant == "fixed_threshold":
            labels = y_star >= self.threshold
            return np.minimum(y_star, self.threshold), labels
        if self.variant == "random_fraction":
            return censor_random_fraction(y_star, self.p, self.a, self.b, self.seed)
        if self.variant == "two_stage":
            if availability_flags is None:
                raise ValueError("two_stage censoring requires availability flags")
            return censor_two_stage(y_star, availability_flags, self.c)
        if dropoffs is None:
            raise ValueError("rand_dropoff censoring requires a dropoff series")
        return rand_dropoff(y_star, dropoffs, self.gamma, self.c, self.seed)
