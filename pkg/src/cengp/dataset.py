"""Dataset container shared by all models and simulators.

A dataset couples feature rows with observed targets, optional latent
(ground-truth) targets from simulation, per-row censorship labels and the
per-row upper threshold at which a labeled observation was clipped.  Observed
values on labeled rows always equal their threshold (upper, Type-I
censorship); on unlabeled rows the observation equals the latent value
whenever the latent is known.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np


def _as_1d(x, n: int | None, name: str, dtype=float) -> np.ndarray:
    a = np.asarray(x, dtype=dtype)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-d, got shape {a.shape}")
    if n is not None and a.shape[0] != n:
        raise ValueError(f"{name} has length {a.shape[0]}, expected {n}")
    return a


@dataclass
class Dataset:
    """Feature rows plus observed, latent and censorship information.

    Parameters
    ----------
    X : (n, d) feature matrix.  A 1-d array is promoted to a single column.
    y : (n,) observed targets.
    y_star : optional (n,) latent targets (simulation ground truth).
    labels : optional (n,) booleans, True where the row may be censored.
    thresholds : optional (n,) clipping thresholds; defaults to ``y`` (the
        observed value of a censored row is its threshold).
    dates : optional (n,) ISO-8601 date strings, kept for joins and reports.
    dropoffs : optional (n,) supply proxy series aligned so that entry ``i``
        holds the count from the interval preceding observation ``i``.
    """

    X: np.ndarray
    y: np.ndarray
    y_star: np.ndarray | None = None
    labels: np.ndarray | None = None
    thresholds: np.ndarray | None = None
    dates: np.ndarray | None = None
    dropoffs: np.ndarray | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        self.X = X
        n = X.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one row")
        self.y = _as_1d(self.y, n, "y")
        if self.y_star is not None:
            self.y_star = _as_1d(self.y_star, n, "y_star")
        if self.labels is None:
            self.labels = np.zeros(n, dtype=bool)
        else:
            self.labels = _as_1d(self.labels, n, "labels", dtype=bool)
        if self.thresholds is None:
            self.thresholds = self.y.copy()
        else:
            self.thresholds = _as_1d(self.thresholds, n, "thresholds")
        if self.dates is not None:
            self.dates = np.asarray(self.dates)
            if self.dates.shape[0] != n:
                raise ValueError("dates length mismatch")
        if self.dropoffs is not None:
            self.dropoffs = _as_1d(self.dropoffs, n, "dropoffs")
        self._validate()

    def _validate(self):
        scale = max(1.0, float(np.max(np.abs(self.y))))
        tol = 1e-9 * scale
        lab = self.labels
        if np.any(np.abs(self.y[lab] - self.thresholds[lab]) > tol):
            raise ValueError("labeled rows must observe their threshold value")
        if self.y_star is not None:
            free = ~lab
            if np.any(np.abs(self.y[free] - self.y_star[free]) > tol):
                raise ValueError("unlabeled rows must observe the latent value")

    # -- basic views ---------------------------------------------------

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def n_censored(self) -> int:
        return int(self.labels.sum())

    def select(self, mask) -> "Dataset":
        """Row subset as a new dataset (mask is boolean or index array)."""
        mask = np.asarray(mask)
        return Dataset(
            X=self.X[mask],
            y=self.y[mask],
            y_star=None if self.y_star is None else self.y_star[mask],
            labels=self.labels[mask],
            thresholds=self.thresholds[mask],
            dates=None if self.dates is None else self.dates[mask],
            dropoffs=None if self.dropoffs is None else self.dropoffs[mask],
        )

    def with_features(self, X_new) -> "Dataset":
        """Same rows with a replacement feature matrix."""
        out = replace(self, X=np.asarray(X_new, dtype=float))
        return out

    @cached_property
    def feature_stats(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-column mean and standard deviation (std floored at tiny)."""
        mean = self.X.mean(axis=0)
        std = self.X.std(axis=0)
        std = np.where(std < 1e-12, 1.0, std)
        return mean, std

    @cached_property
    def X_standardized(self) -> np.ndarray:
        """Cached standardized copy of the feature matrix."""
        mean, std = self.feature_stats
        return (self.X - mean) / std


def target_affine(y: np.ndarray) -> tuple[float, float]:
    """Shift/scale mapping targets to zero mean, unit variance.

    Degenerate targets (zero spread) keep scale 1 so the map stays invertible.
    """
    y = np.asarray(y, dtype=float)
    shift = float(y.mean())
    scale = float(y.std())
    if not np.isfinite(scale) or scale < 1e-12:
        scale = 1.0
    return shift, scale
