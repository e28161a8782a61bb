"""Point-forecast metrics, split-aware scoring and time-consecutive folds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset

SPLITS = ("entire", "noncensored_only")


def _aligned(pred, target):
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ValueError(f"length mismatch: {pred.shape} vs {target.shape}")
    if pred.size < 1:
        raise ValueError("need at least one point")
    return pred, target


def rmse(pred_mean, y_star) -> float:
    """Root mean squared error against the latent targets."""
    pred, target = _aligned(pred_mean, y_star)
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def r2(pred_mean, y_star) -> float:
    """Coefficient of determination, 1 - SSE/SST against the target mean."""
    pred, target = _aligned(pred_mean, y_star)
    if target.size < 2:
        raise ValueError("r2 needs at least two points")
    sst = float(np.sum((target - target.mean()) ** 2))
    if sst == 0.0:
        raise ValueError("r2 is undefined for constant targets")
    sse = float(np.sum((pred - target) ** 2))
    return 1.0 - sse / sst


@dataclass(frozen=True)
class EvalReport:
    split: str
    rmse: float
    r2: float
    n_points: int


@dataclass(frozen=True)
class FoldPlan:
    """Contiguous, disjoint index ranges covering a series in time order."""

    folds: tuple[tuple[int, int], ...]  # half-open [start, stop) ranges

    @property
    def n_folds(self) -> int:
        return len(self.folds)

    def indices(self, k: int) -> np.ndarray:
        start, stop = self.folds[k]
        return np.arange(start, stop)

    def complement(self, k: int, n: int) -> np.ndarray:
        start, stop = self.folds[k]
        return np.concatenate([np.arange(0, start), np.arange(stop, n)])


def make_time_folds(n: int, fold_size: int) -> FoldPlan:
    """ceil(n / fold_size) consecutive folds; the last one may run short."""
    if fold_size < 1:
        raise ValueError("fold_size must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    folds = tuple((s, min(s + fold_size, n)) for s in range(0, n, fold_size))
    return FoldPlan(folds=folds)


def evaluate_split(pred_mean, data: Dataset, split: str) -> EvalReport:
    """Score predictions on one split, against latents when available.

    ``entire`` scores every row; ``noncensored_only`` keeps unlabeled rows.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}")
    pred = np.asarray(pred_mean, dtype=float)
    if pred.shape != (data.n,):
        raise ValueError("predictions must align with the dataset rows")
    mask = np.ones(data.n, dtype=bool) if split == "entire" else ~data.labels
    if not mask.any():
        raise ValueError(f"split {split!r} selects no rows")
    target = data.y_star if data.y_star is not None else data.y
    return EvalReport(split=split,
                      rmse=rmse(pred[mask], target[mask]),
                      r2=r2(pred[mask], target[mask]),
                      n_points=int(mask.sum()))
