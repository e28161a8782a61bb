"""CSV ingestion for demand series and weather features.

Demand files carry one row per time step: ``date`` (ISO-8601), ``demand``
(nonnegative real), ``available`` (0/1; 0 marks a zero-availability step,
which labels the row censored), plus optional ``dropoffs`` and ``latent``
columns.  Weather files carry ``date`` plus numeric feature columns and are
inner-joined on date; joined weather columns are standardized.
"""

from __future__ import annotations

import logging

import numpy as np
import pandas as pd

from .dataset import Dataset

log = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("date", "demand", "available")


class ParseError(ValueError):
    """Malformed input file; the message names the offending column/value."""


def _numeric(frame: pd.DataFrame, column: str) -> np.ndarray:
    values = pd.to_numeric(frame[column], errors="coerce")
    if values.isna().any():
        row = int(values.isna().idxmax())
        raise ParseError(f"non-numeric value in column {column!r} (row {row})")
    return values.to_numpy(dtype=float)


def _dates(frame: pd.DataFrame, column: str = "date") -> pd.Series:
    parsed = pd.to_datetime(frame[column], errors="coerce", format="ISO8601")
    if parsed.isna().any():
        row = int(parsed.isna().idxmax())
        raise ParseError(f"unparseable date in column {column!r} (row {row})")
    return parsed


def load_demand_csv(path) -> Dataset:
    """Read a demand series into a dataset with a temporal index feature."""
    frame = pd.read_csv(path)
    for column in REQUIRED_COLUMNS:
        if column not in frame.columns:
            raise ParseError(f"missing required column {column!r}")
    dates = _dates(frame)
    if not dates.is_monotonic_increasing:
        raise ParseError("timestamps must be non-decreasing in column 'date'")
    demand = _numeric(frame, "demand")
    if np.any(demand < 0):
        raise ParseError("column 'demand' must be nonnegative")
    available = _numeric(frame, "available")
    if not np.isin(available, (0.0, 1.0)).all():
        raise ParseError("column 'available' must contain only 0 or 1")
    labels = available == 0.0
    n = len(frame)
    X = np.arange(n, dtype=float)[:, None]
    dropoffs = _numeric(frame, "dropoffs") if "dropoffs" in frame.columns else None
    y_star = _numeric(frame, "latent") if "latent" in frame.columns else None
    return Dataset(X=X, y=demand, y_star=y_star, labels=labels,
                   dates=dates.dt.strftime("%Y-%m-%d").to_numpy(),
                   dropoffs=dropoffs)


def load_weather_csv(path, data: Dataset) -> tuple[Dataset, list[int]]:
    """Join standardized weather features onto a dated demand dataset.

    Returns the joined dataset and the indices of the appended feature
    columns (the active dims for a weather kernel leaf).  Demand rows with
    no matching weather date are dropped with a warning.
    """
    if data.dates is None:
        raise ParseError("demand dataset carries no dates to join on")
    frame = pd.read_csv(path)
    if "date" not in frame.columns:
        raise ParseError("missing required column 'date'")
    wdates = _dates(frame).dt.strftime("%Y-%m-%d")
    dup = wdates.duplicated()
    if dup.any():
        raise ParseError(f"duplicate date in weather file: {wdates[dup.idxmax()]}")
    feature_cols = [c for c in frame.columns if c != "date"]
    if not feature_cols:
        raise ParseError("weather file has no feature columns")
    values = np.column_stack([_numeric(frame, c) for c in feature_cols])
    lookup = {d: i for i, d in enumerate(wdates)}
    keep = np.array([d in lookup for d in data.dates])
    if not keep.any():
        raise ParseError("no overlapping dates between demand and weather files")
    dropped = int((~keep).sum())
    if dropped:
        log.warning("dropping %d demand rows without weather coverage", dropped)
    joined = data.select(keep)
    rows = np.array([lookup[d] for d in joined.dates])
    W = values[rows]
    mean = W.mean(axis=0)
    std = W.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    W = (W - mean) / std
    base = joined.X.shape[1]
    joined = joined.with_features(np.hstack([joined.X, W]))
    return joined, list(range(base, base + W.shape[1]))
