"""Experiment harness: censorship grids over the three model variants.

A run takes a data source (CSV files or one of the synthetic generators), a
censoring grid, a model subset and a repeat count, applies the censoring
process per grid point and repeat, fits every requested model, scores on the
entire / non-censored splits and persists the result tables plus
plot-ready posterior curves.  Everything is deterministic given the base
seed: per-repeat seeds derive as ``base + repeat`` and output rows are
canonically ordered, so reruns reproduce output files byte for byte.
Wall-clock timings are collected in memory; writing them into results.csv is
opt-in because measured times would break byte-level reproducibility.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .censoring import CensorSpec, gen_synthetic
from .dataset import Dataset
from .ep import EPConfig
from .hyperopt import OptimizerConfig
from .io import load_demand_csv, load_weather_csv
from .kernels import Kernel, Matern, Periodic, SquaredExp, Sum, from_dict
from .metrics import SPLITS, evaluate_split, make_time_folds
from .models import MODEL_IDS, default_method, fit_model

log = logging.getLogger(__name__)

RESULT_COLUMNS = ["model", "c", "gamma", "p", "a", "b", "split", "rmse", "r2",
                  "converged", "sweeps", "runtime_ms", "seed", "error"]
GRID_COLUMNS = ["c", "gamma", "p", "a", "b"]
CURVE_COLUMNS = ["x", "mean", "lower95", "upper95", "y_observed", "y_latent",
                 "label"]

DATASET_KINDS = ("csv", "synthetic", "synthetic_demand", "synthetic_pickups")


class ConfigError(ValueError):
    """Unusable experiment configuration."""


@dataclass(frozen=True)
class GridPoint:
    c: float | None = None
    gamma: float | None = None
    p: float | None = None
    a: float | None = None
    b: float | None = None
    threshold: float | None = None

    def key(self) -> tuple:
        return tuple(-math.inf if v is None else float(v)
                     for v in (self.c, self.gamma, self.p, self.a, self.b))


@dataclass
class ResultRecord:
    model: str
    grid: GridPoint
    split: str
    rmse: float
    r2: float
    converged: bool
    sweeps: int
    runtime_ms: float
    seed: int
    repeat: int
    error: str = ""

    def row(self, with_timing: bool) -> dict:
        g = self.grid
        return {
            "model": self.model, "c": g.c, "gamma": g.gamma, "p": g.p,
            "a": g.a, "b": g.b, "split": self.split, "rmse": self.rmse,
            "r2": self.r2, "converged": self.converged, "sweeps": self.sweeps,
            "runtime_ms": self.runtime_ms if with_timing else None,
            "seed": self.seed, "error": self.error,
        }


@dataclass
class SourceData:
    X: np.ndarray
    y_star: np.ndarray
    flags: np.ndarray | None = None      # zero-availability labels for two_stage
    dropoffs: np.ndarray | None = None
    weather_dims: list[int] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    dataset: dict
    censoring: dict
    kernel: Kernel | None = None
    models: tuple[str, ...] = MODEL_IDS
    repeats: int = 1
    seed: int = 0
    fold_size: int | None = None
    workers: int = 1
    optimize: bool = True
    timings: bool = False
    optimizer: dict = field(default_factory=dict)
    ep: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        known = {"dataset", "censoring", "kernel", "models", "repeats", "seed",
                 "fold_size", "workers", "optimize", "timings", "optimizer",
                 "ep"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for required in ("dataset", "censoring"):
            if required not in raw:
                raise ConfigError(f"config is missing the {required!r} section")
        kind = raw["dataset"].get("kind")
        if kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}")
        models = tuple(raw.get("models", MODEL_IDS))
        bad = [m for m in models if m not in MODEL_IDS]
        if bad or not models:
            raise ConfigError(f"models must be a non-empty subset of {MODEL_IDS}")
        repeats = int(raw.get("repeats", 1))
        if repeats < 1:
            raise ConfigError("repeats must be >= 1")
        kernel = None
        if raw.get("kernel") is not None:
            try:
                kernel = from_dict(raw["kernel"])
            except Exception as exc:
                raise ConfigError(f"bad kernel spec: {exc}") from exc
        fold_size = raw.get("fold_size")
        if fold_size is not None:
            fold_size = int(fold_size)
            if fold_size < 1:
                raise ConfigError("fold_size must be >= 1")
        cfg = cls(dataset=dict(raw["dataset"]), censoring=dict(raw["censoring"]),
                  kernel=kernel, models=models, repeats=repeats,
                  seed=int(raw.get("seed", 0)), fold_size=fold_size,
                  workers=max(1, int(raw.get("workers", 1))),
                  optimize=bool(raw.get("optimize", True)),
                  timings=bool(raw.get("timings", False)),
                  optimizer=dict(raw.get("optimizer", {})),
                  ep=dict(raw.get("ep", {})))
        expand_grid(cfg.censoring)  # validates the grid early
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    def optimizer_config(self, model_id: str) -> OptimizerConfig:
        opts = self.optimizer
        method = opts.get("method") or default_method(model_id)
        if model_id == "cgp":
            iters = int(opts.get("max_iters_ep", 200))
        else:
            iters = int(opts.get("max_iters_exact", 1000))
        return OptimizerConfig(
            method=method,
            step_size=float(opts.get("step_size", 0.05)),
            max_iters=iters,
            grad_tol=float(opts.get("grad_tol", 1e-5)),
            fd_step=float(opts.get("fd_step", 1e-5)),
            restarts=int(opts.get("restarts", 0)),
            seed=self.seed,
        )

    def ep_config(self, noise_var: float = 1.0) -> EPConfig:
        return EPConfig(noise_var=noise_var,
                        max_sweeps=int(self.ep.get("max_sweeps", 100)),
                        tol=float(self.ep.get("tol", 1e-6)),
                        damping=float(self.ep.get("damping", 0.8)))


# -- synthetic sources -------------------------------------------------


def _flags_for_fraction(n: int, fraction: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    flags = np.zeros(n, dtype=bool)
    flags[rng.choice(n, size=math.ceil(fraction * n), replace=False)] = True
    return flags


def synthetic_demand_series(n: int, seed: int) -> np.ndarray:
    """Positive daily demand with weekly structure and a slow drift."""
    t = np.arange(n, dtype=float)
    rng = np.random.default_rng(seed)
    level = (20.0 + 6.0 * np.sin(2.0 * np.pi * t / 7.0 + 0.5)
             + 4.0 * np.sin(2.0 * np.pi * t / 90.0))
    return level + 1.5 * rng.standard_normal(n)


def synthetic_pickup_series(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Positive 15-minute pickups with a daily cycle, plus lagged dropoffs."""
    i = np.arange(n, dtype=float)
    rng = np.random.default_rng(seed)
    pickups = (35.0 + 20.0 * np.sin(2.0 * np.pi * i / 96.0 - 0.5 * np.pi)
               + 6.0 * np.sin(2.0 * np.pi * i / float(max(n, 2)))
               + 3.0 * rng.standard_normal(n))
    pickups = np.maximum(pickups, 1.0)
    dropoffs = np.empty(n)
    dropoffs[0] = pickups[0]
    dropoffs[1:] = pickups[:-1]
    return pickups, dropoffs


def load_source(config: ExperimentConfig) -> SourceData:
    spec = config.dataset
    kind = spec["kind"]
    seed = int(spec.get("seed", config.seed))
    if kind == "csv":
        data = load_demand_csv(spec["path"])
        weather_dims: list[int] = []
        if spec.get("weather"):
            data, weather_dims = load_weather_csv(spec["weather"], data)
        y_star = data.y_star if data.y_star is not None else data.y
        return SourceData(X=data.X, y_star=y_star, flags=data.labels.copy(),
                          dropoffs=data.dropoffs, weather_dims=weather_dims)
    n = int(spec.get("n", 150))
    if kind == "synthetic":
        base = gen_synthetic(n, seed=seed,
                             noise_var=float(spec.get("noise_var", 0.1)),
                             threshold=math.inf)
        flags = None
        if spec.get("flag_fraction"):
            flags = _flags_for_fraction(n, float(spec["flag_fraction"]), seed)
        return SourceData(X=base.X, y_star=base.y_star, flags=flags)
    if kind == "synthetic_demand":
        y_star = synthetic_demand_series(n, seed)
        flags = None
        if spec.get("flag_fraction"):
            flags = _flags_for_fraction(n, float(spec["flag_fraction"]), seed)
        return SourceData(X=np.arange(n, dtype=float)[:, None], y_star=y_star,
                          flags=flags)
    pickups, dropoffs = synthetic_pickup_series(n, seed)
    return SourceData(X=np.arange(n, dtype=float)[:, None], y_star=pickups,
                      dropoffs=dropoffs)


def default_kernel(config: ExperimentConfig, source: SourceData) -> Kernel:
    """Temporal smooth + weekly periodic structure, plus a weather leaf."""
    if config.dataset["kind"] == "synthetic":
        return SquaredExp(variance=1.0, lengthscale=1.0, dims=(0,))
    terms: list[Kernel] = [
        SquaredExp(variance=1.0, lengthscale=10.0, dims=(0,)),
        Periodic(variance=1.0, lengthscale=1.0, period=7.0, dims=(0,)),
    ]
    if source.weather_dims:
        terms.append(Matern(variance=1.0, lengthscale=1.0, nu=1.5,
                            dims=tuple(source.weather_dims)))
    return Sum(tuple(terms))


# -- the grid ----------------------------------------------------------


def _in_unit(name, value, lo=0.0, hi=1.0, open_ends=False):
    value = float(value)
    inside = lo < value < hi if open_ends else lo <= value <= hi
    if not inside:
        raise ConfigError(f"{name}={value} outside its documented range")
    return value


def expand_grid(censoring: dict) -> list[GridPoint]:
    variant = censoring.get("variant")
    try:
        if variant == "fixed_threshold":
            if "threshold" not in censoring:
                raise ConfigError("fixed_threshold censoring needs 'threshold'")
            return [GridPoint(threshold=float(censoring["threshold"]))]
        if variant == "two_stage":
            cs = censoring.get("c", [])
            if not cs:
                raise ConfigError("two_stage censoring needs a non-empty 'c' list")
            return [GridPoint(c=_in_unit("c", c)) for c in cs]
        if variant == "random_fraction":
            ps = censoring.get("p", [])
            ranges = censoring.get("ranges", [])
            if not ps or not ranges:
                raise ConfigError("random_fraction censoring needs 'p' and 'ranges'")
            points = []
            for p in ps:
                for a, b in ranges:
                    a, b = float(a), float(b)
                    if not 0.0 <= a < b <= 1.0:
                        raise ConfigError(f"intensity range [{a}, {b}] is invalid")
                    points.append(GridPoint(p=_in_unit("p", p), a=a, b=b))
            return points
        if variant == "rand_dropoff":
            gammas = censoring.get("gamma", [])
            cs = censoring.get("c", [])
            if not gammas or not cs:
                raise ConfigError("rand_dropoff censoring needs 'gamma' and 'c' lists")
            return [GridPoint(gamma=_in_unit("gamma", g, open_ends=True),
                              c=_in_unit("c", c))
                    for g in gammas for c in cs]
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed censoring grid: {exc}") from exc
    raise ConfigError(f"unknown censoring variant {variant!r}")


def censored_dataset(source: SourceData, point: GridPoint, seed: int) -> Dataset:
    """Apply one grid point's censoring process to the latent series."""
    if point.threshold is not None:
        spec = CensorSpec(variant="fixed_threshold", threshold=point.threshold)
    elif point.p is not None:
        spec = CensorSpec(variant="random_fraction", p=point.p, a=point.a,
                          b=point.b, seed=seed)
    elif point.gamma is not None:
        spec = CensorSpec(variant="rand_dropoff", gamma=point.gamma,
                          c=point.c, seed=seed)
    else:
        spec = CensorSpec(variant="two_stage", c=point.c)
    y, labels = spec.apply(source.y_star, availability_flags=source.flags,
                           dropoffs=source.dropoffs)
    return Dataset(X=source.X, y=y, y_star=source.y_star.copy(), labels=labels)


def _predictions(config: ExperimentConfig, model_id: str, data: Dataset,
                 kernel: Kernel):
    """Model predictions over all rows, cross-validated when configured."""
    opt = config.optimizer_config(model_id)
    epc = config.ep_config()
    if config.fold_size is None:
        fitted = fit_model(model_id, data, kernel, opt_config=opt,
                           ep_config=epc, optimize=config.optimize)
        mean, _ = fitted.predict(data.X)
        return mean, fitted.converged, fitted.sweeps
    plan = make_time_folds(data.n, config.fold_size)
    mean = np.empty(data.n)
    converged = True
    sweeps = 0
    for k in range(plan.n_folds):
        train = plan.complement(k, data.n)
        fitted = fit_model(model_id, data.select(train), kernel,
                           opt_config=opt, ep_config=epc,
                           optimize=config.optimize)
        mean[plan.indices(k)] = fitted.predict(data.X[plan.indices(k)])[0]
        converged = converged and fitted.converged
        sweeps = max(sweeps, fitted.sweeps)
    return mean, converged, sweeps


def _run_cell(config: ExperimentConfig, source: SourceData, kernel: Kernel,
              point: GridPoint, repeat: int) -> list[ResultRecord]:
    seed = config.seed + repeat
    records: list[ResultRecord] = []
    try:
        data = censored_dataset(source, point, seed)
    except Exception as exc:
        log.error("censoring failed at %s repeat %d: %s", point, repeat, exc)
        for model_id in config.models:
            for split in SPLITS:
                records.append(ResultRecord(
                    model=model_id, grid=point, split=split, rmse=math.nan,
                    r2=math.nan, converged=False, sweeps=0, runtime_ms=0.0,
                    seed=seed, repeat=repeat, error=f"censoring: {exc}"))
        return records
    for model_id in config.models:
        start = time.perf_counter()
        try:
            mean, converged, sweeps = _predictions(config, model_id, data, kernel)
            elapsed = (time.perf_counter() - start) * 1e3
            for split in SPLITS:
                report = evaluate_split(mean, data, split)
                records.append(ResultRecord(
                    model=model_id, grid=point, split=split, rmse=report.rmse,
                    r2=report.r2, converged=converged, sweeps=sweeps,
                    runtime_ms=elapsed, seed=seed, repeat=repeat))
        except Exception as exc:
            elapsed = (time.perf_counter() - start) * 1e3
            log.error("%s failed at %s repeat %d: %s", model_id, point, repeat, exc)
            for split in SPLITS:
                records.append(ResultRecord(
                    model=model_id, grid=point, split=split, rmse=math.nan,
                    r2=math.nan, converged=False, sweeps=0,
                    runtime_ms=elapsed, seed=seed, repeat=repeat,
                    error=str(exc) or type(exc).__name__))
    return records


def posterior_curves(config: ExperimentConfig, source: SourceData,
                     kernel: Kernel, point: GridPoint) -> dict[str, pd.DataFrame]:
    """Full-data posterior curves per model for the first grid cell."""
    curves: dict[str, pd.DataFrame] = {}
    data = censored_dataset(source, point, config.seed)
    for model_id in config.models:
        try:
            fitted = fit_model(model_id, data, kernel,
                               opt_config=config.optimizer_config(model_id),
                               ep_config=config.ep_config(),
                               optimize=config.optimize)
            mean, var = fitted.predict(data.X)
        except Exception as exc:
            log.error("curve fit failed for %s: %s", model_id, exc)
            continue
        band = 1.96 * np.sqrt(var)
        curves[model_id] = pd.DataFrame({
            "x": data.X[:, 0], "mean": mean, "lower95": mean - band,
            "upper95": mean + band, "y_observed": data.y,
            "y_latent": data.y_star, "label": data.labels.astype(int),
        }, columns=CURVE_COLUMNS)
    return curves


def run_experiment_grid(config: ExperimentConfig
                        ) -> tuple[list[ResultRecord], dict[str, pd.DataFrame]]:
    """Execute the full grid; returns canonical records and plot curves."""
    source = load_source(config)
    kernel = config.kernel or default_kernel(config, source)
    grid = expand_grid(config.censoring)
    variant = config.censoring.get("variant")
    if variant == "two_stage" and source.flags is None:
        raise ConfigError("two_stage censoring needs availability flags "
                          "(CSV 'available' column or a flag_fraction)")
    if variant == "rand_dropoff" and source.dropoffs is None:
        raise ConfigError("rand_dropoff censoring needs a dropoff series")
    cells = [(point, repeat) for point in grid for repeat in range(config.repeats)]
    records: list[ResultRecord] = []
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [pool.submit(_run_cell, config, source, kernel, point, rep)
                       for point, rep in cells]
            for future in futures:
                records.extend(future.result())
    else:
        for point, rep in cells:
            records.extend(_run_cell(config, source, kernel, point, rep))
    records.sort(key=lambda r: (r.model, r.grid.key(), r.split, r.repeat))
    curves = posterior_curves(config, source, kernel, grid[0])
    return records, curves


def emit_results(records: list[ResultRecord], outdir,
                 curves: dict[str, pd.DataFrame] | None = None,
                 timings: bool = False) -> list[Path]:
    """Write results.csv, summary.csv and per-model posterior curve files.

    ``timings=False`` leaves the runtime_ms column empty so reruns with the
    same seed reproduce every output byte for byte.
    """
    if not records:
        raise ValueError("no records to emit")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame([r.row(with_timing=timings) for r in records],
                         columns=RESULT_COLUMNS)
    files = [outdir / "results.csv"]
    frame.to_csv(files[0], index=False)

    ok = frame[frame["error"] == ""]
    if len(ok):
        grouped = (ok.groupby(["model", *GRID_COLUMNS, "split"], dropna=False)
                   .agg(rmse=("rmse", "mean"), r2=("r2", "mean"),
                        repeats=("rmse", "size"))
                   .reset_index())
    else:
        grouped = pd.DataFrame(
            columns=["model", *GRID_COLUMNS, "split", "rmse", "r2", "repeats"])
    summary_path = outdir / "summary.csv"
    grouped.to_csv(summary_path, index=False)
    files.append(summary_path)

    for model_id, curve in (curves or {}).items():
        path = outdir / f"posterior_curve_{model_id}.csv"
        curve.to_csv(path, index=False)
        files.append(path)
    return files
