"""Figure rendering for the report path.

Renders the posterior-curve panels and the metric-versus-grid summaries to
PNG files next to the delimited output.  Uses the Agg backend so runs stay
headless and outputs stay byte-reproducible.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

MODEL_STYLE = {
    "ncgp": dict(color="#d62728", label="NCGP"),
    "ncgp_a": dict(color="#2ca02c", label="NCGP-A"),
    "cgp": dict(color="#1f77b4", label="CGP"),
}


def posterior_panel(curve: pd.DataFrame, model_id: str, path: Path) -> Path:
    """Posterior mean, 95% band, observations and the latent curve."""
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    style = MODEL_STYLE.get(model_id, dict(color="black", label=model_id))
    ax.fill_between(curve["x"], curve["lower95"], curve["upper95"],
                    color=style["color"], alpha=0.2, linewidth=0)
    ax.plot(curve["x"], curve["mean"], color=style["color"], lw=1.8,
            label=f"{style['label']} posterior mean")
    if curve["y_latent"].notna().any():
        ax.plot(curve["x"], curve["y_latent"], "k--", lw=1.0, label="latent")
    cens = curve["label"] == 1
    ax.plot(curve.loc[~cens, "x"], curve.loc[~cens, "y_observed"], "o",
            ms=3.5, mfc="none", color="gray", label="observed")
    ax.plot(curve.loc[cens, "x"], curve.loc[cens, "y_observed"], "x",
            ms=4.5, color="black", label="censored")
    ax.set_xlabel("input")
    ax.set_ylabel("target")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def _grid_axis(summary: pd.DataFrame) -> str | None:
    for axis in ("c", "p"):
        if axis in summary.columns and summary[axis].notna().any():
            if summary[axis].nunique(dropna=True) > 1:
                return axis
    return None


def metric_curves(summary: pd.DataFrame, metric: str, path: Path) -> Path | None:
    """One line per model (and gamma, when present) against the grid axis."""
    axis = _grid_axis(summary)
    if axis is None or summary.empty:
        return None
    splits = list(dict.fromkeys(summary["split"]))
    fig, axes = plt.subplots(1, len(splits), figsize=(6.0 * len(splits), 4.0),
                             squeeze=False)
    for col, split in enumerate(splits):
        ax = axes[0][col]
        part = summary[summary["split"] == split]
        gammas = (sorted(part["gamma"].dropna().unique())
                  if part["gamma"].notna().any() else [None])
        for model_id, style in MODEL_STYLE.items():
            rows = part[part["model"] == model_id]
            if rows.empty:
                continue
            for k, g in enumerate(gammas):
                sel = rows if g is None else rows[rows["gamma"] == g]
                sel = sel.sort_values(axis)
                if sel.empty:
                    continue
                suffix = "" if g is None else f" (gamma={g:g})"
                alpha = 1.0 if len(gammas) == 1 else 0.4 + 0.6 * k / (len(gammas) - 1)
                ax.plot(sel[axis], sel[metric], marker="o", ms=3,
                        color=style["color"], alpha=alpha,
                        label=style["label"] + suffix)
        ax.set_xlabel(axis)
        ax.set_ylabel(metric)
        ax.set_title(split.replace("_", " "))
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path


def render_figures(outdir, summary: pd.DataFrame,
                   curves: dict[str, pd.DataFrame]) -> list[Path]:
    outdir = Path(outdir)
    written = []
    for model_id, curve in curves.items():
        written.append(posterior_panel(curve, model_id,
                                       outdir / f"posterior_{model_id}.png"))
    for metric in ("rmse", "r2"):
        path = metric_curves(summary, metric, outdir / f"summary_{metric}.png")
        if path is not None:
            written.append(path)
    return written
