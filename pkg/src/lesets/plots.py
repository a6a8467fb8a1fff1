"""Optional SVG renderings of emitted results (needs the ``plots`` extra)."""

from pathlib import Path

import numpy as np
import pandas as pd
from rich.console import Console

console = Console()


def _pyplot():
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ImportError("plotting needs matplotlib: pip install 'lesets[plots]'") from exc
    # Fixed hash salt keeps SVG output stable between runs
    matplotlib.rcParams["svg.hashsalt"] = "lesets"
    return plt


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata={"Date": None})
    console.print(f"[green]✓ {path}[/green]")
    return path


def plot_learning_curve(curve: pd.DataFrame, path: str | Path) -> Path:
    """Train/validation loss per epoch on a log scale."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(curve["epoch"], curve["train_loss"], label="train")
    ax.plot(curve["epoch"], curve["val_loss"], label="validation")
    ax.set_yscale("log")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (scaled target)")
    ax.legend()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_sensitivity(summary: pd.DataFrame, path: str | Path) -> Path:
    """Mean R^2 and MAE against data fraction with standard-error bars."""
    plt = _pyplot()
    fig, (ax_r2, ax_mae) = plt.subplots(1, 2, figsize=(8, 3.5))
    ax_r2.errorbar(summary["fraction"], summary["r2_mean"], yerr=summary["r2_se"], marker="o", capsize=3)
    ax_r2.set_xlabel("fraction of training data")
    ax_r2.set_ylabel("R²")
    ax_mae.errorbar(summary["fraction"], summary["mae_mean"], yerr=summary["mae_se"], marker="o", capsize=3)
    ax_mae.set_xlabel("fraction of training data")
    ax_mae.set_ylabel("MAE")
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_frequencies(frequencies: pd.DataFrame, path: str | Path) -> Path:
    """Per-element bar chart of both importance criteria."""
    plt = _pyplot()
    x = np.arange(len(frequencies))
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(frequencies)), 3.5))
    ax.bar(x - 0.2, frequencies["criterion1"], width=0.4, label="≥ 3× lowest")
    ax.bar(x + 0.2, frequencies["criterion2"], width=0.4, label="≥ 3× lowest and highest")
    ax.set_xticks(x, frequencies["element"])
    ax.set_ylabel("HEAs")
    ax.legend()
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_interaction(interaction: pd.DataFrame, path: str | Path) -> Path:
    """Heatmap of the element interaction matrix; undefined cells stay blank."""
    plt = _pyplot()
    matrix = interaction.pivot(index="element_1", columns="element_2", values="delta").astype(float)
    fig, ax = plt.subplots(figsize=(max(4, 0.45 * len(matrix)), max(3.5, 0.45 * len(matrix))))
    bound = np.nanmax(np.abs(matrix.to_numpy())) if np.isfinite(matrix.to_numpy()).any() else 1.0
    image = ax.imshow(np.ma.masked_invalid(matrix.to_numpy()), cmap="coolwarm", vmin=-bound, vmax=bound)
    ax.set_xticks(range(len(matrix.columns)), matrix.columns, rotation=90)
    ax.set_yticks(range(len(matrix.index)), matrix.index)
    ax.set_xlabel("element 2")
    ax.set_ylabel("element 1")
    fig.colorbar(image, ax=ax, label="Δ Imp")
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_parity(predictions: pd.DataFrame, path: str | Path, seed: int | None = None) -> Path:
    """Predicted against true test values with the y = x line.

    Args:
        predictions: Rows of ``seed, formula, y_true, y_pred``.
        path: Output SVG path.
        seed: Replicate to draw; defaults to the lowest seed present.
    """
    if predictions.empty:
        raise ValueError("no test predictions to plot")
    seed = int(predictions["seed"].min()) if seed is None else seed
    rows = predictions[predictions["seed"] == seed]
    if rows.empty:
        raise ValueError(f"no test predictions for replicate {seed}")
    plt = _pyplot()
    low = float(min(rows["y_true"].min(), rows["y_pred"].min()))
    high = float(max(rows["y_true"].max(), rows["y_pred"].max()))
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot([low, high], [low, high], color="grey", linewidth=1)
    ax.scatter(rows["y_true"], rows["y_pred"], s=12, alpha=0.7)
    ax.set_xlabel("true")
    ax.set_ylabel("predicted")
    ax.set_title(f"replicate {seed}")
    ax.set_aspect("equal")
    out = _save(fig, Path(path))
    plt.close(fig)
    return out


def plot_replicate_boxes(replicates: dict[str, pd.DataFrame], path: str | Path) -> Path:
    """Box plots of replicate MAE and R^2, one box per model; failed replicates are left out."""
    if not replicates:
        raise ValueError("no replicate tables to plot")
    plt = _pyplot()
    labels = list(replicates)
    maes = [replicates[name]["mae"].dropna().astype(float).to_numpy() for name in labels]
    r2s = [replicates[name]["r2"].dropna().astype(float).to_numpy() for name in labels]
    fig, (ax_mae, ax_r2) = plt.subplots(1, 2, figsize=(max(6, 1.2 * len(labels) + 4), 3.5))
    ax_mae.boxplot(maes, tick_labels=labels)
    ax_mae.set_ylabel("MAE")
    ax_r2.boxplot(r2s, tick_labels=labels)
    ax_r2.set_ylabel("R²")
    out = _save(fig, Path(path))
    plt.close(fig)
    return out
