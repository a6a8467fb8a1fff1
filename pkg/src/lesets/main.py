"""CLI entry point for LESets."""

from contextlib import contextmanager
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd
import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from lesets import __version__
from lesets.analysis import (
    collect_importance,
    importance_report,
    sensitivity_sweep,
    train_interpretation_models,
)
from lesets.baselines import BASELINES, SUMMARY_COLUMNS, baseline_benchmark, summarize_many
from lesets.checkpoint import load_checkpoint, save_checkpoint
from lesets.config import PRESETS, RunConfig, load_config, resolve_run_config
from lesets.data import DATASET_COLUMNS, load_dataset, make_synthetic_dataset, samples_for_target, write_dataset
from lesets.elemtable import ElementTable, default_table_path, load_table
from lesets.model import LESetsModel
from lesets.reports import (
    IMP_FREQUENCY_COLUMNS,
    IMP_PER_HEA_COLUMNS,
    INTERACTION_COLUMNS,
    LEARNING_CURVE_COLUMNS,
    PREDICTION_COLUMNS,
    REPLICATES_COLUMNS,
    SENSITIVITY_COLUMNS,
    SENSITIVITY_SUMMARY_COLUMNS,
    ReportWriter,
)
from lesets.representation import TARGET_UNITS, build_graph_set, parse_composition
from lesets.train import SplitSpec, benchmark, evaluate, split_dataset, train_model

console = Console()
app = typer.Typer(
    name="lesets",
    help="LESets - graph-set networks for high-entropy alloy property prediction",
    add_completion=False,
)

# Global configuration (loaded at startup)
_config: dict | None = None
_config_path: Path | None = None

CLI_ERRORS = (ValueError, KeyError, FileNotFoundError, FloatingPointError, ImportError, OSError)


def get_config() -> dict:
    """Get the current configuration, loading if not already loaded.

    Returns:
        Configuration dictionary.
    """
    global _config
    if _config is None:
        _config = load_config(_config_path)
    return _config


@contextmanager
def _command_errors():
    """Turn expected failures into a red diagnostic and exit code 1."""
    try:
        yield
    except CLI_ERRORS as e:
        console.print(f"[red]Error: {e}[/red]")
        raise typer.Exit(code=1)


def _run_config(**flags) -> RunConfig:
    return resolve_run_config(get_config(), **flags)


def _samples(run: RunConfig, table: ElementTable):
    if run.data is None:
        raise ValueError("no dataset given: pass --data or set run.data in the config file")
    return samples_for_target(load_dataset(run.data), run.target, table)


def _describe(run: RunConfig) -> None:
    model = run.model if run.model_kind == "lesets" else run.deepsets
    console.print(f"[dim]target {run.target} ({TARGET_UNITS[run.target]}), {run.model_kind} {model}[/dim]")


def _print_summary(title: str, summary: dict) -> None:
    table = Table(title=title, show_header=False, box=None)
    table.add_column("Key", style="cyan")
    table.add_column("Value")
    for key, value in summary.items():
        table.add_row(key, f"{value:.6g}" if isinstance(value, float) else str(value))
    console.print(table)


def _parse_fractions(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ValueError(f"bad --fractions {text!r}: expected comma-separated numbers") from None


DATA_HELP = "Dataset CSV (composition plus target columns)."
TARGET_HELP = "Target column: youngs_modulus, bulk_modulus or rws."
PRESET_HELP = "Model preset: youngs, bulk or rws (defaults to the target's preset)."
OUT_HELP = "Output directory."
SEED_HELP = "Base random seed."
THREADS_HELP = "Worker threads for replicates (1 gives bit-reproducible output)."
MODEL_HELP = "Model family: lesets or deepsets."
PLOTS_HELP = "Also render SVG plots (needs matplotlib)."
EPOCHS_HELP = "Override train.max_epochs."


@app.callback()
def main_callback(
    ctx: typer.Context,
    config: Optional[str] = typer.Option(None, "--config", "-C", help="Path to configuration file (YAML)"),
):
    """Global options for all commands."""
    global _config, _config_path

    load_dotenv()
    _config = None
    _config_path = Path(config).expanduser() if config else None

    ctx.ensure_object(dict)
    ctx.obj["config_path"] = _config_path


@app.command()
def featurize(
    data: str = typer.Option(..., "--data", "-d", help=DATA_HELP),
    target: Optional[str] = typer.Option(None, "--target", "-t", help=TARGET_HELP),
    out: str = typer.Option("output", "--out", "-o", help=OUT_HELP),
):
    """Write graph-set JSON and summary descriptors for a dataset."""
    console.print(Panel.fit("Featurizing dataset", style="cyan bold"))
    with _command_errors():
        if target is not None and target not in TARGET_UNITS:
            raise ValueError(f"unknown target {target!r}; expected one of {', '.join(TARGET_UNITS)}")
        table = load_table()
        records = load_dataset(data)
        graph_sets = []
        for record in records:
            value = record.target(target) if target else None
            graph_sets.append(
                build_graph_set(
                    record.composition,
                    table,
                    target=value,
                    target_name=target if value is not None else None,
                )
            )
        writer = ReportWriter(out)
        writer.write_json(
            "graph_sets.json",
            {"schema_hash": table.schema_hash, "graph_sets": [gs.to_dict() for gs in graph_sets]},
        )
        descriptors = summarize_many([r.composition for r in records], table)
        frame = pd.DataFrame(descriptors, columns=SUMMARY_COLUMNS)
        frame.insert(0, "composition", [r.formula for r in records])
        writer.write_csv("summary_descriptors.csv", frame, ["composition", *SUMMARY_COLUMNS])
    console.print(f"[green]Featurized {len(records)} alloys[/green]")


@app.command()
def train(
    data: Optional[str] = typer.Option(None, "--data", "-d", help=DATA_HELP),
    target: Optional[str] = typer.Option(None, "--target", "-t", help=TARGET_HELP),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help=PRESET_HELP),
    model: Optional[str] = typer.Option(None, "--model", "-m", help=MODEL_HELP),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help=SEED_HELP),
    out: Optional[str] = typer.Option(None, "--out", "-o", help=OUT_HELP),
    checkpoint: Optional[str] = typer.Option(None, "--checkpoint", help="Checkpoint path (default: <out>/model.json)."),
    epochs: Optional[int] = typer.Option(None, "--epochs", help=EPOCHS_HELP),
    plots: bool = typer.Option(False, "--plots", help=PLOTS_HELP),
):
    """Train one model on a 3:1:1 split and save a checkpoint."""
    console.print(Panel.fit("Training", style="cyan bold"))
    with _command_errors():
        run = _run_config(
            target=target,
            preset=preset,
            model_kind=model,
            data=data,
            out=out,
            seed=seed,
            train_overrides={"max_epochs": epochs} if epochs else None,
        )
        _describe(run)
        table = load_table()
        samples = _samples(run, table)
        train_set, val_set, test_set = split_dataset(samples, SplitSpec(seed=run.seed))
        console.print(f"[dim]split {len(train_set)}/{len(val_set)}/{len(test_set)}[/dim]")
        trained, curve = train_model(run.model_factory(table.schema.total_dim)(run.seed), train_set, val_set, run.train)
        metrics = evaluate(trained, test_set)

        writer = ReportWriter(run.out)
        save_checkpoint(trained, checkpoint or run.out / "model.json", table, target_name=run.target)
        curve_frame = curve.to_frame()
        writer.write_csv("learning_curve.csv", curve_frame, LEARNING_CURVE_COLUMNS)
        summary = {
            "target": run.target,
            "model": run.model_kind,
            "preset": run.preset,
            "seed": run.seed,
            "param_count": trained.param_count(),
            "epochs": curve.epochs,
            "best_epoch": curve.best_epoch,
            "mae": metrics.mae,
            "r2": metrics.r2,
        }
        writer.write_json("metrics.json", summary)
        if plots:
            from lesets.plots import plot_learning_curve

            plot_learning_curve(curve_frame, run.out / "learning_curve.svg")
    _print_summary("Test metrics", summary)


@app.command()
def predict(
    data: str = typer.Option(..., "--data", "-d", help="CSV with a composition column."),
    checkpoint: str = typer.Option(..., "--checkpoint", help="Checkpoint written by train."),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output CSV (default: output/predictions.csv)."),
):
    """Append a prediction column to a CSV using a saved checkpoint."""
    console.print(Panel.fit("Predicting", style="cyan bold"))
    with _command_errors():
        table = load_table()
        loaded = load_checkpoint(checkpoint, table)
        data_path = Path(data)
        if not data_path.exists():
            raise FileNotFoundError(f"Dataset not found: {data_path}")
        frame = pd.read_csv(data_path, dtype={"composition": str})
        if "composition" not in frame.columns:
            raise ValueError(f"{data_path} has no 'composition' column")
        graph_sets = [build_graph_set(parse_composition(str(text)), table) for text in frame["composition"]]
        column = f"prediction_{loaded.target_name}" if loaded.target_name else "prediction"
        frame[column] = loaded.model.predict(graph_sets)

        out_path = Path(out) if out else Path("output") / "predictions.csv"
        writer = ReportWriter(out_path.parent)
        writer.write_csv(out_path.name, frame)
    console.print(f"[green]Predicted {len(frame)} alloys[/green]")


@app.command(name="benchmark")
def benchmark_command(
    data: Optional[str] = typer.Option(None, "--data", "-d", help=DATA_HELP),
    target: Optional[str] = typer.Option(None, "--target", "-t", help=TARGET_HELP),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help=PRESET_HELP),
    model: Optional[str] = typer.Option(None, "--model", "-m", help=MODEL_HELP),
    replicates: int = typer.Option(30, "--replicates", "-r", help="Number of random splits."),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help=SEED_HELP),
    out: Optional[str] = typer.Option(None, "--out", "-o", help=OUT_HELP),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    epochs: Optional[int] = typer.Option(None, "--epochs", help=EPOCHS_HELP),
    timings: bool = typer.Option(False, "--timings", help="Record wall time per replicate."),
    plots: bool = typer.Option(False, "--plots", help=PLOTS_HELP),
):
    """Repeat split/train/evaluate over seeded random splits."""
    console.print(Panel.fit(f"Benchmark: {replicates} replicates", style="cyan bold"))
    with _command_errors():
        run = _run_config(
            target=target,
            preset=preset,
            model_kind=model,
            data=data,
            out=out,
            seed=seed,
            threads=threads,
            train_overrides={"max_epochs": epochs} if epochs else None,
        )
        _describe(run)
        table = load_table()
        samples = _samples(run, table)
        result = benchmark(
            samples,
            run.model_factory(table.schema.total_dim),
            n_replicates=replicates,
            config=run.train,
            first_seed=run.seed,
            threads=run.threads,
            record_timing=timings,
        )
        writer = ReportWriter(run.out)
        writer.write_csv("replicates.csv", result.to_frame(), REPLICATES_COLUMNS)
        writer.write_csv("test_predictions.csv", result.predictions_frame(), PREDICTION_COLUMNS)
        for replicate_seed, curve in result.curves.items():
            writer.write_csv(
                f"learning_curves/replicate_{replicate_seed}.csv", curve.to_frame(), LEARNING_CURVE_COLUMNS
            )
        summary = {"target": run.target, "model": run.model_kind, "preset": run.preset, **result.summary()}
        writer.write_json("summary.json", summary)
        writer.write_summary(f"Benchmark: {run.target}", summary)
        if plots and result.curves:
            from lesets.plots import plot_learning_curve, plot_parity, plot_replicate_boxes

            first = min(result.curves)
            plot_learning_curve(result.curves[first].to_frame(), run.out / "learning_curve.svg")
            plot_parity(result.predictions_frame(), run.out / "parity.svg", seed=first)
            plot_replicate_boxes({run.model_kind: result.to_frame()}, run.out / "replicates.svg")
    _print_summary("Benchmark summary", summary)
    if summary["n_failed"]:
        console.print(f"[yellow]{summary['n_failed']} replicate(s) failed; see replicates.csv[/yellow]")


@app.command()
def sensitivity(
    data: Optional[str] = typer.Option(None, "--data", "-d", help=DATA_HELP),
    target: Optional[str] = typer.Option(None, "--target", "-t", help=TARGET_HELP),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help=PRESET_HELP),
    model: Optional[str] = typer.Option(None, "--model", "-m", help=MODEL_HELP),
    fractions: str = typer.Option("0.1,0.25,0.5,1.0", "--fractions", "-f", help="Comma-separated data fractions."),
    replicates: int = typer.Option(10, "--replicates", "-r", help="Replicates per fraction."),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help=SEED_HELP),
    out: Optional[str] = typer.Option(None, "--out", "-o", help=OUT_HELP),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    epochs: Optional[int] = typer.Option(None, "--epochs", help=EPOCHS_HELP),
    plots: bool = typer.Option(False, "--plots", help=PLOTS_HELP),
):
    """Measure test metrics against the share of training data used."""
    console.print(Panel.fit("Sensitivity to training-set size", style="cyan bold"))
    with _command_errors():
        run = _run_config(
            target=target,
            preset=preset,
            model_kind=model,
            data=data,
            out=out,
            seed=seed,
            threads=threads,
            train_overrides={"max_epochs": epochs} if epochs else None,
        )
        _describe(run)
        table = load_table()
        samples = _samples(run, table)
        result = sensitivity_sweep(
            samples,
            _parse_fractions(fractions),
            run.model_factory(table.schema.total_dim),
            n_rep=replicates,
            config=run.train,
            first_seed=run.seed,
            threads=run.threads,
        )
        writer = ReportWriter(run.out)
        writer.write_csv("sensitivity.csv", result.rows_frame(), SENSITIVITY_COLUMNS)
        summary_frame = result.summary_frame()
        writer.write_csv("sensitivity_summary.csv", summary_frame, SENSITIVITY_SUMMARY_COLUMNS)
        if plots:
            from lesets.plots import plot_sensitivity

            plot_sensitivity(summary_frame, run.out / "sensitivity.svg")

    points = Table(title="Sensitivity")
    for column in ("fraction", "n", "MAE", "R²"):
        points.add_column(column)
    for point in result.points:
        mae = "-" if point.mae_mean is None else f"{point.mae_mean:.4g} ± {point.mae_se:.2g}"
        r2 = "-" if point.r2_mean is None else f"{point.r2_mean:.4f} ± {point.r2_se:.2g}"
        points.add_row(f"{point.fraction:g}", str(point.n), mae, r2)
    console.print(points)
    if any(p.degenerate for p in result.points):
        console.print("[yellow]Points with fewer than 2 replicates report a standard error of 0[/yellow]")


@app.command()
def interpret(
    data: Optional[str] = typer.Option(None, "--data", "-d", help=DATA_HELP),
    target: Optional[str] = typer.Option(None, "--target", "-t", help=TARGET_HELP),
    preset: Optional[str] = typer.Option(None, "--preset", "-p", help=PRESET_HELP),
    replicates: int = typer.Option(1, "--replicates", "-r", help="Models to train; >1 adds the averaged mode."),
    checkpoint: Optional[str] = typer.Option(None, "--checkpoint", help="Use a trained attention checkpoint."),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help=SEED_HELP),
    out: Optional[str] = typer.Option(None, "--out", "-o", help=OUT_HELP),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    epochs: Optional[int] = typer.Option(None, "--epochs", help=EPOCHS_HELP),
    plots: bool = typer.Option(False, "--plots", help=PLOTS_HELP),
):
    """Element importance from attention: per-HEA scores, criterion frequencies, interactions."""
    console.print(Panel.fit("Attention interpretation", style="cyan bold"))
    with _command_errors():
        run = _run_config(
            target=target,
            preset=preset,
            data=data,
            out=out,
            seed=seed,
            threads=threads,
            train_overrides={"max_epochs": epochs} if epochs else None,
        )
        table = load_table()
        samples = _samples(run, table)
        if checkpoint:
            loaded = load_checkpoint(checkpoint, table)
            if not isinstance(loaded.model, LESetsModel) or loaded.model.attention is None:
                raise ValueError("checkpoint model has no attention (use_att=true is required)")
            models = [loaded.model]
        else:
            if not run.model.use_att:
                raise ValueError(f"preset {run.preset!r} has no attention; use --preset youngs or model.use_att: true")
            seeds = range(run.seed, run.seed + replicates)
            models = train_interpretation_models(
                samples, run.model_factory(table.schema.total_dim), seeds, run.train, threads=run.threads
            )

        formulas = [gs.formula for gs in samples]
        reports = [importance_report(collect_importance(samples, models, "single"), formulas, "single")]
        if len(models) > 1:
            reports.append(importance_report(collect_importance(samples, models, "averaged"), formulas, "averaged"))

        writer = ReportWriter(run.out)
        per_hea = pd.concat([r.per_hea_frame() for r in reports], ignore_index=True)
        frequencies = pd.concat([r.frequencies_frame() for r in reports], ignore_index=True)
        interaction = pd.concat([r.interaction_frame() for r in reports], ignore_index=True)
        writer.write_csv("imp_per_hea.csv", per_hea, IMP_PER_HEA_COLUMNS)
        writer.write_csv("imp_frequencies.csv", frequencies, IMP_FREQUENCY_COLUMNS)
        writer.write_csv("interaction_matrix.csv", interaction, INTERACTION_COLUMNS)
        if plots:
            from lesets.plots import plot_frequencies, plot_interaction

            for report in reports:
                plot_frequencies(report.frequencies_frame(), run.out / f"imp_frequencies_{report.mode}.svg")
                plot_interaction(report.interaction_frame(), run.out / f"interaction_matrix_{report.mode}.svg")

    final = reports[-1]
    ranking = Table(title=f"Criterion frequencies ({final.mode})")
    ranking.add_column("Element", style="cyan")
    ranking.add_column("≥ 3× lowest")
    ranking.add_column("and highest")
    for element in sorted(final.criterion1, key=lambda e: (-final.criterion1[e], e)):
        ranking.add_row(element, str(final.criterion1[element]), str(final.criterion2[element]))
    console.print(ranking)


@app.command()
def baselines(
    data: Optional[str] = typer.Option(None, "--data", "-d", help=DATA_HELP),
    target: Optional[str] = typer.Option(None, "--target", "-t", help=TARGET_HELP),
    method: str = typer.Option("all", "--method", help="ridge, lasso, knn or all."),
    replicates: int = typer.Option(30, "--replicates", "-r", help="Number of random 2:1 splits."),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help=SEED_HELP),
    out: Optional[str] = typer.Option(None, "--out", "-o", help=OUT_HELP),
    threads: Optional[int] = typer.Option(None, "--threads", help=THREADS_HELP),
    plots: bool = typer.Option(False, "--plots", help=PLOTS_HELP),
):
    """Ridge, Lasso and kNN on composition summary descriptors."""
    console.print(Panel.fit("Conventional baselines", style="cyan bold"))
    with _command_errors():
        run = _run_config(target=target, data=data, out=out, seed=seed, threads=threads)
        methods = list(BASELINES) if method == "all" else [method]
        unknown = [m for m in methods if m not in BASELINES]
        if unknown:
            raise ValueError(f"unknown baseline {unknown[0]!r}; expected ridge, lasso, knn or all")
        table = load_table()
        if run.data is None:
            raise ValueError("no dataset given: pass --data or set run.data in the config file")
        records = [r for r in load_dataset(run.data) if r.target(run.target) is not None]
        if not records:
            raise ValueError(f"no rows with a {run.target} value")
        X = summarize_many([r.composition for r in records], table)
        y = np.array([r.target(run.target) for r in records])

        writer = ReportWriter(run.out)
        summaries = {}
        frames = {}
        for name in methods:
            result = baseline_benchmark(X, y, name, n_replicates=replicates, first_seed=run.seed, threads=run.threads)
            frames[name] = result.benchmark.to_frame()
            writer.write_csv(f"baseline_{name}_replicates.csv", frames[name], REPLICATES_COLUMNS)
            summaries[name] = {
                result.tuning.param_name: result.tuning.best_param,
                **result.benchmark.summary(),
            }
        writer.write_json("baselines_summary.json", {"target": run.target, "methods": summaries})
        if plots:
            from lesets.plots import plot_replicate_boxes

            plot_replicate_boxes(frames, run.out / "baselines_replicates.svg")

    results = Table(title=f"Baselines on {run.target}")
    for column in ("Method", "Hyperparameter", "MAE", "R²"):
        results.add_column(column)
    for name, summary in summaries.items():
        param_name = BASELINES[name].param_name
        mae = "-" if summary["mae_mean"] is None else f"{summary['mae_mean']:.4g}"
        r2 = "-" if summary["r2_mean"] is None else f"{summary['r2_mean']:.4f}"
        results.add_row(name, f"{param_name}={summary[param_name]:g}", mae, r2)
    console.print(results)


@app.command()
def synth(
    n: int = typer.Option(2000, "--n", "-n", help="Number of alloys."),
    seed: int = typer.Option(0, "--seed", "-s", help=SEED_HELP),
    out: str = typer.Option("synth.csv", "--out", "-o", help="Output CSV path."),
    noise: float = typer.Option(0.02, "--noise", help="Relative Gaussian noise on every target."),
):
    """Generate a synthetic alloy dataset in the documented CSV schema."""
    console.print(Panel.fit(f"Synthetic dataset: {n} alloys", style="cyan bold"))
    with _command_errors():
        if n < 1:
            raise ValueError("--n must be at least 1")
        records = make_synthetic_dataset(n, load_table(), seed=seed, noise=noise)
        path = write_dataset(records, out)
    console.print(f"[green]✓ {len(records)} rows with columns {', '.join(DATASET_COLUMNS)} written to {path}[/green]")


@app.command()
def status():
    """Show element table and preset information."""
    console.print(Panel.fit(f"LESets {__version__} status", style="cyan bold"))
    with _command_errors():
        element_table = load_table()
        config = get_config()

    table = Table(show_header=False, box=None)
    table.add_column("Key", style="cyan")
    table.add_column("Value")
    table.add_row("Element table", str(default_table_path()))
    table.add_row("Elements", str(len(element_table)))
    table.add_row("Node features", str(element_table.schema.total_dim))
    table.add_row("Schema hash", element_table.schema_hash[:16])
    table.add_row("Config file", str(_config_path) if _config_path else ("✓ Found" if config else "✗ Not found"))
    for name, preset_config in PRESETS.items():
        count = LESetsModel(preset_config, node_dim=element_table.schema.total_dim).param_count()
        att = "att" if preset_config.use_att else "ws"
        table.add_row(
            f"Preset {name}",
            f"{preset_config.conv_operator}, {preset_config.n_conv_layers} conv, "
            f"{preset_config.n_fc_layers} FC, {preset_config.hidden_dim} hidden, {att}: {count} parameters",
        )
    console.print(table)


def main():
    """Main entry point."""
    app()


if __name__ == "__main__":
    main()
