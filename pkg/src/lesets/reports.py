"""Write run outputs (CSV, JSON, Markdown) and check CSVs against their headers."""

import json
from pathlib import Path
from typing import Any, Sequence

import pandas as pd
from rich.console import Console

console = Console()

REPLICATES_COLUMNS = ("seed", "mae", "r2", "epochs", "wall_time_s", "status")
PREDICTION_COLUMNS = ("seed", "formula", "y_true", "y_pred")
LEARNING_CURVE_COLUMNS = ("epoch", "train_loss", "val_loss", "lr")
SENSITIVITY_COLUMNS = ("fraction", "replicate", "mae", "r2", "n_train", "status")
SENSITIVITY_SUMMARY_COLUMNS = ("fraction", "n_replicates", "mae_mean", "mae_se", "r2_mean", "r2_se", "degenerate")
IMP_PER_HEA_COLUMNS = ("mode", "formula", "element", "imp")
IMP_FREQUENCY_COLUMNS = ("mode", "element", "criterion1", "criterion2")
INTERACTION_COLUMNS = ("mode", "element_1", "element_2", "delta")


class ReportWriter:
    """Write result files into one output directory."""

    def __init__(self, output_dir: Path | str = "output"):
        """Initialize the writer.

        Args:
            output_dir: Directory to write output files to; created if missing.
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def _write(self, filepath: Path, text: str) -> Path:
        try:
            filepath.parent.mkdir(parents=True, exist_ok=True)
            filepath.write_text(text, encoding="utf-8")
        except PermissionError:
            console.print(f"[red]Permission denied: Cannot write to {filepath}[/red]")
            raise
        except OSError as e:
            console.print(f"[red]Failed to write {filepath}: {e}[/red]")
            raise
        return filepath

    def write_csv(self, filename: str, frame: pd.DataFrame, columns: Sequence[str] | None = None) -> Path:
        """Write ``frame`` and re-read it to confirm it parses under ``columns``.

        Raises:
            ValueError: If the frame or the re-read file does not match the header.
        """
        expected = list(columns) if columns is not None else list(frame.columns)
        if list(frame.columns) != expected:
            raise ValueError(f"{filename}: columns {list(frame.columns)} do not match {expected}")
        filepath = self._write(self.output_dir / filename, frame.to_csv(index=False, lineterminator="\n"))
        check = pd.read_csv(filepath)
        if list(check.columns) != expected or len(check) != len(frame):
            raise ValueError(f"{filepath} failed its schema check")
        console.print(f"[green]✓ {filepath}[/green]")
        return filepath

    def write_json(self, filename: str, payload: Any) -> Path:
        filepath = self._write(self.output_dir / filename, json.dumps(payload, indent=2, sort_keys=True) + "\n")
        console.print(f"[green]✓ {filepath}[/green]")
        return filepath

    def write_summary(self, title: str, summary: dict[str, Any], filename: str = "summary.md") -> Path:
        """Markdown summary table for a human reader."""
        lines = [
            f"# {title}",
            "",
            "| key | value |",
            "|---|---|",
        ]
        for key, value in summary.items():
            shown = f"{value:.6g}" if isinstance(value, float) else ("" if value is None else str(value))
            lines.append(f"| {key} | {shown} |")
        return self._write(self.output_dir / filename, "\n".join(lines) + "\n")
