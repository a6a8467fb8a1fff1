"""Dataset CSV ingestion and the synthetic alloy generator."""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from rich.console import Console

from lesets.elemtable import ElementTable, featurize_element
from lesets.representation import TARGET_UNITS, Composition, GraphSet, build_graph_set, parse_composition

console = Console()

TARGET_COLUMNS = tuple(TARGET_UNITS)
DATASET_COLUMNS = ("composition", *TARGET_COLUMNS)

SYNTHETIC_POOL = ("Al", "Co", "Cr", "Cu", "Fe", "Mn", "Mo", "Nb", "Ni", "Ti")


@dataclass(frozen=True)
class AlloyRecord:
    """One dataset row: the composition and whichever targets are present."""

    formula: str
    composition: Composition
    targets: dict[str, float] = field(default_factory=dict)

    def target(self, name: str) -> float | None:
        return self.targets.get(name)


def load_dataset(path: str | Path) -> list[AlloyRecord]:
    """Read the documented dataset CSV.

    Empty target cells mean the property is missing for that alloy.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the composition column is absent or a formula is invalid.
    """
    data_path = Path(path)
    if not data_path.exists():
        raise FileNotFoundError(f"Dataset not found: {data_path}")
    try:
        frame = pd.read_csv(data_path, encoding="utf-8", dtype={"composition": str})
    except pd.errors.EmptyDataError:
        raise ValueError(f"empty dataset: {data_path}") from None
    if "composition" not in frame.columns:
        raise ValueError(f"dataset {data_path} has no 'composition' column")

    records = []
    for i, row in enumerate(frame.itertuples(index=False), start=2):
        formula = str(getattr(row, "composition")).strip()
        try:
            composition = parse_composition(formula)
        except ValueError as exc:
            raise ValueError(f"{data_path}:{i}: {exc}") from exc
        targets = {}
        for name in TARGET_COLUMNS:
            if name in frame.columns:
                value = getattr(row, name)
                if not pd.isna(value):
                    targets[name] = float(value)
        records.append(AlloyRecord(formula=formula, composition=composition, targets=targets))

    console.print(f"[dim]Loaded {len(records)} alloys from {data_path}[/dim]")
    return records


def write_dataset(records: Sequence[AlloyRecord], path: str | Path) -> Path:
    """Write records in the documented dataset CSV schema."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(
        [{"composition": r.formula, **{t: r.targets.get(t) for t in TARGET_COLUMNS}} for r in records],
        columns=list(DATASET_COLUMNS),
    )
    frame.to_csv(out, index=False, float_format="%.10g")
    return out


def samples_for_target(records: Sequence[AlloyRecord], target: str, table: ElementTable) -> list[GraphSet]:
    """GraphSets for every record that has ``target``.

    Raises:
        ValueError: If ``target`` is not a known column or no record has it.
        UnknownElementError: If a composition uses an element missing from the table.
    """
    if target not in TARGET_COLUMNS:
        raise ValueError(f"unknown target {target!r}; expected one of {', '.join(TARGET_COLUMNS)}")
    samples = [
        build_graph_set(r.composition, table, target=r.targets[target], target_name=target)
        for r in records
        if target in r.targets
    ]
    if not samples:
        raise ValueError(f"no rows with a {target} value")
    skipped = len(records) - len(samples)
    if skipped:
        console.print(f"[dim]{skipped} rows without {target} skipped[/dim]")
    return samples


def _synthetic_targets(composition: Composition, table: ElementTable) -> dict[str, float]:
    schema = table.schema
    offset = schema.period_onehot_width + schema.group_onehot_width
    descriptors = np.stack([featurize_element(s, table)[offset:] for s in composition.symbols])
    w = composition.fractions
    mean = w @ descriptors
    spread = np.sqrt(w @ (descriptors - mean) ** 2)
    mass, radius, en, ie, ea, volume = mean
    return {
        "youngs_modulus": 150.0 + 80.0 * np.tanh(2.0 * (en - 0.5 * radius)) + 30.0 * mass * ie + 40.0 * spread[5],
        "bulk_modulus": 140.0 + 60.0 * np.tanh(2.0 * (ea + 0.3 * ie)) - 25.0 * volume**2 + 30.0 * spread[2],
        "rws": 1.40 + 0.10 * np.tanh(2.0 * volume) + 0.05 * radius - 0.04 * spread[0],
    }


def make_synthetic_dataset(
    n: int,
    table: ElementTable,
    seed: int = 0,
    pool: Sequence[str] = SYNTHETIC_POOL,
    min_components: int = 3,
    max_components: int = 5,
    noise: float = 0.02,
) -> list[AlloyRecord]:
    """Random multi-component alloys with smooth nonlinear synthetic properties.

    Each target is a nonlinear function of the fraction-weighted mean and
    spread of z-scored elemental descriptors, times ``1 + noise * N(0, 1)``.

    Args:
        n: Number of alloys.
        table: Element table supplying descriptors.
        seed: RNG seed.
        pool: Elements to draw from.
        min_components: Fewest elements per alloy.
        max_components: Most elements per alloy.
        noise: Relative Gaussian noise level.

    Returns:
        Records with all three target columns filled.
    """
    if not 1 <= min_components <= max_components <= len(pool):
        raise ValueError("component range must satisfy 1 <= min <= max <= pool size")
    for symbol in pool:
        table.get(symbol)

    rng = np.random.default_rng(seed)
    records = []
    for _ in range(n):
        k = int(rng.integers(min_components, max_components + 1))
        symbols = [str(s) for s in rng.choice(list(pool), size=k, replace=False)]
        fractions = rng.dirichlet(np.full(k, 2.0))
        fractions = np.maximum(fractions, 0.02)
        fractions /= fractions.sum()
        formula = "".join(f"{s}{f:.6f}" for s, f in zip(symbols, fractions))
        composition = parse_composition(formula)
        clean = _synthetic_targets(composition, table)
        targets = {name: float(v * (1.0 + noise * rng.standard_normal())) for name, v in clean.items()}
        records.append(AlloyRecord(formula=formula, composition=composition, targets=targets))
    return records
