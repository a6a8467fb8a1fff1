"""Data-size sensitivity sweeps and attention-based importance reports."""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal, Sequence

import numpy as np
import pandas as pd
from rich.console import Console

from lesets.model import LESetsModel, Model, importance_scores_many
from lesets.representation import GraphSet
from lesets.train import (
    REPLICATE_FAILURES,
    SplitSpec,
    TrainConfig,
    evaluate,
    parallel_map,
    split_dataset,
    train_model,
)

console = Console()

TEST_FRACTION = 0.2
CRITERION_RATIO = 3.0

ImportanceMode = Literal["single", "averaged"]
ImpMap = dict[str, float | None]


# Sensitivity to training-set size


@dataclass(frozen=True)
class SensitivityRow:
    fraction: float
    replicate: int
    mae: float | None
    r2: float | None
    n_train: int
    status: str = "ok"


@dataclass(frozen=True)
class SensitivityPoint:
    """Replicate metrics at one data fraction with mean and standard error (std / sqrt(n)).

    ``maes[i]`` and ``r2s[i]`` come from the same replicate; an undefined R^2 is None
    and left out of the R^2 statistics.
    """

    fraction: float
    maes: tuple[float, ...]
    r2s: tuple[float | None, ...]

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError(f"fraction {self.fraction} outside (0, 1]")
        if len(self.maes) != len(self.r2s):
            raise ValueError(f"{len(self.maes)} MAE values but {len(self.r2s)} R² values")

    @staticmethod
    def _mean_se(values: tuple[float | None, ...]) -> tuple[float | None, float | None]:
        defined = [v for v in values if v is not None]
        if not defined:
            return None, None
        array = np.asarray(defined, dtype=np.float64)
        if array.size == 1:
            return float(array[0]), 0.0
        return float(array.mean()), float(array.std(ddof=1) / math.sqrt(array.size))

    @property
    def n(self) -> int:
        return len(self.maes)

    @property
    def degenerate(self) -> bool:
        return self.n < 2

    @property
    def mae_mean(self) -> float | None:
        return self._mean_se(self.maes)[0]

    @property
    def mae_se(self) -> float | None:
        return self._mean_se(self.maes)[1]

    @property
    def r2_mean(self) -> float | None:
        return self._mean_se(self.r2s)[0]

    @property
    def r2_se(self) -> float | None:
        return self._mean_se(self.r2s)[1]

    def as_row(self) -> dict:
        return {
            "fraction": self.fraction,
            "n_replicates": self.n,
            "mae_mean": self.mae_mean,
            "mae_se": self.mae_se,
            "r2_mean": self.r2_mean,
            "r2_se": self.r2_se,
            "degenerate": self.degenerate,
        }


@dataclass
class SensitivityResult:
    points: list[SensitivityPoint]
    rows: list[SensitivityRow]

    def rows_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [vars(r) for r in self.rows],
            columns=["fraction", "replicate", "mae", "r2", "n_train", "status"],
        )

    def summary_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [p.as_row() for p in self.points],
            columns=["fraction", "n_replicates", "mae_mean", "mae_se", "r2_mean", "r2_se", "degenerate"],
        )


def _subset_sizes(n_rest: int, fraction: float) -> tuple[int, int]:
    m = int(math.floor(fraction * n_rest + 1e-9))
    n_val = m // 4
    return m - n_val, n_val


def sensitivity_sweep(
    dataset: Sequence[GraphSet],
    fractions: Sequence[float],
    model_factory: Callable[[int], Model],
    n_rep: int = 10,
    config: TrainConfig | None = None,
    first_seed: int = 0,
    threads: int = 1,
) -> SensitivityResult:
    """Train on growing shares of the non-test data and score on a fixed holdout.

    For each replicate seed a 20% test holdout is drawn; each fraction then
    takes that share of the remaining rows and splits it 3:1 into training
    and validation.

    Raises:
        ValueError: If a fraction is outside (0, 1] or too small for a valid split.
    """
    if not fractions:
        raise ValueError("no fractions given")
    if n_rep < 1:
        raise ValueError("n_rep must be at least 1")
    ordered = sorted(set(float(f) for f in fractions))
    for f in ordered:
        if not 0 < f <= 1:
            raise ValueError(f"fraction {f} outside (0, 1]")
    n = len(dataset)
    n_test = int(math.floor(TEST_FRACTION * n + 1e-9))
    n_rest = n - n_test
    if n_test < 1:
        raise ValueError(f"dataset too small: {n} rows")
    n_train, n_val = _subset_sizes(n_rest, ordered[0])
    if n_train < 2 or n_val < 1:
        raise ValueError(f"fraction too small: {ordered[0]} of {n_rest} rows leaves {n_train} train / {n_val} val")

    config = config or TrainConfig()
    jobs = [(f, seed) for f in ordered for seed in range(first_seed, first_seed + n_rep)]

    def run(job: tuple[float, int]) -> SensitivityRow:
        fraction, seed = job
        order = np.random.default_rng(seed).permutation(n)
        test = [dataset[i] for i in order[:n_test]]
        rest = order[n_test:]
        n_train, n_val = _subset_sizes(n_rest, fraction)
        train = [dataset[i] for i in rest[:n_train]]
        val = [dataset[i] for i in rest[n_train : n_train + n_val]]
        try:
            model, _ = train_model(model_factory(seed), train, val, replace(config, seed=seed))
            metrics = evaluate(model, test)
        except REPLICATE_FAILURES as exc:
            console.print(f"[red]✗ fraction {fraction:g} replicate {seed} failed: {exc}[/red]")
            return SensitivityRow(fraction, seed, None, None, n_train, status=f"failed: {exc}")
        r2_text = "undefined" if metrics.r2 is None else f"{metrics.r2:.4f}"
        console.print(f"[green]✓ fraction {fraction:g} replicate {seed}: MAE {metrics.mae:.4g}, R² {r2_text}[/green]")
        return SensitivityRow(fraction, seed, metrics.mae, metrics.r2, n_train)

    rows = parallel_map(run, jobs, threads)
    points = []
    for f in ordered:
        ok = [r for r in rows if r.fraction == f and r.status == "ok"]
        points.append(
            SensitivityPoint(
                fraction=f,
                maes=tuple(r.mae for r in ok),
                r2s=tuple(r.r2 for r in ok),
            )
        )
    return SensitivityResult(points=points, rows=rows)


# Attention interpretation


def train_interpretation_models(
    dataset: Sequence[GraphSet],
    model_factory: Callable[[int], Model],
    seeds: Sequence[int],
    config: TrainConfig | None = None,
    threads: int = 1,
) -> list[LESetsModel]:
    """One attention model per split seed, trained with the standard 3:1:1 protocol."""
    config = config or TrainConfig()

    def run(seed: int) -> LESetsModel:
        train, val, _ = split_dataset(dataset, SplitSpec(seed=seed))
        model = model_factory(seed)
        if not isinstance(model, LESetsModel) or model.attention is None:
            raise ValueError("interpretation needs a LESets model with attention (use_att=true)")
        trained, curve = train_model(model, train, val, replace(config, seed=seed))
        console.print(f"[green]✓ interpretation model {seed} trained ({curve.epochs} epochs)[/green]")
        return trained

    return parallel_map(run, list(seeds), threads)


def collect_importance(
    dataset: Sequence[GraphSet], models: Sequence[LESetsModel], mode: ImportanceMode = "single"
) -> list[ImpMap]:
    """Per-HEA Imp maps from the first model (``single``) or averaged over all models."""
    if not models:
        raise ValueError("no models supplied")
    if mode == "single":
        return importance_scores_many(dataset, models[0])
    if mode != "averaged":
        raise ValueError(f"unknown importance mode {mode!r}")
    runs = [importance_scores_many(dataset, m) for m in models]
    averaged = []
    for per_model in zip(*runs):
        merged: ImpMap = {}
        for element in per_model[0]:
            values = [m[element] for m in per_model if m[element] is not None]
            merged[element] = float(np.mean(values)) if values else None
        averaged.append(merged)
    return averaged


def criterion_hits(imp: ImpMap, ratio: float = CRITERION_RATIO) -> tuple[set[str], set[str]]:
    """Elements meeting ``Imp >= ratio * min Imp``, and those that are also the maximum."""
    defined = {e: v for e, v in imp.items() if v is not None}
    if not defined:
        return set(), set()
    low = min(defined.values())
    high = max(defined.values())
    first = {e for e, v in defined.items() if v >= ratio * low}
    second = {e for e in first if defined[e] == high}
    return first, second


InteractionMatrix = dict[str, dict[str, float | None]]


def interaction_matrix(per_hea: Sequence[ImpMap]) -> InteractionMatrix:
    """``delta[e1][e2]`` = mean Imp of e1 in HEAs with e2 minus mean Imp of e1 in HEAs without e2.

    Entries with an empty side, and the diagonal, are None.
    """
    elements = sorted({e for imp in per_hea for e in imp})
    matrix: InteractionMatrix = {}
    for e1 in elements:
        row: dict[str, float | None] = {}
        containing = [imp for imp in per_hea if imp.get(e1) is not None]
        for e2 in elements:
            if e1 == e2:
                row[e2] = None
                continue
            with_e2 = [imp[e1] for imp in containing if e2 in imp]
            without = [imp[e1] for imp in containing if e2 not in imp]
            row[e2] = float(np.mean(with_e2) - np.mean(without)) if with_e2 and without else None
        matrix[e1] = row
    return matrix


@dataclass
class ImportanceReport:
    """Per-HEA Imp maps, criterion frequencies and the pairwise interaction matrix."""

    mode: ImportanceMode
    formulas: list[str]
    per_hea: list[ImpMap]
    criterion1: dict[str, int] = field(default_factory=dict)
    criterion2: dict[str, int] = field(default_factory=dict)
    interaction: InteractionMatrix = field(default_factory=dict)

    def per_hea_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"mode": self.mode, "formula": formula, "element": element, "imp": value}
                for formula, imp in zip(self.formulas, self.per_hea)
                for element, value in imp.items()
            ],
            columns=["mode", "formula", "element", "imp"],
        )

    def frequencies_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"mode": self.mode, "element": e, "criterion1": self.criterion1[e], "criterion2": self.criterion2[e]}
                for e in sorted(self.criterion1)
            ],
            columns=["mode", "element", "criterion1", "criterion2"],
        )

    def interaction_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"mode": self.mode, "element_1": e1, "element_2": e2, "delta": delta}
                for e1, row in self.interaction.items()
                for e2, delta in row.items()
            ],
            columns=["mode", "element_1", "element_2", "delta"],
        )


def importance_report(
    per_hea: Sequence[ImpMap],
    formulas: Sequence[str] | None = None,
    mode: ImportanceMode = "single",
) -> ImportanceReport:
    """Count criterion hits per element over all HEAs; elements with no hits are kept at zero."""
    formulas = list(formulas) if formulas is not None else [f"hea_{i}" for i in range(len(per_hea))]
    if len(formulas) != len(per_hea):
        raise ValueError("one formula per Imp map required")
    elements = sorted({e for imp in per_hea for e in imp})
    first_counts = dict.fromkeys(elements, 0)
    second_counts = dict.fromkeys(elements, 0)
    for imp in per_hea:
        first, second = criterion_hits(imp)
        for e in first:
            first_counts[e] += 1
        for e in second:
            second_counts[e] += 1
    return ImportanceReport(
        mode=mode,
        formulas=formulas,
        per_hea=[dict(imp) for imp in per_hea],
        criterion1=first_counts,
        criterion2=second_counts,
        interaction=interaction_matrix(per_hea),
    )
