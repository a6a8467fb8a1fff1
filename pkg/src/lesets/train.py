"""Training protocol: splits, AdamW training with plateau halving and early stopping, metrics, benchmarks."""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Sequence, TypeVar

import numpy as np
import pandas as pd
from rich.console import Console
from sklearn.metrics import mean_absolute_error, r2_score

from lesets.model import Model, TargetScaler
from lesets.optim import DEFAULT_LR, DEFAULT_WEIGHT_DECAY, AdamW, PlateauHalving, is_improvement
from lesets.reports import PREDICTION_COLUMNS
from lesets.representation import GraphSet, collate
from lesets.tensor import Tape, backward, mse_loss

console = Console()

T = TypeVar("T")
R = TypeVar("R")

REPLICATE_FAILURES = (ValueError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SplitSpec:
    """Train/validation/test ratios (3:1:1 by default) and the shuffle seed."""

    train: float = 0.6
    val: float = 0.2
    test: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if min(self.train, self.val, self.test) <= 0:
            raise ValueError("split ratios must be positive")
        if abs(self.train + self.val + self.test - 1.0) > 1e-12:
            raise ValueError("split ratios must sum to 1")


@dataclass(frozen=True)
class TrainConfig:
    """Optimization settings for one training run."""

    initial_lr: float = DEFAULT_LR
    lr_halving_patience: int = 10
    early_stop_patience: int = 20
    max_epochs: int = 500
    batch_size: int = 64
    weight_decay: float = DEFAULT_WEIGHT_DECAY
    improvement_threshold: float = 1e-6
    seed: int = 0
    log_every: int = 0

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be positive")
        if self.lr_halving_patience < 1:
            raise ValueError("lr_halving_patience must be positive")
        if self.early_stop_patience < 0:
            raise ValueError("early_stop_patience cannot be negative")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay cannot be negative")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TrainConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass(frozen=True)
class Metrics:
    """Test-set MAE (target units) and R^2 (None when the targets have no variance)."""

    mae: float
    r2: float | None
    n: int = 0

    def __post_init__(self):
        if self.mae < 0:
            raise ValueError("MAE cannot be negative")
        if self.r2 is not None and self.r2 > 1.0 + 1e-12:
            raise ValueError("R^2 cannot exceed 1")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class LearningCurve:
    """Per-epoch losses (MSE on the scaled target) and learning rate."""

    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError("epochs must be strictly increasing")
        self.records.append(record)

    @property
    def epochs(self) -> int:
        return len(self.records)

    @property
    def best_val_loss(self) -> float:
        return min((r.val_loss for r in self.records), default=math.inf)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [asdict(r) for r in self.records],
            columns=["epoch", "train_loss", "val_loss", "lr"],
        )


def split_dataset(data: Sequence[T], spec: SplitSpec | None = None) -> tuple[list[T], list[T], list[T]]:
    """Seeded shuffle, then contiguous train/val/test partitions.

    Validation and test sizes are floored; remainder rows go to training.

    Raises:
        ValueError: If there are fewer than 5 rows.
    """
    spec = spec or SplitSpec()
    n = len(data)
    if n < 5:
        raise ValueError(f"dataset too small: {n} rows, need at least 5")
    n_val = int(math.floor(spec.val * n + 1e-9))
    n_test = int(math.floor(spec.test * n + 1e-9))
    n_train = n - n_val - n_test
    order = np.random.default_rng(spec.seed).permutation(n)
    train = [data[i] for i in order[:n_train]]
    val = [data[i] for i in order[n_train : n_train + n_val]]
    test = [data[i] for i in order[n_train + n_val :]]
    return train, val, test


def _targets(samples: Sequence[GraphSet]) -> np.ndarray:
    values = np.array([np.nan if s.target is None else s.target for s in samples], dtype=np.float64)
    if np.any(np.isnan(values)):
        raise ValueError("every sample needs a target value")
    return values


def _dataset_loss(model: Model, samples: Sequence[GraphSet], batch_size: int = 256) -> float:
    total = 0.0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        pred = model.forward_batch(collate(chunk)).data
        total += float(np.sum((pred - model.target_scaler.transform(_targets(chunk))) ** 2))
    return total / len(samples)


def train_model(
    model: Model,
    train: Sequence[GraphSet],
    val: Sequence[GraphSet],
    config: TrainConfig | None = None,
) -> tuple[Model, LearningCurve]:
    """Minimize MSE with AdamW, halving the rate and stopping early on validation plateaus.

    The target scaler is fit on ``train`` and attached to the model. On return
    the model holds the parameters of the epoch with the lowest validation loss.

    Args:
        model: Freshly initialized model (mutated in place).
        train: Training GraphSets with targets.
        val: Validation GraphSets with targets.
        config: Optimization settings.

    Returns:
        The trained model and its learning curve.

    Raises:
        ValueError: If either split is empty.
        FloatingPointError: If the loss becomes NaN or Inf.
    """
    config = config or TrainConfig()
    if not train:
        raise ValueError("empty training set")
    if not val:
        raise ValueError("empty validation set")

    model.target_scaler = TargetScaler.fit(_targets(train))
    scaled = model.target_scaler.transform(_targets(train))
    params = model.parameters()
    optimizer = AdamW(params, lr=config.initial_lr, weight_decay=config.weight_decay)
    scheduler = PlateauHalving(optimizer, patience=config.lr_halving_patience, threshold=config.improvement_threshold)
    rng = np.random.default_rng(config.seed)

    curve = LearningCurve()
    best_loss = math.inf
    best_state = model.state_dict()
    stagnant = 0

    for epoch in range(1, config.max_epochs + 1):
        lr = optimizer.lr
        order = rng.permutation(len(train))
        running = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            if len(idx) == 0:
                raise ValueError("empty batch")
            batch = collate([train[i] for i in idx])
            optimizer.zero_grad()
            with Tape():
                loss = mse_loss(model.forward_batch(batch), scaled[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, batch {start // config.batch_size}")
            backward(loss)
            optimizer.step()
            running += value * len(idx)

        val_loss = _dataset_loss(model, val)
        if not math.isfinite(val_loss):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        curve.append(EpochRecord(epoch=epoch, train_loss=running / len(train), val_loss=val_loss, lr=lr))

        if config.log_every and epoch % config.log_every == 0:
            console.print(
                f"[dim]epoch {epoch:4d}  train {running / len(train):.5f}  val {val_loss:.5f}  lr {lr:.2e}[/dim]"
            )

        if is_improvement(val_loss, best_loss, config.improvement_threshold):
            best_loss = val_loss
            best_state = model.state_dict()
            curve.best_epoch = epoch
            stagnant = 0
        else:
            stagnant += 1
        if stagnant >= config.early_stop_patience:
            break
        scheduler.step(val_loss)

    model.load_state_dict(best_state)
    return model, curve


def regression_metrics(y_true, y_pred) -> Metrics:
    """MAE and R^2 = 1 - SS_res / SS_tot (None when SS_tot is zero).

    Raises:
        ValueError: On empty or mismatched inputs.
    """
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError(f"shape mismatch: {y_true.shape} vs {y_pred.shape}")
    if y_true.size == 0:
        raise ValueError("cannot evaluate an empty set")
    r2 = None if np.all(y_true == y_true[0]) else float(r2_score(y_true, y_pred))
    return Metrics(mae=float(mean_absolute_error(y_true, y_pred)), r2=r2, n=int(y_true.size))


def evaluate(model: Model, test: Sequence[GraphSet]) -> Metrics:
    """Metrics of ``model`` on ``test`` in target units, from the same per-set path as ``model.predict``."""
    if not test:
        raise ValueError("empty test set")
    return regression_metrics(_targets(test), model.predict(test))


@dataclass(frozen=True)
class ReplicateResult:
    """Outcome of one split/train/evaluate replicate."""

    seed: int
    mae: float | None
    r2: float | None
    epochs: int | None
    wall_time_s: float | None = None
    status: str = "ok"
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


@dataclass
class BenchmarkResult:
    replicates: list[ReplicateResult]
    curves: dict[int, LearningCurve] = field(default_factory=dict)
    predictions: dict[int, pd.DataFrame] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {
                    "seed": r.seed,
                    "mae": r.mae,
                    "r2": r.r2,
                    "epochs": r.epochs,
                    "wall_time_s": r.wall_time_s,
                    "status": r.status if r.ok else f"failed: {r.error}",
                }
                for r in self.replicates
            ],
            columns=["seed", "mae", "r2", "epochs", "wall_time_s", "status"],
        )

    def predictions_frame(self) -> pd.DataFrame:
        """Test-set predictions of every successful replicate, ordered by seed."""
        frames = [self.predictions[seed] for seed in sorted(self.predictions)]
        if not frames:
            return pd.DataFrame(columns=list(PREDICTION_COLUMNS))
        return pd.concat(frames, ignore_index=True)

    def summary(self) -> dict[str, Any]:
        return summarize_replicates(self.replicates)


def summarize_replicates(replicates: Sequence[ReplicateResult]) -> dict[str, Any]:
    """Mean and sample standard deviation (ddof=1) of MAE and R^2 over successful replicates."""
    ok = [r for r in replicates if r.ok]

    def stats(values: list[float]) -> tuple[float | None, float | None]:
        if not values:
            return None, None
        array = np.asarray(values, dtype=np.float64)
        std = float(array.std(ddof=1)) if array.size > 1 else 0.0
        return float(array.mean()), std

    mae_mean, mae_std = stats([r.mae for r in ok if r.mae is not None])
    r2_mean, r2_std = stats([r.r2 for r in ok if r.r2 is not None])
    return {
        "n_replicates": len(replicates),
        "n_ok": len(ok),
        "n_failed": len(replicates) - len(ok),
        "mae_mean": mae_mean,
        "mae_std": mae_std,
        "r2_mean": r2_mean,
        "r2_std": r2_std,
    }


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """Map in input order; ``threads > 1`` runs jobs on a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def benchmark(
    dataset: Sequence[GraphSet],
    model_factory: Callable[[int], Model],
    n_replicates: int = 30,
    config: TrainConfig | None = None,
    first_seed: int = 0,
    threads: int = 1,
    record_timing: bool = False,
) -> BenchmarkResult:
    """Repeat split -> train -> evaluate with seeds ``first_seed .. first_seed + n - 1``.

    Each replicate builds its own model via ``model_factory(seed)`` and shuffles
    with its own seed, so parallel and serial runs give identical rows. A failed
    replicate is recorded with its error instead of aborting the run.
    """
    if n_replicates < 1:
        raise ValueError("n_replicates must be at least 1")
    config = config or TrainConfig()
    seeds = list(range(first_seed, first_seed + n_replicates))

    def run(seed: int) -> tuple[ReplicateResult, LearningCurve | None, pd.DataFrame | None]:
        started = time.perf_counter()
        try:
            train, val, test = split_dataset(dataset, SplitSpec(seed=seed))
            model, curve = train_model(model_factory(seed), train, val, replace(config, seed=seed))
            y_true, y_pred = _targets(test), model.predict(test)
            metrics = regression_metrics(y_true, y_pred)
        except REPLICATE_FAILURES as exc:
            console.print(f"[red]✗ replicate {seed} failed: {exc}[/red]")
            failed = ReplicateResult(seed=seed, mae=None, r2=None, epochs=None, status="failed", error=str(exc))
            return failed, None, None
        elapsed = time.perf_counter() - started
        r2_text = "undefined" if metrics.r2 is None else f"{metrics.r2:.4f}"
        console.print(
            f"[green]✓ replicate {seed}: MAE {metrics.mae:.4g}, R² {r2_text} ({curve.epochs} epochs)[/green]"
        )
        result = ReplicateResult(
            seed=seed,
            mae=metrics.mae,
            r2=metrics.r2,
            epochs=curve.epochs,
            wall_time_s=round(elapsed, 3) if record_timing else None,
        )
        predictions = pd.DataFrame(
            {
                "seed": seed,
                "formula": [gs.label for gs in test],
                "y_true": y_true,
                "y_pred": y_pred,
            },
            columns=list(PREDICTION_COLUMNS),
        )
        return result, curve, predictions

    outcomes = parallel_map(run, seeds, threads)
    return BenchmarkResult(
        replicates=[r for r, _, _ in outcomes],
        curves={r.seed: c for r, c, _ in outcomes if c is not None},
        predictions={r.seed: p for r, _, p in outcomes if p is not None},
    )
