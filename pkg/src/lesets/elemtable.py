"""Elemental descriptor table and node featurization."""

import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from rich.console import Console

console = Console()

TABLE_ENV_VAR = "LESETS_ELEMENT_TABLE"
DEFAULT_TABLE_PATH = Path(__file__).resolve().parent / "data" / "elements.csv"

TABLE_COLUMNS = [
    "symbol",
    "period",
    "group",
    "atomic_mass",
    "covalent_radius",
    "electronegativity",
    "first_ionization_energy",
    "electron_affinity",
    "atomic_volume",
]
CONTINUOUS_FIELDS = TABLE_COLUMNS[3:]

PERIOD_RANGE = (3, 7)
GROUP_RANGE = (1, 18)


class UnknownElementError(KeyError, ValueError):
    """Raised when a chemical symbol is not present in the element table."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown element"


@dataclass(frozen=True)
class ElementDescriptor:
    """Physical descriptors of one chemical element.

    Immutable dataclass; invariants are checked on construction.
    """

    symbol: str
    period: int
    group: int
    atomic_mass: float
    covalent_radius: float
    electronegativity: float
    first_ionization_energy: float
    electron_affinity: float
    atomic_volume: float

    def __post_init__(self):
        """Validate descriptor ranges."""
        if not self.symbol:
            raise ValueError("Element symbol cannot be empty")
        if not PERIOD_RANGE[0] <= self.period <= PERIOD_RANGE[1]:
            raise ValueError(f"period {self.period} of {self.symbol} outside {PERIOD_RANGE[0]}-{PERIOD_RANGE[1]}")
        if not GROUP_RANGE[0] <= self.group <= GROUP_RANGE[1]:
            raise ValueError(f"group {self.group} of {self.symbol} outside {GROUP_RANGE[0]}-{GROUP_RANGE[1]}")
        for name in CONTINUOUS_FIELDS:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"non-finite {name} for {self.symbol}")
        for name in ("atomic_mass", "covalent_radius", "atomic_volume"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} of {self.symbol} must be positive")

    @property
    def continuous(self) -> np.ndarray:
        """The six continuous descriptors in schema order."""
        return np.array([getattr(self, name) for name in CONTINUOUS_FIELDS], dtype=np.float64)


@dataclass(frozen=True)
class FeatureSchema:
    """Layout of the node feature vector and its z-score statistics."""

    continuous_means: tuple[float, ...]
    continuous_stds: tuple[float, ...]
    period_onehot_width: int = PERIOD_RANGE[1] - PERIOD_RANGE[0] + 1
    group_onehot_width: int = GROUP_RANGE[1] - GROUP_RANGE[0] + 1
    continuous_count: int = len(CONTINUOUS_FIELDS)

    def __post_init__(self):
        if len(self.continuous_means) != self.continuous_count:
            raise ValueError("continuous_means length does not match continuous_count")
        if len(self.continuous_stds) != self.continuous_count:
            raise ValueError("continuous_stds length does not match continuous_count")
        if any(not s > 0 for s in self.continuous_stds):
            raise ValueError("continuous_stds must be strictly positive")

    @property
    def total_dim(self) -> int:
        return self.period_onehot_width + self.group_onehot_width + self.continuous_count


class ElementTable:
    """Validated, immutable collection of element descriptors."""

    def __init__(self, elements: list[ElementDescriptor], source: Path | None = None):
        """Build a table and its feature schema.

        Args:
            elements: Descriptor records, one per element.
            source: File the records were read from, if any.

        Raises:
            ValueError: If the list is empty, a symbol repeats, or a descriptor
                column has zero spread.
        """
        if not elements:
            raise ValueError("empty table")
        by_symbol: dict[str, ElementDescriptor] = {}
        for element in elements:
            if element.symbol in by_symbol:
                raise ValueError(f"duplicate symbol {element.symbol}")
            by_symbol[element.symbol] = element
        self._elements = by_symbol
        self.source = source

        matrix = np.stack([e.continuous for e in elements])
        stds = matrix.std(axis=0)
        if np.any(stds <= 0):
            zero = [CONTINUOUS_FIELDS[i] for i in np.flatnonzero(stds <= 0)]
            raise ValueError(f"descriptor columns without spread: {', '.join(zero)}")
        self.schema = FeatureSchema(
            continuous_means=tuple(float(m) for m in matrix.mean(axis=0)),
            continuous_stds=tuple(float(s) for s in stds),
        )

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._elements

    def __len__(self) -> int:
        return len(self._elements)

    def __iter__(self):
        return iter(self._elements.values())

    @property
    def symbols(self) -> list[str]:
        return list(self._elements)

    def get(self, symbol: str) -> ElementDescriptor:
        """Look up one element.

        Raises:
            UnknownElementError: If the symbol is not in the table.
        """
        try:
            return self._elements[symbol]
        except KeyError:
            raise UnknownElementError(f"unknown element {symbol}") from None

    @property
    def schema_hash(self) -> str:
        """SHA-256 over the table contents and schema; pins checkpoints to a featurization."""
        payload = {
            "rows": [[getattr(e, c) for c in TABLE_COLUMNS] for e in self._elements.values()],
            "means": self.schema.continuous_means,
            "stds": self.schema.continuous_stds,
            "widths": [
                self.schema.period_onehot_width,
                self.schema.group_onehot_width,
                self.schema.continuous_count,
            ],
        }
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def default_table_path() -> Path:
    """Resolve the element table path, honouring ``LESETS_ELEMENT_TABLE``."""
    override = os.environ.get(TABLE_ENV_VAR, "").strip()
    if override:
        return Path(override).expanduser()
    return DEFAULT_TABLE_PATH


def load_table(path: str | Path | None = None) -> ElementTable:
    """Load and validate an element table CSV.

    Args:
        path: CSV file in the documented schema. Defaults to
            ``default_table_path()``.

    Returns:
        The validated ElementTable with its FeatureSchema.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: On an empty table, bad header, duplicate symbol,
            out-of-range period/group or non-finite value.
    """
    table_path = Path(path) if path is not None else default_table_path()
    if not table_path.exists():
        raise FileNotFoundError(f"Element table not found: {table_path}")

    try:
        frame = pd.read_csv(table_path, encoding="utf-8", dtype={"symbol": str})
    except pd.errors.EmptyDataError:
        raise ValueError("empty table") from None

    missing = [c for c in TABLE_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"element table missing columns: {', '.join(missing)}")
    if frame.empty:
        raise ValueError("empty table")

    elements = []
    for row in frame.itertuples(index=False):
        values = {c: getattr(row, c) for c in TABLE_COLUMNS}
        for name in ("period", "group", *CONTINUOUS_FIELDS):
            if pd.isna(values[name]):
                raise ValueError(f"non-finite {name} for {values['symbol']}")
        elements.append(
            ElementDescriptor(
                symbol=str(values["symbol"]).strip(),
                period=int(values["period"]),
                group=int(values["group"]),
                **{name: float(values[name]) for name in CONTINUOUS_FIELDS},
            )
        )

    table = ElementTable(elements, source=table_path)
    console.print(f"[dim]Loaded {len(table)} elements from {table_path}[/dim]")
    return table


def featurize_element(symbol: str, table: ElementTable, schema: FeatureSchema | None = None) -> np.ndarray:
    """Node feature vector: one-hot period, one-hot group, z-scored descriptors.

    Args:
        symbol: Chemical symbol.
        table: Element table.
        schema: Feature schema; defaults to the table's own.

    Returns:
        Float64 vector of length ``schema.total_dim``.

    Raises:
        UnknownElementError: If the symbol is not in the table.
    """
    schema = schema or table.schema
    element = table.get(symbol)

    period = np.zeros(schema.period_onehot_width)
    period[element.period - PERIOD_RANGE[0]] = 1.0
    group = np.zeros(schema.group_onehot_width)
    group[element.group - GROUP_RANGE[0]] = 1.0

    means = np.asarray(schema.continuous_means)
    stds = np.asarray(schema.continuous_stds)
    continuous = (element.continuous - means) / stds

    return np.concatenate([period, group, continuous])
