"""Compositions and their local-environment graph-set representation."""

import re
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from lesets.elemtable import ElementTable, FeatureSchema, featurize_element

TARGET_UNITS = {
    "youngs_modulus": "GPa",
    "bulk_modulus": "GPa",
    "rws": "angstrom",
}

FRACTION_SUM_TOLERANCE = 1e-3
NORMALIZED_TOLERANCE = 1e-9

_TOKEN = re.compile(r"([A-Z][a-z]?)((?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)?")


@dataclass(frozen=True)
class Composition:
    """Ordered molar fractions of an alloy.

    Immutable dataclass; fractions are positive, unique per symbol and sum to 1.
    """

    entries: tuple[tuple[str, float], ...]

    def __post_init__(self):
        """Validate composition invariants."""
        if not self.entries:
            raise ValueError("composition needs at least one element")
        symbols = [s for s, _ in self.entries]
        if len(set(symbols)) != len(symbols):
            repeated = next(s for s in symbols if symbols.count(s) > 1)
            raise ValueError(f"repeated symbol {repeated}")
        if any(not f > 0 for _, f in self.entries):
            raise ValueError("fractions must be strictly positive")
        total = sum(f for _, f in self.entries)
        if abs(total - 1.0) > NORMALIZED_TOLERANCE:
            raise ValueError(f"fractions sum to {total}, expected 1")

    @classmethod
    def from_amounts(cls, amounts: Sequence[tuple[str, float]]) -> "Composition":
        """Normalize relative amounts into molar fractions."""
        if not amounts:
            raise ValueError("composition needs at least one element")
        if any(not a > 0 for _, a in amounts):
            raise ValueError("amounts must be strictly positive")
        total = float(sum(a for _, a in amounts))
        return cls(tuple((s, float(a) / total) for s, a in amounts))

    @property
    def symbols(self) -> list[str]:
        return [s for s, _ in self.entries]

    @property
    def fractions(self) -> np.ndarray:
        return np.array([f for _, f in self.entries], dtype=np.float64)

    def fraction(self, symbol: str) -> float:
        for s, f in self.entries:
            if s == symbol:
                return f
        raise KeyError(symbol)

    def __contains__(self, symbol: str) -> bool:
        return any(s == symbol for s, _ in self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def formula(self) -> str:
        """Canonical fraction formula, e.g. ``Fe0.25Co0.25Cr0.25Ni0.25``."""
        return "".join(f"{s}{f:.6g}" for s, f in self.entries)


def parse_composition(text: str) -> Composition:
    """Parse a formula such as ``Fe2CoCrNi`` or ``Fe0.25Co0.25Cr0.25Ni0.25``.

    Amounts are ratios unless every element carries an explicit amount below 1,
    in which case they are molar fractions that must already sum to 1 within
    1e-3 (small rounding is renormalized away).

    Args:
        text: Formula string.

    Returns:
        Composition with entries in order of appearance.

    Raises:
        ValueError: On an empty string, unparseable token, zero amount,
            repeated symbol or fractions far from summing to 1.
    """
    compact = re.sub(r"\s+", "", text or "")
    if not compact:
        raise ValueError("empty composition")

    amounts: list[tuple[str, float]] = []
    explicit: list[bool] = []
    pos = 0
    while pos < len(compact):
        match = _TOKEN.match(compact, pos)
        if match is None:
            raise ValueError(f"unparseable token at position {pos} in {text!r}: {compact[pos:]!r}")
        symbol, number = match.group(1), match.group(2)
        amount = float(number) if number else 1.0
        if not amount > 0:
            raise ValueError(f"amount of {symbol} must be positive")
        if any(s == symbol for s, _ in amounts):
            raise ValueError(f"repeated symbol {symbol}")
        amounts.append((symbol, amount))
        explicit.append(number is not None)
        pos = match.end()

    if all(explicit) and all(a < 1 for _, a in amounts):
        total = sum(a for _, a in amounts)
        if abs(total - 1.0) > FRACTION_SUM_TOLERANCE:
            raise ValueError(f"fractions in {text!r} sum to {total:.6g}, expected 1")

    return Composition.from_amounts(amounts)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.flags.writeable = False
    return array


def directed_edges(
    edges: Sequence[tuple[int, int]], edge_weights
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Expand undirected weighted edges into (destination, source, weight) arrays, both directions."""
    pairs = np.asarray(edges, dtype=int).reshape(-1, 2)
    weights = np.asarray(edge_weights, dtype=np.float64).reshape(-1)
    if weights.shape[0] != pairs.shape[0]:
        raise ValueError(f"{pairs.shape[0]} edges but {weights.shape[0]} edge weights")
    dst = np.concatenate([pairs[:, 0], pairs[:, 1]])
    src = np.concatenate([pairs[:, 1], pairs[:, 0]])
    return dst, src, np.concatenate([weights, weights])


@dataclass(frozen=True, eq=False)
class LEGraph:
    """Star graph of one local environment.

    Node 0 is the center element; the remaining nodes are the other elements of
    the alloy in composition order. Each undirected edge joins the center to a
    neighbor and is weighted by that neighbor's molar fraction.
    """

    center_index: int
    symbols: tuple[str, ...]
    node_features: np.ndarray
    edges: tuple[tuple[int, int], ...]
    edge_weights: np.ndarray

    def __post_init__(self):
        """Validate star topology."""
        object.__setattr__(self, "node_features", _frozen(self.node_features))
        object.__setattr__(self, "edge_weights", _frozen(self.edge_weights))
        k = len(self.symbols)
        if self.node_features.ndim != 2 or self.node_features.shape[0] != k:
            raise ValueError("node_features must have one row per node")
        if not 0 <= self.center_index < k:
            raise ValueError("center_index out of range")
        if len(self.edges) != k - 1 or self.edge_weights.shape != (k - 1,):
            raise ValueError(f"star graph with {k} nodes needs {k - 1} edges")
        neighbors = set()
        for a, b in self.edges:
            if a == b:
                raise ValueError("self-edge in local environment graph")
            if self.center_index not in (a, b):
                raise ValueError("edge not incident to the center node")
            neighbors.add(b if a == self.center_index else a)
        if len(neighbors) != k - 1:
            raise ValueError("each neighbor must be joined to the center exactly once")
        if np.any(self.edge_weights <= 0):
            raise ValueError("edge weights must be positive")

    @property
    def center_symbol(self) -> str:
        return self.symbols[self.center_index]

    @property
    def num_nodes(self) -> int:
        return len(self.symbols)

    def directed_edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Both directions of every edge as (destination, source, weight) arrays."""
        return directed_edges(self.edges, self.edge_weights)


@dataclass(frozen=True, eq=False)
class GraphSet:
    """Weighted set {(LEGraph, fraction of its center)} representing one alloy."""

    members: tuple[tuple[LEGraph, float], ...]
    target: float | None = None
    target_name: str | None = None
    formula: str | None = None

    def __post_init__(self):
        if not self.members:
            raise ValueError("graph set needs at least one member")
        total = sum(w for _, w in self.members)
        if abs(total - 1.0) > NORMALIZED_TOLERANCE:
            raise ValueError(f"member weights sum to {total}, expected 1")
        centers = [g.center_symbol for g, _ in self.members]
        if len(set(centers)) != len(centers):
            raise ValueError("graph set has two members with the same center element")

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.members], dtype=np.float64)

    @property
    def graphs(self) -> list[LEGraph]:
        return [g for g, _ in self.members]

    @property
    def centers(self) -> list[str]:
        return [g.center_symbol for g, _ in self.members]

    @property
    def unit(self) -> str | None:
        return TARGET_UNITS.get(self.target_name) if self.target_name else None

    @property
    def label(self) -> str:
        if self.formula:
            return self.formula
        return "".join(f"{c}{w:.6g}" for c, w in zip(self.centers, self.weights))

    def permuted(self, order: Sequence[int]) -> "GraphSet":
        """Same set with members reordered."""
        return GraphSet(
            members=tuple(self.members[i] for i in order),
            target=self.target,
            target_name=self.target_name,
            formula=self.formula,
        )

    def to_dict(self) -> dict[str, Any]:
        """Documented JSON form."""
        return {
            "formula": self.formula,
            "members": [
                {
                    "center": g.center_symbol,
                    "nodes": list(g.symbols),
                    "edge_weights": [float(w) for w in g.edge_weights],
                    "weight": float(w),
                }
                for g, w in self.members
            ],
            "target": self.target,
            "target_name": self.target_name,
        }


def build_le_graph(
    center: str,
    comp: Composition,
    table: ElementTable,
    schema: FeatureSchema | None = None,
) -> LEGraph:
    """Build the local-environment star graph centered on one element.

    Raises:
        ValueError: If the center is not part of the composition.
        UnknownElementError: If an element is missing from the table.
    """
    if center not in comp:
        raise ValueError(f"center {center} not in composition {comp.formula}")
    schema = schema or table.schema
    neighbors = [s for s in comp.symbols if s != center]
    symbols = (center, *neighbors)
    features = np.stack([featurize_element(s, table, schema) for s in symbols])
    edges = tuple((0, j) for j in range(1, len(symbols)))
    weights = np.array([comp.fraction(s) for s in neighbors], dtype=np.float64)
    return LEGraph(
        center_index=0,
        symbols=symbols,
        node_features=features,
        edges=edges,
        edge_weights=weights,
    )


def build_graph_set(
    comp: Composition,
    table: ElementTable,
    schema: FeatureSchema | None = None,
    target: float | None = None,
    target_name: str | None = None,
) -> GraphSet:
    """One LE graph per element, weighted by the center element's fraction."""
    members = tuple((build_le_graph(s, comp, table, schema), f) for s, f in comp.entries)
    return GraphSet(members=members, target=target, target_name=target_name, formula=comp.formula)


def graph_set_from_dict(data: dict[str, Any], table: ElementTable, schema: FeatureSchema | None = None) -> GraphSet:
    """Rebuild a GraphSet from its JSON form."""
    schema = schema or table.schema
    members = []
    for item in data["members"]:
        nodes = list(item["nodes"])
        if nodes[0] != item["center"]:
            raise ValueError(f"center {item['center']} must be the first node")
        graph = LEGraph(
            center_index=0,
            symbols=tuple(nodes),
            node_features=np.stack([featurize_element(s, table, schema) for s in nodes]),
            edges=tuple((0, j) for j in range(1, len(nodes))),
            edge_weights=np.array(item["edge_weights"], dtype=np.float64),
        )
        members.append((graph, float(item["weight"])))
    return GraphSet(
        members=tuple(members),
        target=data.get("target"),
        target_name=data.get("target_name"),
        formula=data.get("formula"),
    )


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Several GraphSets collated into one disjoint graph, addressed by index arrays.

    ``node_graph`` maps node rows to graph rows, ``set_index`` maps graph rows
    to alloys, and ``pair_dst``/``pair_src`` list every ordered pair of members
    of the same alloy (self pairs included) for set-wide attention.
    """

    node_features: np.ndarray
    edge_dst: np.ndarray
    edge_src: np.ndarray
    edge_weights: np.ndarray
    node_graph: np.ndarray
    graph_sizes: np.ndarray
    center_rows: np.ndarray
    member_weights: np.ndarray
    set_index: np.ndarray
    pair_dst: np.ndarray
    pair_src: np.ndarray
    centers: tuple[str, ...]
    targets: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def num_graphs(self) -> int:
        return self.graph_sizes.shape[0]

    @property
    def num_sets(self) -> int:
        return self.targets.shape[0]


def collate(graph_sets: Sequence[GraphSet]) -> GraphBatch:
    """Stack graph sets into a GraphBatch.

    Raises:
        ValueError: If no graph sets are given.
    """
    if not graph_sets:
        raise ValueError("empty batch")

    graphs = [g for gs in graph_sets for g in gs.graphs]
    sizes = np.array([g.num_nodes for g in graphs], dtype=int)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    set_sizes = np.array([len(gs.members) for gs in graph_sets], dtype=int)
    set_index = np.repeat(np.arange(len(graph_sets)), set_sizes)

    dst_parts, src_parts, w_parts = [], [], []
    for graph, offset in zip(graphs, offsets):
        dst, src, w = graph.directed_edges()
        dst_parts.append(dst + offset)
        src_parts.append(src + offset)
        w_parts.append(w)

    pair_dst, pair_src = [], []
    first = 0
    for k in set_sizes:
        members = np.arange(first, first + k)
        pair_dst.append(np.repeat(members, k))
        pair_src.append(np.tile(members, k))
        first += k

    targets = np.array(
        [np.nan if gs.target is None else gs.target for gs in graph_sets], dtype=np.float64
    )
    return GraphBatch(
        node_features=np.concatenate([g.node_features for g in graphs], axis=0),
        edge_dst=np.concatenate(dst_parts).astype(int),
        edge_src=np.concatenate(src_parts).astype(int),
        edge_weights=np.concatenate(w_parts),
        node_graph=np.repeat(np.arange(len(graphs)), sizes),
        graph_sizes=sizes,
        center_rows=offsets + np.array([g.center_index for g in graphs], dtype=int),
        member_weights=np.concatenate([gs.weights for gs in graph_sets]),
        set_index=set_index,
        pair_dst=np.concatenate(pair_dst),
        pair_src=np.concatenate(pair_src),
        centers=tuple(c for gs in graph_sets for c in gs.centers),
        targets=targets,
    )
