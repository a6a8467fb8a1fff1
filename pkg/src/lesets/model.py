"""LESets and Deep Sets regressors on graph-set inputs.

LESets computes ``y = rho(aggregate({phi(x_i), w_i}))``:

* ``phi``: message passing over one local-environment graph (GraphConv or
  CGConv layers, tanh after each), mean-pool readout, then ``tanh(z W + b)``.
* ``aggregate``: weighted sum of member representations, optionally after
  set-wide single-head self-attention.
* ``rho``: ``L`` dense layers, tanh between them, linear output.

Weights are stored as (in, out) and act on row vectors.
"""

from dataclasses import asdict, dataclass
from typing import Any, Iterable, Literal, Mapping, Sequence

import numpy as np

from lesets.elemtable import ElementTable, FeatureSchema, featurize_element
from lesets.representation import Composition, GraphBatch, GraphSet, LEGraph, collate, directed_edges
from lesets.tensor import (
    Tensor,
    add,
    affine,
    as_tensor,
    concat,
    elementwise_mul,
    gather_rows,
    matmul,
    mean_pool,
    reshape,
    scale,
    scatter_add_rows,
    segment_softmax,
    sigmoid,
    softmax,
    softplus,
    tanh,
    transpose,
    weighted_sum,
)

ConvOperator = Literal["GraphConv", "CGConv"]
CONV_OPERATORS = ("GraphConv", "CGConv")
DEFAULT_NODE_DIM = 29


@dataclass(frozen=True)
class ModelConfig:
    """LESets hyperparameters."""

    conv_operator: ConvOperator = "GraphConv"
    n_conv_layers: int = 2
    n_fc_layers: int = 3
    hidden_dim: int = 32
    use_att: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.conv_operator not in CONV_OPERATORS:
            raise ValueError(f"conv_operator must be one of {CONV_OPERATORS}, got {self.conv_operator!r}")
        if self.n_conv_layers < 1:
            raise ValueError("n_conv_layers must be at least 1")
        if self.n_fc_layers < 1:
            raise ValueError("n_fc_layers must be at least 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ModelConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass(frozen=True)
class DeepSetsConfig:
    """Deep Sets baseline hyperparameters (per-element MLP, weighted sum, output MLP)."""

    n_phi_layers: int = 2
    n_fc_layers: int = 3
    hidden_dim: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.n_phi_layers < 1:
            raise ValueError("n_phi_layers must be at least 1")
        if self.n_fc_layers < 1:
            raise ValueError("n_fc_layers must be at least 1")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DeepSetsConfig":
        known = {k: data[k] for k in cls.__dataclass_fields__ if k in data}
        return cls(**known)


@dataclass(frozen=True)
class TargetScaler:
    """z-score transform of the regression target, fit on a training split."""

    mean: float = 0.0
    std: float = 1.0

    @classmethod
    def fit(cls, values: Iterable[float]) -> "TargetScaler":
        array = np.asarray(list(values), dtype=np.float64)
        if array.size == 0:
            raise ValueError("cannot fit a target scaler on no values")
        std = float(array.std())
        return cls(mean=float(array.mean()), std=std if std > 0 else 1.0)

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean) / self.std

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std + self.mean


@dataclass
class DenseParams:
    weight: Tensor
    bias: Tensor


@dataclass
class GraphConvParams:
    w_self: Tensor
    w_neigh: Tensor
    bias: Tensor


@dataclass
class CGConvParams:
    w_gate: Tensor
    b_gate: Tensor
    w_core: Tensor
    b_core: Tensor


@dataclass
class AttentionParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor


def _dense(rng: np.random.Generator, n_in: int, n_out: int, name: str) -> DenseParams:
    return DenseParams(
        weight=Tensor.uniform((n_in, n_out), n_in, rng, name=f"{name}.weight"),
        bias=Tensor.uniform((n_out,), n_in, rng, name=f"{name}.bias"),
    )


# Message passing over (destination, source, weight) edge arrays


def _graph_conv(nodes: Tensor, dst: np.ndarray, src: np.ndarray, weights: np.ndarray, params: GraphConvParams) -> Tensor:
    out = affine(nodes, params.w_self, params.bias)
    if len(dst):
        messages = elementwise_mul(gather_rows(nodes, src), weights.reshape(-1, 1))
        neighbor_sum = scatter_add_rows(messages, dst, nodes.shape[0])
        out = add(out, matmul(neighbor_sum, params.w_neigh))
    return tanh(out)


def _cg_conv(nodes: Tensor, dst: np.ndarray, src: np.ndarray, weights: np.ndarray, params: CGConvParams) -> Tensor:
    if len(dst) == 0:
        return tanh(nodes)
    z = concat([gather_rows(nodes, dst), gather_rows(nodes, src), weights.reshape(-1, 1)], axis=1)
    gate = sigmoid(affine(z, params.w_gate, params.b_gate))
    core = softplus(affine(z, params.w_core, params.b_core))
    messages = elementwise_mul(gate, core)
    return tanh(add(nodes, scatter_add_rows(messages, dst, nodes.shape[0])))


def graph_conv_layer(nodes, edges: Sequence[tuple[int, int]], edge_weights, params: GraphConvParams) -> Tensor:
    """GraphConv update ``tanh(v_m W_self + b + (sum_n e_mn v_n) W_neigh)``.

    Args:
        nodes: Node feature matrix (k, d_in).
        edges: Undirected (a, b) node index pairs.
        edge_weights: One weight per edge.
        params: Layer weights.

    Returns:
        Updated node matrix (k, d_out).
    """
    nodes = as_tensor(nodes)
    if nodes.ndim != 2 or nodes.shape[1] != params.w_self.shape[0]:
        raise ValueError(f"shape mismatch in graph_conv_layer: nodes {nodes.shape}, weight {params.w_self.shape}")
    return _graph_conv(nodes, *directed_edges(edges, edge_weights), params)


def cg_conv_layer(nodes, edges: Sequence[tuple[int, int]], edge_weights, params: CGConvParams) -> Tensor:
    """Gated crystal-graph update ``tanh(v_m + sum_n sigmoid(z W_f + b_f) * softplus(z W_s + b_s))``.

    ``z = [v_m, v_n, e_mn]`` for every neighbor n of m; messages flow both ways
    along each undirected edge.
    """
    nodes = as_tensor(nodes)
    d = nodes.shape[1] if nodes.ndim == 2 else -1
    if nodes.ndim != 2 or params.w_gate.shape != (2 * d + 1, d):
        raise ValueError(f"shape mismatch in cg_conv_layer: nodes {nodes.shape}, gate weight {params.w_gate.shape}")
    return _cg_conv(nodes, *directed_edges(edges, edge_weights), params)


# Aggregation and output


def _stack(zs) -> Tensor:
    if isinstance(zs, Tensor) and zs.ndim == 2:
        return zs
    if isinstance(zs, np.ndarray) and zs.ndim == 2:
        return as_tensor(zs)
    rows = [as_tensor(z) for z in zs]
    if not rows:
        raise ValueError("cannot aggregate an empty set")
    return concat([reshape(z, (1, z.shape[0])) for z in rows], axis=0)


def _self_attention(members: Tensor, params: AttentionParams) -> Tensor:
    q = matmul(members, params.w_q)
    k = matmul(members, params.w_k)
    v = matmul(members, params.w_v)
    scores = scale(matmul(q, transpose(k)), 1.0 / np.sqrt(params.w_k.shape[1]))
    return matmul(softmax(scores), v)


def _set_attention(members: Tensor, params: AttentionParams, pair_dst: np.ndarray, pair_src: np.ndarray) -> Tensor:
    """``_self_attention`` restricted to members of the same alloy, over (dst, src) member pairs."""
    n = members.shape[0]
    d_k = params.w_k.shape[1]
    q = matmul(members, params.w_q)
    k = matmul(members, params.w_k)
    v = matmul(members, params.w_v)
    scores = matmul(elementwise_mul(gather_rows(q, pair_dst), gather_rows(k, pair_src)), np.ones(d_k))
    alpha = segment_softmax(scale(scores, 1.0 / np.sqrt(d_k)), pair_dst, n)
    weighted = elementwise_mul(gather_rows(v, pair_src), reshape(alpha, (len(pair_dst), 1)))
    return scatter_add_rows(weighted, pair_dst, n)


def aggregate_ws(zs, ws) -> Tensor:
    """Weighted sum ``Z = sum_i w_i z_i``."""
    members = _stack(zs)
    weights = np.asarray(ws, dtype=np.float64)
    if members.shape[0] == 0:
        raise ValueError("cannot aggregate an empty set")
    if weights.shape != (members.shape[0],):
        raise ValueError(f"{members.shape[0]} members but {weights.shape} weights")
    return weighted_sum(members, weights)


def aggregate_att(zs, ws, w_q: Tensor, w_k: Tensor, w_v: Tensor) -> Tensor:
    """Self-attention across members, then weighted sum.

    ``M' = softmax(Q K^T / sqrt(d_k)) V`` with ``Q = M W_q``, ``K = M W_k``,
    ``V = M W_v`` for the stacked member matrix ``M``.
    """
    members = _stack(zs)
    if members.shape[0] == 0:
        raise ValueError("cannot aggregate an empty set")
    adjusted = _self_attention(members, AttentionParams(as_tensor(w_q), as_tensor(w_k), as_tensor(w_v)))
    return aggregate_ws(adjusted, ws)


def _pool_sets(members: Tensor, batch: GraphBatch) -> Tensor:
    weighted = elementwise_mul(members, batch.member_weights.reshape(-1, 1))
    return scatter_add_rows(weighted, batch.set_index, batch.num_sets)


def _rho(z: Tensor, layers: Sequence[DenseParams]) -> Tensor:
    for layer in layers[:-1]:
        z = tanh(affine(z, layer.weight, layer.bias))
    last = layers[-1]
    return affine(z, last.weight, last.bias)


def _init_rho(rng: np.random.Generator, hidden: int, n_layers: int) -> list[DenseParams]:
    layers = [_dense(rng, hidden, hidden, f"rho{i}") for i in range(n_layers - 1)]
    layers.append(_dense(rng, hidden, 1, f"rho{n_layers - 1}"))
    return layers


class _Regressor:
    """Parameter bookkeeping shared by LESets and Deep Sets."""

    kind: str = ""

    def parameters(self) -> dict[str, Tensor]:
        raise NotImplementedError

    def forward_batch(self, batch: GraphBatch) -> Tensor:
        raise NotImplementedError

    def param_count(self) -> int:
        return sum(t.size for t in self.parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.parameters().items()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if missing:
            raise ValueError(f"state is missing parameters: {', '.join(sorted(missing))}")
        for name, tensor in params.items():
            value = np.array(state[name], dtype=np.float64)
            if value.shape != tensor.shape:
                raise ValueError(f"shape mismatch for {name}: {value.shape} vs {tensor.shape}")
            tensor.data = value
            tensor.grad = None

    def forward(self, graph_set: GraphSet) -> Tensor:
        """Network output for one GraphSet (scaled target space), shape ()."""
        return reshape(self.forward_batch(collate([graph_set])), ())

    def predict(self, graph_sets: Sequence[GraphSet]) -> np.ndarray:
        """Predictions in target units, computed one GraphSet at a time."""
        raw = np.array([self.forward(gs).item() for gs in graph_sets], dtype=np.float64)
        return self.target_scaler.inverse(raw)


class LESetsModel(_Regressor):
    """Graph-set network: GNN ``phi``, aggregation, MLP ``rho``."""

    kind = "lesets"

    def __init__(self, config: ModelConfig, node_dim: int = DEFAULT_NODE_DIM):
        self.config = config
        self.node_dim = node_dim
        self.target_scaler = TargetScaler()
        rng = np.random.default_rng(config.seed)
        hidden = config.hidden_dim

        self.convs: list[GraphConvParams | CGConvParams] = []
        width = node_dim
        for i in range(config.n_conv_layers):
            if config.conv_operator == "GraphConv":
                self.convs.append(
                    GraphConvParams(
                        w_self=Tensor.uniform((width, hidden), width, rng, name=f"conv{i}.w_self"),
                        w_neigh=Tensor.uniform((width, hidden), width, rng, name=f"conv{i}.w_neigh"),
                        bias=Tensor.uniform((hidden,), width, rng, name=f"conv{i}.bias"),
                    )
                )
                width = hidden
            else:
                z_dim = 2 * node_dim + 1
                self.convs.append(
                    CGConvParams(
                        w_gate=Tensor.uniform((z_dim, node_dim), z_dim, rng, name=f"conv{i}.w_gate"),
                        b_gate=Tensor.uniform((node_dim,), z_dim, rng, name=f"conv{i}.b_gate"),
                        w_core=Tensor.uniform((z_dim, node_dim), z_dim, rng, name=f"conv{i}.w_core"),
                        b_core=Tensor.uniform((node_dim,), z_dim, rng, name=f"conv{i}.b_core"),
                    )
                )
        self.fc = _dense(rng, width, hidden, "fc")
        self.attention: AttentionParams | None = None
        if config.use_att:
            self.attention = AttentionParams(
                w_q=Tensor.uniform((hidden, hidden), hidden, rng, name="att.w_q"),
                w_k=Tensor.uniform((hidden, hidden), hidden, rng, name="att.w_k"),
                w_v=Tensor.uniform((hidden, hidden), hidden, rng, name="att.w_v"),
            )
        self.rho = _init_rho(rng, hidden, config.n_fc_layers)

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, conv in enumerate(self.convs):
            for field_name, tensor in vars(conv).items():
                params[f"conv{i}.{field_name}"] = tensor
        params["fc.weight"] = self.fc.weight
        params["fc.bias"] = self.fc.bias
        if self.attention is not None:
            params["att.w_q"] = self.attention.w_q
            params["att.w_k"] = self.attention.w_k
            params["att.w_v"] = self.attention.w_v
        for i, layer in enumerate(self.rho):
            params[f"rho{i}.weight"] = layer.weight
            params[f"rho{i}.bias"] = layer.bias
        return params

    def _convolve(self, nodes: Tensor, graph_like: LEGraph | GraphBatch) -> Tensor:
        if isinstance(graph_like, GraphBatch):
            dst, src, weights = graph_like.edge_dst, graph_like.edge_src, graph_like.edge_weights
        else:
            dst, src, weights = graph_like.directed_edges()
        layer = _graph_conv if self.config.conv_operator == "GraphConv" else _cg_conv
        for conv in self.convs:
            nodes = layer(nodes, dst, src, weights, conv)
        return nodes

    def representations(self, batch: GraphBatch) -> Tensor:
        """``phi`` for every graph in the batch, shape (graphs, hidden_dim)."""
        nodes = self._convolve(as_tensor(batch.node_features), batch)
        summed = scatter_add_rows(nodes, batch.node_graph, batch.num_graphs)
        pooled = elementwise_mul(summed, (1.0 / batch.graph_sizes).reshape(-1, 1))
        return tanh(affine(pooled, self.fc.weight, self.fc.bias))

    def attend(self, representations: Tensor, batch: GraphBatch) -> Tensor:
        """Attention-adjusted member representations (attention restricted to each alloy)."""
        if self.attention is None:
            raise ValueError("model was built without attention")
        return _set_attention(representations, self.attention, batch.pair_dst, batch.pair_src)

    def forward_batch(self, batch: GraphBatch) -> Tensor:
        z = self.representations(batch)
        if self.attention is not None:
            z = self.attend(z, batch)
        return reshape(_rho(_pool_sets(z, batch), self.rho), (batch.num_sets,))


class DeepSetsModel(_Regressor):
    """Sets of element feature vectors: shared MLP, fraction-weighted sum, output MLP."""

    kind = "deepsets"

    def __init__(self, config: DeepSetsConfig, node_dim: int = DEFAULT_NODE_DIM):
        self.config = config
        self.node_dim = node_dim
        self.target_scaler = TargetScaler()
        rng = np.random.default_rng(config.seed)
        hidden = config.hidden_dim
        self.phi = [
            _dense(rng, node_dim if i == 0 else hidden, hidden, f"phi{i}") for i in range(config.n_phi_layers)
        ]
        self.rho = _init_rho(rng, hidden, config.n_fc_layers)

    def parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for i, layer in enumerate(self.phi):
            params[f"phi{i}.weight"] = layer.weight
            params[f"phi{i}.bias"] = layer.bias
        for i, layer in enumerate(self.rho):
            params[f"rho{i}.weight"] = layer.weight
            params[f"rho{i}.bias"] = layer.bias
        return params

    def encode(self, element_features) -> Tensor:
        h = as_tensor(element_features)
        for layer in self.phi:
            h = tanh(affine(h, layer.weight, layer.bias))
        return h

    def forward_batch(self, batch: GraphBatch) -> Tensor:
        h = self.encode(batch.node_features[batch.center_rows])
        return reshape(_rho(_pool_sets(h, batch), self.rho), (batch.num_sets,))


Model = LESetsModel | DeepSetsModel


# Operation-level entry points


def phi_forward(graph: LEGraph, model: LESetsModel) -> Tensor:
    """Representation ``z`` of one LE graph, shape (hidden_dim,)."""
    nodes = model._convolve(as_tensor(graph.node_features), graph)
    z = mean_pool(nodes)
    return tanh(affine(z, model.fc.weight, model.fc.bias))


def rho_forward(z, model: LESetsModel | DeepSetsModel) -> Tensor:
    """Output MLP on one aggregated vector; returns a scalar tensor."""
    z = as_tensor(z)
    return reshape(_rho(z, model.rho), ())


def forward(graph_set: GraphSet, model: Model) -> Tensor:
    """Scalar network output for one GraphSet."""
    return model.forward(graph_set)


def deepsets_forward(
    comp: Composition,
    model: DeepSetsModel,
    table: ElementTable,
    schema: FeatureSchema | None = None,
) -> Tensor:
    """Deep Sets output ``rho(sum_e w_e phi(feature(e)))`` for one composition."""
    features = np.stack([featurize_element(s, table, schema) for s in comp.symbols])
    pooled = weighted_sum(model.encode(features), comp.fractions)
    return rho_forward(pooled, model)


def importance_scores(graph_set: GraphSet, model: LESetsModel) -> dict[str, float | None]:
    """Norm ratio ``||z'|| / ||z||`` of each member across attention, keyed by center element.

    Members whose pre-attention representation has zero norm map to None.

    Raises:
        ValueError: If the model has no attention.
    """
    return importance_scores_many([graph_set], model)[0]


def importance_scores_many(graph_sets: Sequence[GraphSet], model: LESetsModel) -> list[dict[str, float | None]]:
    """``importance_scores`` for many GraphSets, one set at a time like ``predict``."""
    if not isinstance(model, LESetsModel) or model.attention is None:
        raise ValueError("importance scores need a LESets model with attention (use_att=true)")
    results: list[dict[str, float | None]] = []
    for graph_set in graph_sets:
        batch = collate([graph_set])
        z = model.representations(batch)
        adjusted = model.attend(z, batch)
        before = np.linalg.norm(z.data, axis=1)
        after = np.linalg.norm(adjusted.data, axis=1)
        results.append(
            {
                center: float(after[i] / before[i]) if before[i] > 0 else None
                for i, center in enumerate(batch.centers)
            }
        )
    return results


def param_count(model: Model) -> int:
    """Total number of trainable scalars."""
    return model.param_count()


def build_model(kind: str, config: ModelConfig | DeepSetsConfig, node_dim: int = DEFAULT_NODE_DIM) -> Model:
    """Instantiate a model by kind (``lesets`` or ``deepsets``)."""
    if kind == "lesets":
        if not isinstance(config, ModelConfig):
            raise ValueError("lesets needs a ModelConfig")
        return LESetsModel(config, node_dim=node_dim)
    if kind == "deepsets":
        if not isinstance(config, DeepSetsConfig):
            raise ValueError("deepsets needs a DeepSetsConfig")
        return DeepSetsModel(config, node_dim=node_dim)
    raise ValueError(f"unknown model kind {kind!r}")
