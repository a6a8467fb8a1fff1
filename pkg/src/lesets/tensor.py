"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the active ``Tape`` whenever one of their
inputs requires a gradient. Without an active tape they only compute values,
which is how inference runs.

    with Tape():
        loss = mse_loss(affine(x, w, b), y)
    backward(loss)
"""

from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Array = np.ndarray
BackwardFn = Callable[[Array], tuple[Array | None, ...]]

_ACTIVE_TAPE: ContextVar["Tape | None"] = ContextVar("lesets_active_tape", default=None)


class Tensor:
    """A scalar, vector or matrix of float64 values with an optional gradient."""

    __slots__ = ("data", "requires_grad", "grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, copy: bool = True):
        array = np.array(data, dtype=np.float64) if copy else np.asarray(data, dtype=np.float64)
        if array.ndim > 2:
            raise ValueError(f"tensors are at most 2-dimensional, got shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.name = name
        self._tape: Tape | None = None

    @classmethod
    def uniform(
        cls,
        shape: tuple[int, ...],
        fan_in: int,
        rng: np.random.Generator,
        name: str | None = None,
    ) -> "Tensor":
        """Trainable tensor drawn from U(-sqrt(1/fan_in), sqrt(1/fan_in))."""
        bound = float(np.sqrt(1.0 / max(fan_in, 1)))
        return cls(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name, copy=False)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single value, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> Array:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


@dataclass
class TapeEntry:
    """One recorded primitive: its output, inputs and local-gradient closure."""

    op: str
    output: Tensor
    inputs: tuple[Tensor, ...]
    backward_fn: BackwardFn


class Tape:
    """Ordered record of differentiable operations.

    Entries are appended as operations run, so inputs always precede the
    operations that consume them.
    """

    def __init__(self, check_finite: bool = True):
        """Initialize an empty tape.

        Args:
            check_finite: Raise FloatingPointError as soon as an operation
                produces NaN or Inf.
        """
        self.entries: list[TapeEntry] = []
        self.check_finite = check_finite
        self._tokens = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, op: str, output: Tensor, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> None:
        output._tape = self
        self.entries.append(TapeEntry(op, output, inputs, backward_fn))

    def clear(self) -> None:
        for entry in self.entries:
            entry.output._tape = None
        self.entries.clear()

    def backward(self, loss: Tensor) -> None:
        """Propagate d(loss)/d(x) to every leaf tensor that requires a gradient.

        Leaf gradients accumulate into ``Tensor.grad``. The tape is cleared
        afterwards and can record a new pass.
        """
        pending: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
        for entry in reversed(self.entries):
            upstream = pending.pop(id(entry.output), None)
            if upstream is None:
                continue
            local = entry.backward_fn(upstream)
            for tensor, grad in zip(entry.inputs, local):
                if grad is None or not tensor.requires_grad:
                    continue
                if self.check_finite and not np.all(np.isfinite(grad)):
                    raise FloatingPointError(f"non-finite gradient flowing out of {entry.op}")
                if tensor._tape is self:
                    key = id(tensor)
                    pending[key] = pending[key] + grad if key in pending else grad
                else:
                    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad
        self.clear()


def active_tape() -> Tape | None:
    return _ACTIVE_TAPE.get()


def backward(loss: Tensor) -> None:
    """Populate gradients of a scalar loss recorded on a tape.

    Raises:
        ValueError: If the loss is not a scalar or was not recorded.
    """
    if loss.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    if loss._tape is None:
        raise ValueError("loss was not recorded on a tape")
    loss._tape.backward(loss)


def as_tensor(value) -> Tensor:
    """Wrap arrays and numbers as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, copy=False)


def _result(op: str, value: Array, inputs: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    tape = _ACTIVE_TAPE.get()
    tracked = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(value, requires_grad=tracked, copy=False)
    if tape is not None:
        if tape.check_finite and not np.all(np.isfinite(value)):
            raise FloatingPointError(f"non-finite values produced by {op}")
        if tracked:
            tape.record(op, out, inputs, backward_fn)
    return out


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"shape mismatch in {op}: {a.shape} vs {b.shape}") from None


# Primitives


def matmul(a, b) -> Tensor:
    """Matrix product for matrix-matrix, vector-matrix and matrix-vector operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or (a.ndim == 1 and b.ndim == 1):
        raise ValueError(f"matmul needs at least one matrix operand, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[0]:
        raise ValueError(f"shape mismatch in matmul: {a.shape} @ {b.shape}")
    av, bv = a.data, b.data

    def grad_fn(g: Array):
        if a.ndim == 2 and b.ndim == 2:
            return g @ bv.T, av.T @ g
        if a.ndim == 1:
            return bv @ g, np.outer(av, g)
        return np.outer(g, bv), av.T @ g

    return _result("matmul", av @ bv, (a, b), grad_fn)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _result(
        "add",
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _result(
        "sub",
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)),
    )


def affine(x, w, b) -> Tensor:
    """Row-vector linear map ``x @ w + b`` with ``w`` shaped (in, out)."""
    return add(matmul(x, w), b)


def scale(a, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return _result("scale", a.data * factor, (a,), lambda g: (g * factor,))


def elementwise_mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("elementwise_mul", a, b)
    av, bv = a.data, b.data
    return _result(
        "elementwise_mul",
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)),
    )


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    """Concatenate along an existing axis."""
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ValueError("concat needs at least one tensor")
    try:
        value = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ValueError(f"shape mismatch in concat: {[p.shape for p in parts]}") from exc
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def grad_fn(g: Array):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", value, tuple(parts), grad_fn)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError(f"transpose needs a matrix, got shape {a.shape}")
    return _result("transpose", a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        value = a.data.reshape(shape)
    except ValueError as exc:
        raise ValueError(f"cannot reshape {original} into {shape}") from exc
    return _result("reshape", value, (a,), lambda g: (g.reshape(original),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _result("tanh", out, (a,), lambda g: (g * (1.0 - out**2),))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a) -> Tensor:
    a = as_tensor(a)
    x = a.data
    out = np.logaddexp(0.0, x)
    slope = 0.5 * (1.0 + np.tanh(0.5 * x))
    return _result("softplus", out, (a,), lambda g: (g * slope,))


def softmax(a) -> Tensor:
    """Softmax over the last axis.

    Raises:
        ValueError: If a row is empty.
    """
    a = as_tensor(a)
    if a.ndim == 0:
        raise ValueError("softmax needs a vector or matrix")
    if a.shape[-1] == 0:
        raise ValueError("softmax over empty row")
    x = a.data
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def grad_fn(g: Array):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)

    return _result("softmax", out, (a,), grad_fn)


def mean_pool(a) -> Tensor:
    """Column-wise mean over the rows of a matrix."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ValueError(f"mean_pool needs a matrix, got shape {a.shape}")
    n = a.shape[0]
    if n == 0:
        raise ValueError("mean_pool over zero rows")
    return _result(
        "mean_pool",
        a.data.mean(axis=0),
        (a,),
        lambda g: (np.broadcast_to(g / n, a.shape).copy(),),
    )


def weighted_sum(rows, weights) -> Tensor:
    """``sum_i weights[i] * rows[i]`` for a matrix of rows."""
    rows, weights = as_tensor(rows), as_tensor(weights)
    if rows.ndim != 2 or weights.ndim != 1:
        raise ValueError(f"weighted_sum needs a matrix and a vector, got {rows.shape} and {weights.shape}")
    if rows.shape[0] == 0:
        raise ValueError("weighted_sum over an empty set")
    return matmul(weights, rows)


def _check_index(op: str, index, length: int) -> Array:
    index = np.asarray(index)
    if index.ndim != 1 or not np.issubdtype(index.dtype, np.integer):
        raise ValueError(f"{op} needs a 1-d integer index, got {index.dtype} {index.shape}")
    if index.size and (index.min() < 0 or index.max() >= length):
        raise ValueError(f"{op} index out of range for {length} rows")
    return index


def gather_rows(a, index) -> Tensor:
    """Rows ``a[index]``; repeated indices are allowed."""
    a = as_tensor(a)
    if a.ndim == 0:
        raise ValueError("gather_rows needs a vector or matrix")
    index = _check_index("gather_rows", index, a.shape[0])

    def grad_fn(g: Array):
        grad = np.zeros_like(a.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _result("gather_rows", a.data[index], (a,), grad_fn)


def scatter_add_rows(a, index, num_rows: int) -> Tensor:
    """Sum row ``i`` of ``a`` into output row ``index[i]``; the output has ``num_rows`` rows."""
    a = as_tensor(a)
    if a.ndim == 0:
        raise ValueError("scatter_add_rows needs a vector or matrix")
    index = _check_index("scatter_add_rows", index, num_rows)
    if index.shape[0] != a.shape[0]:
        raise ValueError(f"shape mismatch in scatter_add_rows: {a.shape[0]} rows, {index.shape[0]} indices")
    out = np.zeros((num_rows, *a.shape[1:]))
    np.add.at(out, index, a.data)
    return _result("scatter_add_rows", out, (a,), lambda g: (g[index],))


def segment_softmax(a, segments, num_segments: int) -> Tensor:
    """Softmax of a vector within each group of entries sharing a segment id.

    Raises:
        ValueError: If a segment id is out of range.
    """
    a = as_tensor(a)
    if a.ndim != 1:
        raise ValueError(f"segment_softmax needs a vector, got shape {a.shape}")
    segments = _check_index("segment_softmax", segments, num_segments)
    if segments.shape != a.shape:
        raise ValueError(f"shape mismatch in segment_softmax: {a.shape} vs {segments.shape}")
    peak = np.full(num_segments, -np.inf)
    np.maximum.at(peak, segments, a.data)
    e = np.exp(a.data - peak[segments])
    totals = np.zeros(num_segments)
    np.add.at(totals, segments, e)
    out = e / totals[segments]

    def grad_fn(g: Array):
        weighted = np.zeros(num_segments)
        np.add.at(weighted, segments, g * out)
        return (out * (g - weighted[segments]),)

    return _result("segment_softmax", out, (a,), grad_fn)


def l2_norm(a) -> Tensor:
    a = as_tensor(a)
    norm = float(np.sqrt(np.sum(a.data**2)))

    def grad_fn(g: Array):
        if norm == 0.0:
            return (np.zeros_like(a.data),)
        return (g * a.data / norm,)

    return _result("l2_norm", np.array(norm), (a,), grad_fn)


def mse_loss(pred, target) -> Tensor:
    """Mean squared error over all entries."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch in mse_loss: {pred.shape} vs {target.shape}")
    if pred.size == 0:
        raise ValueError("mse_loss over an empty batch")
    diff = pred.data - target.data
    n = diff.size

    def grad_fn(g: Array):
        gp = g * 2.0 * diff / n
        return gp, -gp

    return _result("mse_loss", np.array(np.mean(diff**2)), (pred, target), grad_fn)


# Gradient checking


@dataclass
class GradCheckReport:
    """Maximum relative error between tape gradients and central differences."""

    max_relative_error: float = 0.0
    per_parameter: dict[str, float] = field(default_factory=dict)
    tolerance: float | None = None

    @property
    def passed(self) -> bool:
        return self.tolerance is None or self.max_relative_error < self.tolerance


def _named(params: Mapping[str, Tensor] | Iterable[Tensor]) -> dict[str, Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    return {t.name or f"param_{i}": t for i, t in enumerate(params)}


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor] | Iterable[Tensor],
    step: float = 1e-5,
    tol: float | None = None,
    floor: float = 1e-2,
) -> GradCheckReport:
    """Compare tape gradients with central finite differences.

    ``f`` is re-evaluated with each parameter coordinate nudged by ``±step``.
    The relative error of a coordinate is
    ``|analytic - numeric| / max(|analytic|, |numeric|, floor)``.

    Args:
        f: Deterministic zero-argument function returning a scalar tensor
            computed from ``params``.
        params: Tensors to check (mapping or sequence).
        step: Finite-difference step, must be positive.
        tol: Optional tolerance stored on the report for ``passed``.
        floor: Lower bound of the error denominator.

    Returns:
        GradCheckReport with per-parameter maxima.

    Raises:
        ValueError: If step is not positive.
        FloatingPointError: If ``f`` returns a non-finite value.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    named = _named(params)
    report = GradCheckReport(tolerance=tol)
    if not named:
        return report

    def evaluate() -> float:
        value = f().item()
        if not np.isfinite(value):
            raise FloatingPointError("finite_diff_check: function returned a non-finite value")
        return value

    saved = {name: t.grad for name, t in named.items()}
    for t in named.values():
        t.grad = None
    with Tape():
        loss = f()
    if not np.isfinite(loss.item()):
        raise FloatingPointError("finite_diff_check: function returned a non-finite value")
    backward(loss)
    analytic = {name: (t.grad if t.grad is not None else np.zeros_like(t.data)) for name, t in named.items()}
    for name, t in named.items():
        t.grad = saved[name]

    for name, tensor in named.items():
        if not (tensor.data.flags.c_contiguous and tensor.data.flags.writeable):
            tensor.data = np.array(tensor.data, dtype=np.float64)
        flat = tensor.data.reshape(-1)
        grads = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + step
            plus = evaluate()
            flat[i] = original - step
            minus = evaluate()
            flat[i] = original
            numeric = (plus - minus) / (2.0 * step)
            denom = max(abs(grads[i]), abs(numeric), floor)
            worst = max(worst, abs(grads[i] - numeric) / denom)
        report.per_parameter[name] = worst
        report.max_relative_error = max(report.max_relative_error, worst)
    return report
