"""Tests for the autodiff tensor primitives, tape and gradient checker."""

import math

import numpy as np
import pytest

from lesets.tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    affine,
    backward,
    concat,
    elementwise_mul,
    finite_diff_check,
    gather_rows,
    l2_norm,
    matmul,
    mean_pool,
    mse_loss,
    reshape,
    scale,
    scatter_add_rows,
    segment_softmax,
    sigmoid,
    softmax,
    softplus,
    sub,
    tanh,
    transpose,
    weighted_sum,
)


def _param(rng, shape, name="p"):
    return Tensor(rng.normal(size=shape), requires_grad=True, name=name)


class TestPrimitiveValues:
    """Forward values of the primitives."""

    def test_analytic_values(self):
        assert tanh(Tensor(0.0)).item() == 0.0
        assert softplus(Tensor(0.0)).item() == pytest.approx(math.log(2.0), abs=1e-15)
        assert sigmoid(Tensor(0.0)).item() == 0.5

    def test_softmax_symmetric(self):
        out = softmax(Tensor([2.0, 2.0, 2.0]))
        np.testing.assert_allclose(out.data, [1 / 3] * 3, atol=1e-15)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        out = softmax(Tensor(rng.normal(scale=10.0, size=(6, 5)))).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)

    def test_softmax_empty_row(self):
        with pytest.raises(ValueError, match="softmax over empty row"):
            softmax(Tensor(np.zeros((2, 0))))

    def test_mse_identity(self):
        assert mse_loss(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item() == 0.0

    def test_mean_pool_columns(self):
        out = mean_pool(Tensor([[1.0, 2.0], [3.0, 6.0]]))
        np.testing.assert_allclose(out.data, [2.0, 4.0])

    def test_weighted_sum_in_convex_hull(self):
        rng = np.random.default_rng(1)
        rows = rng.normal(size=(5, 4))
        weights = rng.dirichlet(np.ones(5))
        out = weighted_sum(Tensor(rows), Tensor(weights)).data
        assert np.all(out >= rows.min(axis=0) - 1e-12)
        assert np.all(out <= rows.max(axis=0) + 1e-12)

    def test_softplus_large_input_is_finite(self):
        out = softplus(Tensor([800.0, -800.0])).data
        np.testing.assert_allclose(out, [800.0, 0.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))
        with pytest.raises(ValueError, match="shape mismatch"):
            add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))
        with pytest.raises(ValueError, match="shape mismatch"):
            mse_loss(Tensor([1.0]), Tensor([1.0, 2.0]))

    def test_rejects_three_dimensional(self):
        with pytest.raises(ValueError, match="at most 2-dimensional"):
            Tensor(np.zeros((1, 1, 1)))


class TestIndexPrimitives:
    """Tests for gather_rows(), scatter_add_rows() and segment_softmax()."""

    def test_gather_repeats_rows(self):
        out = gather_rows(Tensor([[1.0, 2.0], [3.0, 4.0]]), np.array([1, 1, 0]))
        np.testing.assert_array_equal(out.data, [[3.0, 4.0], [3.0, 4.0], [1.0, 2.0]])

    def test_gather_backward_accumulates_repeats(self):
        a = Tensor(np.ones((3, 2)), requires_grad=True)
        with Tape():
            loss = mse_loss(gather_rows(a, np.array([2, 2, 0])), np.zeros((3, 2)))
        backward(loss)
        np.testing.assert_allclose(a.grad[:, 0], [1 / 3, 0.0, 2 / 3])

    def test_scatter_sums_into_rows(self):
        out = scatter_add_rows(Tensor([[1.0], [2.0], [4.0]]), np.array([0, 2, 0]), 3)
        np.testing.assert_array_equal(out.data, [[5.0], [0.0], [2.0]])

    def test_scatter_matches_dense_product(self):
        rng = np.random.default_rng(7)
        rows = rng.normal(size=(9, 3))
        index = rng.integers(0, 4, size=9)
        dense = np.zeros((4, 9))
        dense[index, np.arange(9)] = 1.0
        out = scatter_add_rows(Tensor(rows), index, 4)
        np.testing.assert_allclose(out.data, dense @ rows, atol=1e-14)

    def test_index_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            gather_rows(Tensor(np.ones((2, 2))), np.array([2]))
        with pytest.raises(ValueError, match="out of range"):
            scatter_add_rows(Tensor(np.ones((2, 2))), np.array([0, 3]), 3)

    def test_float_index_rejected(self):
        with pytest.raises(ValueError, match="integer index"):
            gather_rows(Tensor(np.ones((2, 2))), np.array([0.0]))

    def test_scatter_row_count_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch in scatter_add_rows"):
            scatter_add_rows(Tensor(np.ones((3, 2))), np.array([0, 1]), 2)

    def test_segment_softmax_matches_per_segment_softmax(self):
        rng = np.random.default_rng(3)
        scores = rng.normal(scale=20.0, size=10)
        segments = np.array([0, 0, 2, 2, 2, 0, 1, 2, 0, 0])
        out = segment_softmax(Tensor(scores), segments, 4).data
        for s in range(3):
            np.testing.assert_allclose(out[segments == s], softmax(Tensor(scores[segments == s])).data, atol=1e-15)

    def test_segment_softmax_singleton_is_one(self):
        out = segment_softmax(Tensor([-300.0, 5.0]), np.array([0, 1]), 2).data
        np.testing.assert_array_equal(out, [1.0, 1.0])

    def test_segment_softmax_needs_vector(self):
        with pytest.raises(ValueError, match="needs a vector"):
            segment_softmax(Tensor(np.ones((2, 2))), np.array([0, 1]), 2)


class TestBackward:
    """Tests for tape recording and backward()."""

    def test_square(self):
        x = Tensor(3.0, requires_grad=True)
        with Tape():
            loss = elementwise_mul(x, x)
        backward(loss)
        assert x.grad == pytest.approx(6.0)

    def test_linear_mse_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        w = _param(rng, (2, 2), "W")
        x = rng.normal(size=2)
        y = rng.normal(size=2)
        report = finite_diff_check(lambda: mse_loss(matmul(w, x), y), {"W": w}, step=1e-5)
        assert report.max_relative_error < 1e-6

    def test_constants_untouched(self):
        rng = np.random.default_rng(3)
        w = _param(rng, (2, 2))
        x = Tensor(rng.normal(size=2))
        with Tape():
            loss = mse_loss(matmul(w, x), np.zeros(2))
        backward(loss)
        assert x.grad is None
        assert w.grad is not None

    def test_gradients_accumulate(self):
        x = Tensor(2.0, requires_grad=True)
        for _ in range(2):
            with Tape():
                loss = elementwise_mul(x, x)
            backward(loss)
        assert x.grad == pytest.approx(8.0)

    def test_shared_input_sums_paths(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape():
            y = add(tanh(x), scale(x, 3.0))
            loss = mse_loss(y, np.zeros(2))
        backward(loss)
        y_val = np.tanh(x.data) + 3 * x.data
        expected = y_val * (1 - np.tanh(x.data) ** 2 + 3.0)
        np.testing.assert_allclose(x.grad, expected, rtol=1e-12)

    def test_non_scalar_loss(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape():
            y = tanh(x)
        with pytest.raises(ValueError, match="scalar"):
            backward(y)

    def test_unrecorded_loss(self):
        x = Tensor(1.0, requires_grad=True)
        loss = tanh(x)
        with pytest.raises(ValueError, match="not recorded"):
            backward(loss)

    def test_no_tape_means_inference(self):
        x = Tensor([1.0], requires_grad=True)
        assert active_tape() is None
        out = tanh(x)
        assert out.requires_grad is False

    def test_tape_cleared_after_backward(self):
        x = Tensor(1.0, requires_grad=True)
        with Tape() as tape:
            loss = elementwise_mul(x, x)
            assert len(tape) == 1
        backward(loss)
        assert len(tape) == 0

    def test_non_finite_value_raises(self):
        x = Tensor([1e308], requires_grad=True)
        with pytest.raises(FloatingPointError):
            with Tape():
                scale(x, 10.0)

    def test_nested_tape_restores_outer(self):
        with Tape() as outer:
            with Tape() as inner:
                assert active_tape() is inner
            assert active_tape() is outer
        assert active_tape() is None


def _unary_cases(rng):
    rows, cols = (int(n) for n in rng.integers(1, 6, size=2))
    m = rng.normal(size=(rows, cols))
    v = rng.normal(size=cols)
    picks = rng.integers(0, rows, size=int(rng.integers(1, 8)))
    out_rows = int(rng.integers(1, 5))
    n_scores = int(rng.integers(1, 9))
    n_segments = int(rng.integers(1, 4))
    return {
        "tanh": (lambda a: tanh(a), m),
        "sigmoid": (lambda a: sigmoid(a), m),
        "softplus": (lambda a: softplus(a), m),
        "softmax": (lambda a: softmax(a), m),
        "mean_pool": (lambda a: mean_pool(a), m),
        "transpose": (lambda a: transpose(a), m),
        "reshape": (lambda a: reshape(a, (cols, rows)), m),
        "scale": (lambda a: scale(a, -1.7), v),
        "l2_norm": (lambda a: l2_norm(a), v),
        "gather_rows": (lambda a: gather_rows(a, picks), m),
        "scatter_add_rows": (
            lambda a: scatter_add_rows(a, np.arange(rows) % out_rows, out_rows),
            m,
        ),
        "segment_softmax": (
            lambda a: segment_softmax(a, np.arange(n_scores) % n_segments, n_segments),
            rng.normal(scale=3.0, size=n_scores),
        ),
    }


UNARY_CASES = [
    "tanh",
    "sigmoid",
    "softplus",
    "softmax",
    "mean_pool",
    "transpose",
    "reshape",
    "scale",
    "l2_norm",
    "gather_rows",
    "scatter_add_rows",
    "segment_softmax",
]


@pytest.mark.parametrize("case", UNARY_CASES)
@pytest.mark.parametrize("seed", range(100))
def test_unary_primitive_gradients(case, seed):
    rng = np.random.default_rng(seed)
    fn, value = _unary_cases(rng)[case]
    a = Tensor(value, requires_grad=True, name="a")
    target = rng.normal(size=fn(Tensor(value)).shape)
    report = finite_diff_check(lambda: mse_loss(fn(a), target), [a], step=1e-5)
    assert report.max_relative_error < 1e-6


def _binary_shapes(rng):
    r, c, k = (int(n) for n in rng.integers(1, 6, size=3))
    return {
        "matmul": ((r, c), (c, k)),
        "matvec": ((r, c), (c,)),
        "vecmat": ((c,), (c, k)),
        "add_bias": ((r, c), (c,)),
        "sub": ((r, c), (r, c)),
        "mul": ((r, c), (r, c)),
        "concat_rows": ((r, c), (k, c)),
        "concat_cols": ((r, c), (r, k)),
        "affine": ((r, c), (c, k)),
        "weighted_sum": ((r, c), (r,)),
    }


BINARY_OPS = {
    "matmul": matmul,
    "matvec": matmul,
    "vecmat": matmul,
    "add_bias": add,
    "sub": sub,
    "mul": elementwise_mul,
    "concat_rows": lambda a, b: concat([a, b], axis=0),
    "concat_cols": lambda a, b: concat([a, b], axis=1),
    "affine": lambda a, b: affine(a, b, np.ones(b.shape[1])),
    "weighted_sum": weighted_sum,
}


@pytest.mark.parametrize("case", list(BINARY_OPS))
@pytest.mark.parametrize("seed", range(100))
def test_binary_primitive_gradients(case, seed):
    rng = np.random.default_rng(1000 + seed)
    shape_a, shape_b = _binary_shapes(rng)[case]
    a = _param(rng, shape_a, "a")
    b = _param(rng, shape_b, "b")
    op = BINARY_OPS[case]
    target = rng.normal(size=op(Tensor(a.data), Tensor(b.data)).shape)
    report = finite_diff_check(lambda: mse_loss(op(a, b), target), {"a": a, "b": b}, step=1e-5)
    assert report.max_relative_error < 1e-6


class TestFiniteDiffCheck:
    """Tests for finite_diff_check()."""

    def test_quadratic_form(self):
        rng = np.random.default_rng(4)
        A = rng.normal(size=(3, 3))
        v = _param(rng, (3,), "v")
        report = finite_diff_check(lambda: reshape(matmul(matmul(v, A), reshape(v, (3, 1))), ()), [v], tol=1e-8)
        assert report.max_relative_error < 1e-8
        assert report.passed

    def test_zero_parameters(self):
        report = finite_diff_check(lambda: Tensor(1.0), {})
        assert report.per_parameter == {}
        assert report.max_relative_error == 0.0

    def test_non_finite_output(self):
        x = Tensor(1.0, requires_grad=True)
        with pytest.raises(FloatingPointError):
            finite_diff_check(lambda: Tensor(np.nan), [x])

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError, match="step"):
            finite_diff_check(lambda: Tensor(1.0), {}, step=0.0)

    def test_restores_existing_grads(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        x.grad = np.array([5.0, 5.0])
        finite_diff_check(lambda: mse_loss(x, np.zeros(2)), [x])
        np.testing.assert_array_equal(x.grad, [5.0, 5.0])
