import numpy as np
import pytest

from core import functional as F
from core.exceptions import ContractError, DimensionError, NumericError
from core.gradcheck import finite_diff_check
from core.parameters import ParameterStore
from core.tensor import DiffTensor, Graph, backward, no_grad


def leaf(values):
    return DiffTensor(np.asarray(values, dtype=np.float64), requires_grad=True)


def numeric_grad(fn, x, h=1e-5):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        plus = fn(x)
        x[idx] = orig - h
        minus = fn(x)
        x[idx] = orig
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def check_op(op, *shapes, seed=0, tol=1e-6):
    """Compare backward() of sum(op(*inputs) * w) against central differences."""
    rng = np.random.default_rng(seed)
    arrays = [rng.standard_normal(shape) for shape in shapes]
    out_shape = op(*[DiffTensor(a) for a in arrays]).shape
    weights = rng.standard_normal(out_shape)

    tensors = [leaf(a.copy()) for a in arrays]
    F.sum(F.mul(op(*tensors), weights)).backward()
    for i, array in enumerate(arrays):
        def scalar(x, i=i):
            inputs = [DiffTensor(x if j == i else arrays[j]) for j in range(len(arrays))]
            return float(np.sum(op(*inputs).data * weights))

        expected = numeric_grad(scalar, array.copy())
        np.testing.assert_allclose(tensors[i].grad, expected, rtol=tol, atol=tol)


class TestMatmul:
    def test_identity(self):
        out = F.matmul(DiffTensor([[1.0, 0.0], [0.0, 1.0]]), DiffTensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [4.0]])

    def test_hand_product(self):
        assert F.matmul(DiffTensor([[1.0, 2.0]]), DiffTensor([[3.0], [4.0]])).data.tolist() == [[11.0]]

    def test_inner_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 2\)"):
            F.matmul(DiffTensor(np.ones((2, 3))), DiffTensor(np.ones((2, 2))))

    def test_sum_gradient_is_b_transposed(self):
        a, b = leaf(np.ones((2, 3))), DiffTensor(np.arange(12.0).reshape(3, 4))
        F.sum(F.matmul(a, b)).backward()
        np.testing.assert_allclose(a.grad, np.tile(b.data.sum(axis=1), (2, 1)))

    def test_batched_gradients(self):
        check_op(F.matmul, (2, 3, 4), (4, 5))
        check_op(F.matmul, (2, 3, 4), (2, 4, 2))


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(F.softmax(DiffTensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3)

    def test_closed_form(self):
        out = F.softmax(DiffTensor([np.log(2.0), 0.0, 0.0])).data
        np.testing.assert_allclose(out, [0.5, 0.25, 0.25])

    def test_stable_for_large_inputs(self):
        out = F.softmax(DiffTensor([1000.0, 0.0])).data
        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0)

    def test_nan_rejected(self):
        with pytest.raises(NumericError):
            F.softmax(DiffTensor([np.nan, 1.0]))

    def test_rows_sum_to_one(self, rng):
        out = F.softmax(DiffTensor(rng.standard_normal((5, 7)) * 30), axis=-1).data
        np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)

    def test_gradient(self):
        check_op(lambda x: F.softmax(x, axis=-1), (3, 4))
        check_op(lambda x: F.softmax(x, axis=0), (3, 4))
        check_op(lambda x: F.log_softmax(x, axis=-1), (2, 5))


class TestGelu:
    def test_values(self):
        out = F.gelu(DiffTensor([0.0, 10.0, -10.0])).data
        assert out[0] == 0.0
        assert out[1] == pytest.approx(10.0)
        assert out[2] == pytest.approx(0.0, abs=1e-12)

    def test_gradient_at_zero(self):
        x = leaf([0.0])
        F.sum(F.gelu(x)).backward()
        assert x.grad[0] == pytest.approx(0.5)

    def test_gradient(self):
        check_op(F.gelu, (4, 3))


class TestLayerNorm:
    def test_constant_slice_maps_to_bias(self):
        out = F.layer_norm(DiffTensor(np.full(4, 3.0)), DiffTensor(np.ones(4)), DiffTensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, 0.0)

    def test_two_values(self):
        out = F.layer_norm(DiffTensor([1.0, 3.0]), DiffTensor(np.ones(2)), DiffTensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-9)

    def test_moments(self, rng):
        x = rng.standard_normal((6, 16)) * 5 + 2
        out = F.layer_norm(DiffTensor(x), DiffTensor(np.ones(16)), DiffTensor(np.zeros(16))).data
        assert np.all(np.abs(out.mean(axis=-1)) <= 1e-7)
        np.testing.assert_allclose(out.var(axis=-1), 1.0, atol=1e-4)

    def test_gradient(self):
        check_op(lambda x, g, b: F.layer_norm(x, g, b), (3, 5), (5,), (5,))
        check_op(lambda x, g, b: F.layer_norm(x, g, b, axis=0), (4, 2), (4,), (4,))


class TestConv1x1:
    def test_identity(self, rng):
        x = rng.standard_normal((2, 3, 4, 4))
        out = F.conv1x1(DiffTensor(x), DiffTensor(np.eye(3)), DiffTensor(np.zeros(3)))
        np.testing.assert_allclose(out.data, x)

    def test_channel_sum(self, rng):
        x = rng.standard_normal((2, 3, 3))
        out = F.conv1x1(DiffTensor(x), DiffTensor([[1.0, 1.0]]))
        np.testing.assert_allclose(out.data[0], x[0] + x[1])

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            F.conv1x1(DiffTensor(np.ones((2, 3, 3))), DiffTensor(np.ones((1, 3))))

    def test_gradient(self):
        check_op(F.conv1x1, (2, 3, 2, 2), (4, 3), (4,))


class TestStructuralOps:
    @pytest.mark.parametrize(
        "op, shapes",
        [
            (F.add, [(2, 3, 4), (3, 4)]),
            (F.sub, [(3, 4), (2, 3, 4)]),
            (F.mul, [(2, 3), (3,)]),
            (lambda a, b: F.div(a, F.add(F.mul(b, b), 1.0)), [(2, 3), (2, 3)]),
            (lambda a: F.exp(a), [(3, 2)]),
            (lambda a: F.log(F.add(F.mul(a, a), 0.5)), [(3, 2)]),
            (lambda a: F.transpose(a, (2, 0, 1)), [(2, 3, 4)]),
            (lambda a: F.swapaxes(a, 0, 2), [(2, 3, 4)]),
            (lambda a: F.reshape(a, (6, 2)), [(3, 4)]),
            (lambda a: F.narrow(a, 1, 1, 3), [(2, 4, 2)]),
            (lambda a: a[:, 1], [(3, 4)]),
            (lambda a, b: F.concat([a, b], axis=1), [(2, 3), (2, 1)]),
            (lambda a: F.broadcast_to(a, (4, 2, 3)), [(2, 3)]),
            (lambda a: F.sum(a, axis=1), [(2, 3, 4)]),
            (lambda a: F.mean(a, axis=(0, 2)), [(2, 3, 4)]),
        ],
    )
    def test_gradients(self, op, shapes):
        check_op(op, *shapes)

    def test_broadcast_beyond_leading_axes_rejected(self):
        with pytest.raises(DimensionError):
            F.add(DiffTensor(np.ones((3, 1))), DiffTensor(np.ones((3, 4))))


class TestBackward:
    def test_sum_gives_ones(self):
        x = leaf(np.arange(4.0))
        F.sum(x).backward()
        np.testing.assert_array_equal(x.grad, np.ones(4))

    def test_square(self):
        x = leaf([1.0, -2.0, 3.0])
        F.sum(F.mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, 2 * x.data)

    def test_non_scalar_rejected(self):
        with pytest.raises(ContractError):
            backward(F.mul(leaf([1.0, 2.0]), 2.0))

    def test_accumulates_until_zeroed(self):
        x = leaf([1.0, 2.0])
        F.sum(x).backward()
        F.sum(x).backward()
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])
        x.zero_grad()
        np.testing.assert_array_equal(x.grad, [0.0, 0.0])

    def test_unused_leaf_keeps_zero_grad(self):
        x, unused = leaf([1.0]), leaf([5.0])
        F.sum(x).backward()
        np.testing.assert_array_equal(unused.grad, [0.0])

    def test_repeated_backward_is_bit_identical(self, rng):
        w = leaf(rng.standard_normal((4, 4)))
        x = DiffTensor(rng.standard_normal((3, 4)))
        loss = F.sum(F.gelu(F.matmul(x, w)))
        loss.backward()
        first = w.grad.copy()
        w.zero_grad()
        loss.backward()
        np.testing.assert_array_equal(w.grad, first)

    def test_graph_is_topological(self):
        x = leaf([1.0, 2.0])
        y = F.mul(x, x)
        z = F.sum(F.add(y, x))
        graph = Graph.trace(z)
        ids = [node.node_id for node in graph.nodes]
        assert ids == sorted(ids)
        assert graph.leaves() == [x]
        for record in graph.records:
            assert all(i < record.node.node_id for i in record.inputs)

    def test_no_grad_builds_no_graph(self):
        x = leaf([1.0])
        with no_grad():
            y = F.mul(x, 3.0)
        assert not y.requires_grad


class TestFiniteDiffCheck:
    def test_quadratic(self, rng):
        store = ParameterStore()
        store.add("w", rng.standard_normal((3, 2)))
        target = rng.standard_normal((3, 2))

        def f(params):
            diff = F.sub(params["w"], target)
            return F.sum(F.mul(diff, diff))

        report = finite_diff_check(f, store, h=1e-5, tol=1e-8)
        assert report.passed
        assert report.max_error < 1e-8

    def test_frozen_parameter_is_skipped(self, rng):
        store = ParameterStore()
        store.add("a", rng.standard_normal(3))
        store.add("b", rng.standard_normal(3), tunable=False)

        def f(params):
            return F.sum(F.mul(params["a"], params["b"]))

        report = finite_diff_check(f, store)
        assert report.skipped == ["b"]
        assert store["b"].grad is None
        assert report.passed
