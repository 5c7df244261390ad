import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from htnet import tensor as T
from htnet.gradcheck import finite_difference_check
from htnet.tensor import ShapeError, Tape, Tensor, backpropagate


def grad_of(f, *xs):
    for x in xs:
        x.requires_grad = True
        x.grad = None
    with Tape() as tape:
        out = f()
    backpropagate(tape, out, xs)
    return [x.grad for x in xs]


class TestTape:
    def test_no_tape_records_nothing(self):
        a = Tensor(np.ones(3), requires_grad=True)
        out = a * a
        assert not out.requires_grad

    def test_records_only_inside_block(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            T.sum(a * a)
        n = len(tape)
        a * a
        assert len(tape) == n == 2

    def test_reused_input_accumulates(self):
        a = Tensor(np.array([1.0, -2.0, 3.0]))
        (g,) = grad_of(lambda: T.sum(a * a + a), a)
        np.testing.assert_allclose(g, 2 * a.data + 1)

    def test_unreached_leaf_gets_zero(self):
        a, b = Tensor(np.ones(2)), Tensor(np.ones(4))
        ga, gb = grad_of(lambda: T.sum(a), a, b)
        np.testing.assert_array_equal(gb, np.zeros(4))
        np.testing.assert_array_equal(ga, np.ones(2))

    def test_non_scalar_loss_rejected(self):
        a = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            out = a * 2.0
        with pytest.raises(ShapeError):
            backpropagate(tape, out)

    def test_detach_blocks_gradient(self):
        a = Tensor(np.array([2.0]))
        (g,) = grad_of(lambda: T.sum(a * T.detach(a)), a)
        np.testing.assert_allclose(g, [2.0])


class TestPrimitiveGradients:
    def test_matmul_closed_form(self, rng):
        a, b = Tensor(rng.normal(size=(3, 4))), Tensor(rng.normal(size=(4, 5)))
        w = rng.normal(size=(3, 5))
        ga, gb = grad_of(lambda: T.sum((a @ b) * w), a, b)
        np.testing.assert_allclose(ga, w @ b.data.T, atol=1e-12)
        np.testing.assert_allclose(gb, a.data.T @ w, atol=1e-12)

    def test_batched_matmul_with_shared_weight(self, rng):
        a, b = Tensor(rng.normal(size=(2, 3, 4))), Tensor(rng.normal(size=(4, 5)))
        w = rng.normal(size=(2, 3, 5))
        ga, gb = grad_of(lambda: T.sum((a @ b) * w), a, b)
        np.testing.assert_allclose(ga, np.einsum("bij,kj->bik", w, b.data), atol=1e-12)
        np.testing.assert_allclose(gb, np.einsum("bik,bij->kj", a.data, w), atol=1e-12)

    def test_broadcast_add_sums_over_expanded_axes(self, rng):
        a, b = Tensor(rng.normal(size=(4, 3))), Tensor(rng.normal(size=(3,)))
        ga, gb = grad_of(lambda: T.sum(a + b), a, b)
        np.testing.assert_array_equal(ga, np.ones((4, 3)))
        np.testing.assert_array_equal(gb, np.full(3, 4.0))

    def test_softmax_jacobian(self, rng):
        x = Tensor(rng.normal(size=5))
        w = rng.normal(size=5)
        (g,) = grad_of(lambda: T.sum(T.softmax(x) * w), x)
        s = np.exp(x.data) / np.exp(x.data).sum()
        jac = np.diag(s) - np.outer(s, s)
        np.testing.assert_allclose(g, jac @ w, atol=1e-12)

    def test_sigmoid_derivative(self, rng):
        x = Tensor(rng.normal(size=6))
        (g,) = grad_of(lambda: T.sum(T.sigmoid(x)), x)
        s = 1 / (1 + np.exp(-x.data))
        np.testing.assert_allclose(g, s * (1 - s), atol=1e-14)

    def test_sigmoid_extreme_inputs_are_finite(self):
        out = T.sigmoid(Tensor(np.array([-800.0, 800.0])))
        np.testing.assert_array_equal(out.data, [0.0, 1.0])

    def test_index_add_matches_loop(self, rng):
        base = rng.normal(size=(4, 3))
        src = rng.normal(size=(6, 3))
        idx = np.array([0, 2, 2, 3, 0, 2])
        out = T.index_add(Tensor(base), idx, Tensor(src)).data
        expect = base.copy()
        for k, i in enumerate(idx):
            expect[i] += src[k]
        np.testing.assert_allclose(out, expect, atol=1e-14)

    def test_index_select_repeat_gradient(self, rng):
        a = Tensor(rng.normal(size=(4, 2)))
        (g,) = grad_of(lambda: T.sum(T.index_select(a, [1, 1, 3, -1])), a)
        np.testing.assert_array_equal(g[:, 0], [0, 2, 0, 2])

    def test_conv1d_matches_direct_sum(self, rng):
        x = rng.normal(size=(2, 5, 3))
        w = rng.normal(size=(3, 3, 4))
        out = T.conv1d(Tensor(x), Tensor(w)).data
        xp = np.pad(x, ((0, 0), (1, 1), (0, 0)))
        expect = np.zeros((2, 5, 4))
        for b in range(2):
            for t in range(5):
                for k in range(3):
                    expect[b, t] += xp[b, t + k] @ w[k]
        np.testing.assert_allclose(out, expect, atol=1e-12)

    def test_max_pool_ceil_mode(self):
        x = Tensor(np.arange(5.0).reshape(1, 5, 1))
        np.testing.assert_array_equal(T.max_pool1d(x).data.ravel(), [1.0, 3.0, 4.0])

    def test_max_pool_tie_routes_to_first(self):
        x = Tensor(np.array([[[1.0], [1.0]]]))
        (g,) = grad_of(lambda: T.sum(T.max_pool1d(x)), x)
        np.testing.assert_array_equal(g.ravel(), [1.0, 0.0])

    def test_smooth_l1_values(self):
        e = Tensor(np.array([[0.6, 0.0], [3.0, 4.0]]))
        np.testing.assert_allclose(T.smooth_l1(e).data, [0.18, 4.5])

    @pytest.mark.parametrize(
        "op",
        [
            lambda x: T.layer_norm(x, Tensor(np.linspace(0.5, 1.5, 4)), Tensor(np.zeros(4))),
            lambda x: T.elu(x),
            lambda x: T.relu(x),
            lambda x: T.log(T.sigmoid(x)),
            lambda x: T.mean(x, axis=0),
            lambda x: T.max(x, axis=-1),
            lambda x: T.transpose(x),
            lambda x: T.reshape(x, (2, 6)),
        ],
    )
    def test_finite_differences(self, op, rng):
        x = Tensor(rng.normal(size=(3, 4)))
        w = Tensor(rng.normal(size=op(x).shape))
        res = finite_difference_check(lambda: T.sum(op(x) * w), x, 1e-6, None)
        assert res.passed(1e-6), res


class TestShapeErrors:
    def test_matmul_inner_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\) @ \(4, 5\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_broadcast_mismatch(self):
        with pytest.raises(ShapeError):
            T.add(Tensor(np.ones(3)), Tensor(np.ones(4)))

    def test_index_out_of_range(self):
        with pytest.raises(ShapeError):
            T.index_select(Tensor(np.ones((3, 2))), [3])

    def test_even_conv_kernel(self):
        with pytest.raises(ShapeError):
            T.conv1d(Tensor(np.ones((1, 4, 2))), Tensor(np.ones((2, 2, 2))))


class TestProperties:
    @settings(max_examples=40, deadline=None)
    @given(
        rows=st.integers(1, 4),
        cols=st.integers(1, 4),
        seed=st.integers(0, 2**16),
        row_bcast=st.booleans(),
    )
    def test_mul_broadcast_gradient_is_reduced_product(self, rows, cols, seed, row_bcast):
        rng = np.random.default_rng(seed)
        a = Tensor(rng.normal(size=(rows, cols)))
        b = Tensor(rng.normal(size=(1, cols) if row_bcast else (rows, 1)))
        ga, gb = grad_of(lambda: T.sum(a * b), a, b)
        np.testing.assert_allclose(ga, np.broadcast_to(b.data, (rows, cols)))
        axis = 0 if row_bcast else 1
        np.testing.assert_allclose(gb, a.data.sum(axis=axis, keepdims=True), atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(1, 8), m=st.integers(1, 8), seed=st.integers(0, 2**16))
    def test_scatter_adjoint_of_gather(self, n, m, seed):
        # <gather(x), y> == <x, scatter(y)> for any index
        rng = np.random.default_rng(seed)
        idx = rng.integers(0, n, size=m)
        x, y = rng.normal(size=(n, 2)), rng.normal(size=(m, 2))
        lhs = float((x[idx] * y).sum())
        rhs = float((x * T._scatter_rows(idx, y, n)).sum())
        assert lhs == pytest.approx(rhs, abs=1e-12)
