import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reviewqa import autodiff as ad
from reviewqa.autodiff import AdamState, Graph, Tensor, adam_step, backward
from reviewqa.errors import InternalError, NumericError, ParameterError, ShapeError, UsageError


def finite_difference(loss_fn, param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of loss_fn() with respect to param."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = loss_fn()
        flat[i] = original - h
        down = loss_fn()
        flat[i] = original
        flat_grad[i] = (up - down) / (2 * h)
    return grad


class TestTensor:
    def test_grad_starts_zero(self):
        t = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
        assert t.grad.shape == t.data.shape
        assert not t.grad.any()

    def test_size_invariant(self):
        t = Tensor(np.arange(6.0).reshape(2, 3))
        assert math.prod(t.shape) == t.data.size == t.grad.size

    def test_zero_grad(self):
        t = ad.parameter([1.0, 2.0])
        t.grad[:] = 5.0
        t.zero_grad()
        assert not t.grad.any()


class TestMatmul:
    def test_identity(self):
        eye = Tensor([[1.0, 0.0], [0.0, 1.0]])
        m = Tensor([[3.0, 4.0], [5.0, 6.0]])
        assert np.array_equal(ad.matmul(eye, m).data, m.data)

    def test_dot_product(self):
        a = Tensor([[1.0, 2.0]])
        b = Tensor([[3.0], [4.0]])
        assert np.array_equal(ad.matmul(a, b).data, [[11.0]])

    def test_backward_product_rule(self):
        a = ad.parameter([[1.0, 2.0]])
        b = ad.parameter([[3.0], [4.0]])
        with Graph() as g:
            out = ad.matmul(a, b)
        g.backward(out)
        assert np.array_equal(a.grad, [[3.0, 4.0]])
        assert np.array_equal(b.grad, [[1.0], [2.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\[2, 2\].*\[3, 2\]"):
            ad.matmul(Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2))))


class TestElementwise:
    def test_tanh_zero(self):
        assert np.array_equal(ad.tanh(Tensor([0.0, 0.0])).data, [0.0, 0.0])

    def test_sigmoid_zero(self):
        assert np.array_equal(ad.sigmoid(Tensor([0.0])).data, [0.5])

    def test_sigmoid_extreme_values_stay_finite(self):
        out = ad.sigmoid(Tensor([-1000.0, 1000.0]))
        assert np.all(np.isfinite(out.data))
        assert out.data[0] == pytest.approx(0.0, abs=1e-12)
        assert out.data[1] == pytest.approx(1.0, abs=1e-12)

    def test_mul_backward(self):
        a = ad.parameter([2.0])
        b = ad.parameter([3.0])
        with Graph() as g:
            out = ad.mul(a, b)
        g.backward(out)
        assert np.array_equal(a.grad, [3.0])
        assert np.array_equal(b.grad, [2.0])

    def test_add_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.add(Tensor([1.0]), Tensor([1.0, 2.0]))

    def test_tanh_backward_rule(self):
        x = ad.parameter([0.5])
        with Graph() as g:
            out = ad.sum_all(ad.tanh(x))
        g.backward(out)
        assert x.grad[0] == pytest.approx(1.0 - math.tanh(0.5) ** 2, rel=1e-12)

    def test_sigmoid_backward_rule(self):
        x = ad.parameter([0.5])
        with Graph() as g:
            out = ad.sum_all(ad.sigmoid(x))
        g.backward(out)
        s = 1.0 / (1.0 + math.exp(-0.5))
        assert x.grad[0] == pytest.approx(s * (1.0 - s), rel=1e-12)


class TestConcat:
    def test_vectors(self):
        assert np.array_equal(ad.concat(Tensor([1.0, 2.0]), Tensor([3.0])).data, [1.0, 2.0, 3.0])

    def test_empty_left(self):
        assert np.array_equal(ad.concat(Tensor(np.zeros(0)), Tensor([5.0])).data, [5.0])

    def test_backward_splits(self):
        a = ad.parameter([1.0, 2.0])
        b = ad.parameter([3.0])
        with Graph() as g:
            joined = ad.concat(a, b)
            loss = ad.sum_all(ad.mul(joined, Tensor([10.0, 20.0, 30.0])))
        g.backward(loss)
        assert np.array_equal(a.grad, [10.0, 20.0])
        assert np.array_equal(b.grad, [30.0])

    def test_rank_mismatch(self):
        with pytest.raises(ShapeError):
            ad.concat(Tensor([1.0]), Tensor([[1.0]]))

    def test_matrix_feature_axis(self):
        a = Tensor([[1.0], [2.0]])
        b = Tensor([[3.0, 4.0], [5.0, 6.0]])
        assert np.array_equal(ad.concat(a, b).data, [[1.0, 3.0, 4.0], [2.0, 5.0, 6.0]])


class TestGradReverse:
    def test_forward_is_identity(self):
        x = Tensor([1.5, -2.0])
        out = ad.grad_reverse(x, 1.0)
        assert np.array_equal(out.data, x.data)

    def test_backward_negates(self):
        x = ad.parameter([0.3, -0.1])
        with Graph() as g:
            loss = ad.sum_all(ad.grad_reverse(x, 1.0))
        g.backward(loss)
        assert np.allclose(x.grad, [-1.0, -1.0])

    def test_backward_upstream_values(self):
        x = ad.parameter([1.0, 1.0])
        with Graph() as g:
            out = ad.grad_reverse(x, 1.0)
            loss = ad.sum_all(ad.mul(out, Tensor([0.3, -0.1])))
        g.backward(loss)
        assert np.allclose(x.grad, [-0.3, 0.1])

    def test_scaled_negation(self):
        x = ad.parameter([1.0])
        with Graph() as g:
            loss = ad.sum_all(ad.mul(ad.grad_reverse(x, 0.5), Tensor([0.4])))
        g.backward(loss)
        assert np.allclose(x.grad, [-0.2])

    def test_negative_strength_rejected(self):
        with pytest.raises(ParameterError):
            ad.grad_reverse(Tensor([1.0]), -0.1)

    @given(st.floats(min_value=0.0, max_value=4.0), st.integers(0, 2**32 - 1))
    def test_compose_equals_scaled_plain_backward(self, strength, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        values = rng.normal(size=4)
        weights = rng.normal(size=4)

        x_plain = ad.parameter(values.copy())
        with Graph() as g:
            loss = ad.sum_all(ad.mul(x_plain, Tensor(weights)))
        g.backward(loss)

        x_rev = ad.parameter(values.copy())
        with Graph() as g:
            loss = ad.sum_all(ad.mul(ad.grad_reverse(x_rev, strength), Tensor(weights)))
        g.backward(loss)
        assert np.allclose(-x_rev.grad, strength * x_plain.grad, atol=1e-12)


class TestSoftmaxCrossEntropy:
    def test_uniform_two_class(self):
        loss = ad.softmax_cross_entropy(Tensor([0.0, 0.0]), 0)
        assert loss.data.item() == pytest.approx(math.log(2), rel=1e-12)

    def test_skewed_logits(self):
        # scalar oracle: ln(1 + e^-2)
        loss = ad.softmax_cross_entropy(Tensor([2.0, 0.0]), 0)
        assert loss.data.item() == pytest.approx(math.log(1 + math.exp(-2)), rel=1e-12)
        assert loss.data.item() == pytest.approx(0.126928, abs=1e-6)

    def test_backward_softmax_minus_onehot(self):
        logits = ad.parameter([0.0, 0.0])
        with Graph() as g:
            loss = ad.softmax_cross_entropy(logits, 0)
        g.backward(loss)
        assert np.allclose(logits.grad, [-0.5, 0.5])

    def test_label_out_of_range(self):
        with pytest.raises(ParameterError):
            ad.softmax_cross_entropy(Tensor([0.0, 0.0]), 2)

    def test_non_finite_logits(self):
        with pytest.raises(NumericError):
            ad.softmax_cross_entropy(Tensor([np.inf, 0.0]), 0)

    def test_single_class_rejected(self):
        with pytest.raises(ParameterError):
            ad.softmax_cross_entropy(Tensor([1.0]), 0)

    @given(
        st.lists(st.floats(min_value=-50, max_value=50), min_size=2, max_size=6),
        st.data(),
    )
    def test_always_non_negative(self, logits, data):
        label = data.draw(st.integers(0, len(logits) - 1))
        loss = ad.softmax_cross_entropy(Tensor(logits), label)
        assert loss.data.item() >= 0.0

    @given(st.integers(min_value=2, max_value=8))
    def test_uniform_equals_log_c(self, c):
        loss = ad.softmax_cross_entropy(Tensor(np.zeros(c)), 0)
        assert loss.data.item() == pytest.approx(math.log(c), rel=1e-12)


class TestBackward:
    def test_sum_gives_ones(self):
        p = ad.parameter(np.arange(5.0))
        with Graph() as g:
            loss = ad.sum_all(p)
        g.backward(loss)
        assert np.array_equal(p.grad, np.ones(5))

    def test_zero_multiplier_gives_zeros(self):
        p = ad.parameter([1.0, 2.0])
        with Graph() as g:
            loss = ad.sum_all(ad.mul(p, Tensor([0.0, 0.0])))
        g.backward(loss)
        assert not p.grad.any()

    def test_non_scalar_loss_rejected(self):
        p = ad.parameter([1.0, 2.0])
        with Graph() as g:
            out = ad.mul(p, p)
        with pytest.raises(UsageError):
            g.backward(out)

    def test_unrecorded_loss_rejected(self):
        with pytest.raises(UsageError):
            backward(Tensor(0.0))

    def test_module_level_backward(self):
        p = ad.parameter([2.0])
        with Graph():
            loss = ad.sum_all(ad.mul(p, p))
        backward(loss)
        assert np.allclose(p.grad, [4.0])

    def test_zero_grad_then_rebuild_is_idempotent(self):
        rng = np.random.Generator(np.random.PCG64(5))
        p = ad.parameter(rng.normal(size=(2, 3)))
        w = Tensor(rng.normal(size=(3, 2)))

        def run():
            with Graph() as g:
                loss = ad.sum_all(ad.tanh(ad.matmul(p, w)))
            g.backward(loss)
            return p.grad.copy()

        first = run()
        p.zero_grad()
        second = run()
        assert np.array_equal(first, second)


def _random_graph_loss(params, ops_plan):
    """Deterministic composite graph driven by a list of op codes."""
    x = params[0]
    for code, aux in ops_plan:
        if code == "tanh":
            x = ad.tanh(x)
        elif code == "sigmoid":
            x = ad.sigmoid(x)
        elif code == "add":
            x = ad.add(x, params[aux])
        elif code == "mul":
            x = ad.mul(x, params[aux])
        elif code == "matmul":
            x = ad.matmul(x, aux)
    return ad.sum_all(x)


class TestFiniteDifferenceProperty:
    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_graphs_match_central_differences(self, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        params = [ad.parameter(rng.normal(scale=0.5, size=(2, 3))) for _ in range(3)]
        codes = ["tanh", "sigmoid", "add", "mul", "matmul"]
        plan = []
        for _ in range(int(rng.integers(1, 5))):
            code = codes[int(rng.integers(len(codes)))]
            if code in ("add", "mul"):
                plan.append((code, int(rng.integers(1, 3))))
            elif code == "matmul":
                plan.append((code, Tensor(rng.normal(scale=0.5, size=(3, 3)))))
            else:
                plan.append((code, None))

        with Graph() as g:
            loss = _random_graph_loss(params, plan)
        g.backward(loss)

        def value():
            return _random_graph_loss(params, plan).data.item()

        for p in params:
            fd = finite_difference(value, p)
            assert np.allclose(p.grad, fd, rtol=1e-3, atol=1e-6)


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        p = ad.parameter([1.0, 2.0])
        state = AdamState([p], learning_rate=0.1)
        adam_step([p], state)
        assert np.array_equal(p.data, [1.0, 2.0])

    def test_single_hand_evaluated_step(self):
        p = ad.parameter([1.0])
        p.grad[:] = 1.0
        state = AdamState([p], learning_rate=0.1)
        adam_step([p], state)
        # bias-corrected first step moves by lr/(1 + eps)
        assert p.data[0] == pytest.approx(0.9, abs=1e-8)
        assert not p.grad.any()

    def test_identical_parameters_stay_identical(self):
        a = ad.parameter([0.3, -0.2])
        b = ad.parameter([0.3, -0.2])
        a.grad[:] = [0.5, -0.1]
        b.grad[:] = [0.5, -0.1]
        state = AdamState([a, b], learning_rate=0.01)
        for _ in range(3):
            a.grad[:] = [0.5, -0.1]
            b.grad[:] = [0.5, -0.1]
            adam_step([a, b], state)
        assert np.array_equal(a.data, b.data)

    def test_state_mismatch_rejected(self):
        p = ad.parameter([1.0])
        other = ad.parameter([1.0])
        state = AdamState([p])
        with pytest.raises(InternalError):
            adam_step([other], state)
