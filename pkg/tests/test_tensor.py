import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import autodiff_grads, finite_difference_grads, max_relative_error
from shieldlab import GradientTape, Tensor, backward
from shieldlab import tensor as T
from shieldlab.errors import DomainError, NonFiniteError, ShapeError


def test_add_values():
    out = T.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
    assert np.array_equal(out.data, [4.0, 6.0])


def test_relu_values():
    out = T.relu(Tensor([-1.0, 0.0, 2.0]))
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])


def test_mul_product_rule():
    a, b = Tensor([2.0]), Tensor([3.0])
    with GradientTape() as tape:
        out = T.sum_all(T.mul(a, b))
    backward(out, tape)
    assert np.array_equal(a.grad, [3.0])
    assert np.array_equal(b.grad, [2.0])


def test_scalar_broadcasting():
    out = T.mul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor(2.0))
    assert np.array_equal(out.data, [[2.0, 4.0], [6.0, 8.0]])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
        T.add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))


def test_row_broadcasting_rejected():
    with pytest.raises(ShapeError):
        T.add(Tensor(np.ones((2, 3))), Tensor(np.ones(3)))


def test_log_domain_error():
    with pytest.raises(DomainError, match="clamp"):
        T.log(Tensor([0.5, 0.0]))


def test_div_domain_error():
    with pytest.raises(DomainError):
        T.div(Tensor([1.0]), Tensor([-2.0]))


def test_exp_overflow_raises():
    with pytest.raises(NonFiniteError):
        T.exp(Tensor([1000.0]))


def test_clamp_default_guard_allows_log():
    out = T.log(T.clamp(Tensor([0.0, 0.5, 2.0])))
    assert np.allclose(out.data, [np.log(1e-7), np.log(0.5), 0.0])


def test_clamp_gradient_zero_outside():
    x = Tensor([0.0, 0.5, 2.0])
    with GradientTape() as tape:
        out = T.sum_all(T.clamp(x))
    backward(out, tape)
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_matmul_identity():
    out = T.matmul(Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor([[5.0], [7.0]]))
    assert np.array_equal(out.data, [[5.0], [7.0]])


def test_matmul_values():
    out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    assert np.array_equal(out.data, [[11.0]])


def test_matmul_dim_mismatch():
    with pytest.raises(ShapeError, match="inner dimensions"):
        T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_matmul_gradient_vs_finite_differences():
    rng = np.random.default_rng(7)
    a = Tensor(rng.uniform(-2, 2, (3, 4)))
    b = Tensor(rng.uniform(-2, 2, (4, 2)))
    weights = rng.uniform(-1, 1, (3, 2))

    def make_loss():
        return T.sum_all(T.mul(T.matmul(a, b), Tensor(weights)))

    analytic = autodiff_grads(make_loss, [a, b])
    numeric = finite_difference_grads(lambda: make_loss().item(), [a, b])
    assert max_relative_error(analytic, numeric) < 1e-4


def test_softmax_symmetry():
    out = T.softmax(Tensor([[0.0, 0.0]]))
    assert np.allclose(out.data, [[0.5, 0.5]], atol=1e-15)


def test_softmax_large_logits_no_overflow():
    out = T.softmax(Tensor([[1000.0, 1000.0]]))
    assert np.allclose(out.data, [[0.5, 0.5]], atol=1e-15)


def test_softmax_closed_form():
    out = T.softmax(Tensor([[np.log(1.0), np.log(2.0), np.log(3.0)]]))
    assert np.allclose(out.data, [[1 / 6, 2 / 6, 3 / 6]], atol=1e-14)


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    out = T.softmax(Tensor(rng.normal(size=(50, 7)) * 30.0))
    assert np.all(np.abs(out.data.sum(axis=1) - 1.0) < 1e-12)


def test_softmax_shift_invariance():
    rng = np.random.default_rng(1)
    logits = rng.normal(size=(20, 5))
    base = T.softmax(Tensor(logits))
    shifted = T.softmax(Tensor(logits + 123.456))
    assert np.array_equal(base.data.argmax(axis=1), shifted.data.argmax(axis=1))
    assert np.max(np.abs(base.data - shifted.data)) < 1e-12


def test_softmax_gradient_vs_finite_differences():
    rng = np.random.default_rng(3)
    logits = Tensor(rng.uniform(-2, 2, (4, 5)))
    weights = rng.uniform(-1, 1, (4, 5))

    def make_loss():
        return T.sum_all(T.mul(T.softmax(logits), Tensor(weights)))

    analytic = autodiff_grads(make_loss, [logits])
    numeric = finite_difference_grads(lambda: make_loss().item(), [logits])
    assert max_relative_error(analytic, numeric) < 1e-4


def test_backward_linear_loss():
    w = Tensor([1.0, 2.0, 3.0])
    with GradientTape() as tape:
        loss = T.sum_all(w)
    backward(loss, tape)
    assert np.array_equal(w.grad, [1.0, 1.0, 1.0])


def test_backward_quadratic_loss():
    w = Tensor([2.0, -3.0])
    with GradientTape() as tape:
        loss = T.mul(T.sum_all(T.mul(w, w)), Tensor(0.5))
    backward(loss, tape)
    assert np.array_equal(w.grad, [2.0, -3.0])


def test_backward_requires_scalar():
    w = Tensor([1.0, 2.0])
    with GradientTape() as tape:
        out = T.mul(w, w)
    with pytest.raises(ShapeError, match="scalar"):
        backward(out, tape)


def test_backward_accumulates_without_zeroing():
    w = Tensor([1.0, 2.0])
    with GradientTape() as tape:
        loss = T.sum_all(w)
    backward(loss, tape)
    backward(loss, tape)
    assert np.array_equal(w.grad, [2.0, 2.0])


def test_backward_reused_operand():
    # same tensor on both sides of mul: d(w*w)/dw = 2w
    w = Tensor([3.0])
    with GradientTape() as tape:
        loss = T.sum_all(T.mul(w, w))
    backward(loss, tape)
    assert np.array_equal(w.grad, [6.0])


def test_mlp_loss_gradient_vs_finite_differences():
    from shieldlab.models import build_classifier, cross_entropy

    model = build_classifier("mlp", (1, 4, 4), 3, seed=11, hidden=6)
    rng = np.random.default_rng(5)
    xb = rng.uniform(0, 1, (5, 1, 4, 4))
    yb = rng.integers(0, 3, 5)
    params = model.parameters()

    def make_loss():
        return cross_entropy(model.forward(xb), yb)

    analytic = autodiff_grads(make_loss, params)
    numeric = finite_difference_grads(lambda: make_loss().item(), params)
    assert max_relative_error(analytic, numeric) < 1e-4


def test_backward_deterministic():
    def run():
        rng = np.random.default_rng(42)
        a = Tensor(rng.uniform(-2, 2, (6, 4)))
        b = Tensor(rng.uniform(-2, 2, (4, 3)))
        with GradientTape() as tape:
            loss = T.sum_all(T.relu(T.matmul(a, b)))
        backward(loss, tape)
        return a.grad.copy(), b.grad.copy()

    (a1, b1), (a2, b2) = run(), run()
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)


def test_no_tape_records_nothing():
    tape = GradientTape()
    with tape:
        pass
    T.add(Tensor([1.0]), Tensor([2.0]))
    assert tape.nodes == []


def test_tape_nodes_topological():
    with GradientTape() as tape:
        a = Tensor([1.0, 2.0])
        b = T.mul(a, a)
        c = T.sum_all(b)
    ids = {id(node.output): i for i, node in enumerate(tape.nodes)}
    for i, node in enumerate(tape.nodes):
        for inp in node.inputs:
            if id(inp) in ids:
                assert ids[id(inp)] < i
    assert id(c) in ids


@given(st.lists(st.floats(-2, 2), min_size=1, max_size=8))
def test_elementwise_ops_match_numpy(values):
    arr = np.asarray(values)
    assert np.array_equal(T.relu(Tensor(arr)).data, np.maximum(arr, 0.0))
    assert np.array_equal(T.add(Tensor(arr), Tensor(arr)).data, arr + arr)
    assert np.array_equal(T.sub(Tensor(arr), Tensor(arr)).data, arr - arr)


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=6),
       st.lists(st.floats(-50, 50), min_size=2, max_size=6))
def test_softmax_row_sums_property(row_a, row_b):
    n = min(len(row_a), len(row_b))
    logits = np.asarray([row_a[:n], row_b[:n]])
    out = T.softmax(Tensor(logits))
    assert np.all(np.abs(out.data.sum(axis=1) - 1.0) < 1e-12)


def test_finite_difference_agreement_on_random_composite():
    # composite of every differentiable elementwise op on inputs in [-2, 2]
    rng = np.random.default_rng(9)
    x = Tensor(rng.uniform(0.1, 2.0, (3, 3)))
    y = Tensor(rng.uniform(-2.0, 2.0, (3, 3)))

    def make_loss():
        a = T.log(T.clamp(x, 1e-7, 10.0))
        b = T.exp(T.mul(y, Tensor(0.3)))
        c = T.div(T.relu(y), T.add(b, Tensor(1.0)))
        return T.sum_all(T.add(T.mul(a, b), T.sub(c, y)))

    analytic = autodiff_grads(make_loss, [x, y])
    numeric = finite_difference_grads(lambda: make_loss().item(), [x, y])
    assert max_relative_error(analytic, numeric) < 1e-4
