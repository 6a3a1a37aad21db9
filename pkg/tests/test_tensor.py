import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptnav import tensor as T
from promptnav.errors import ContractError, ShapeError

from oracles import finite_difference, max_rel_err, naive_matmul

FD_TOL = 1e-5


def rand(rng, *shape):
    return T.Tensor(rng.standard_normal(shape), requires_grad=True)


def check_grads(loss_fn, inputs, tol=FD_TOL):
    """loss_fn builds a scalar Tensor from `inputs` (list of Tensors)."""
    loss = loss_fn()
    T.backward(loss)
    analytic = [x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
                for x in inputs]
    numeric = finite_difference(lambda: float(loss_fn().data), [x.data for x in inputs])
    for a, n in zip(analytic, numeric):
        assert max_rel_err(a, n) < tol


def weighted_sum(out, w):
    # reduce any-shaped op output to a scalar with fixed random weights
    return T.sum_all(T.mul(out, T.Tensor(w)))


def test_matmul_matches_naive_loop_oracle():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((2, 3))
    b = rng.standard_normal((3, 4))
    got = T.matmul(T.Tensor(a), T.Tensor(b)).data
    want = naive_matmul(a, b)
    assert max_rel_err(got, want) < 1e-12


def test_softmax_uniform_on_zeros():
    y = T.softmax(T.Tensor([0.0, 0.0, 0.0])).data
    assert np.allclose(y, [1 / 3] * 3, atol=1e-15)


def test_add_identity():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 4))
    out = T.add(T.Tensor(x), T.Tensor(np.zeros_like(x))).data
    assert np.array_equal(out, x)


def test_backward_sum_of_squares():
    x = T.Tensor([1.0, 2.0, 3.0], requires_grad=True)
    loss = T.sum_all(T.mul(x, x))
    T.backward(loss)
    assert np.array_equal(x.grad, [2.0, 4.0, 6.0])


def test_backward_rejects_nonscalar():
    x = T.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ContractError):
        T.backward(T.mul(x, x))


def test_matmul_shape_error_names_dims():
    with pytest.raises(ShapeError, match="matmul"):
        T.matmul(T.Tensor(np.zeros((2, 3))), T.Tensor(np.zeros((4, 2))))


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_matmul(seed):
    rng = np.random.default_rng(seed)
    a, b = rand(rng, 3, 4), rand(rng, 4, 2)
    w = rng.standard_normal((3, 2))
    check_grads(lambda: weighted_sum(T.matmul(a, b), w), [a, b])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_matmul_batched(seed):
    rng = np.random.default_rng(seed)
    a, b = rand(rng, 2, 3, 4), rand(rng, 4, 5)
    w = rng.standard_normal((2, 3, 5))
    check_grads(lambda: weighted_sum(T.matmul(a, b), w), [a, b])


@pytest.mark.parametrize("op", [T.add, T.sub, T.mul])
@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_binary_broadcast(op, seed):
    rng = np.random.default_rng(seed)
    a, b = rand(rng, 3, 4), rand(rng, 4)
    w = rng.standard_normal((3, 4))
    check_grads(lambda: weighted_sum(op(a, b), w), [a, b])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_scale(seed):
    rng = np.random.default_rng(seed)
    a = rand(rng, 3, 4)
    w = rng.standard_normal((3, 4))
    check_grads(lambda: weighted_sum(T.scale(a, -1.7), w), [a])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_layernorm(seed):
    rng = np.random.default_rng(seed)
    x, g, b = rand(rng, 3, 5), rand(rng, 5), rand(rng, 5)
    w = rng.standard_normal((3, 5))
    check_grads(lambda: weighted_sum(T.layernorm(x, g, b), w), [x, g, b])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_softmax(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 3, 5)
    w = rng.standard_normal((3, 5))
    check_grads(lambda: weighted_sum(T.softmax(x), w), [x])


@pytest.mark.parametrize("op", [T.gelu, T.sigmoid, T.tanh])
@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_pointwise(op, seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 4, 3)
    w = rng.standard_normal((4, 3))
    check_grads(lambda: weighted_sum(op(x), w), [x])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_embedding_lookup(seed):
    rng = np.random.default_rng(seed)
    table = rand(rng, 7, 4)
    ids = rng.integers(0, 7, size=5)
    w = rng.standard_normal((5, 4))
    check_grads(lambda: weighted_sum(T.embedding_lookup(table, ids), w), [table])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_concat_and_slice(seed):
    rng = np.random.default_rng(seed)
    a, b, c = rand(rng, 2, 4), rand(rng, 0, 4), rand(rng, 3, 4)
    w = rng.standard_normal((3, 4))

    def loss():
        cat = T.concat_rows([a, b, c])
        return weighted_sum(T.slice_rows(cat, 1, 4), w)

    check_grads(loss, [a, c])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_concat_cols(seed):
    rng = np.random.default_rng(seed)
    a, b = rand(rng, 3, 2), rand(rng, 3, 4)
    w = rng.standard_normal((3, 6))
    check_grads(lambda: weighted_sum(T.concat_cols([a, b]), w), [a, b])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_reshape_swapaxes(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 2, 6)
    w = rng.standard_normal((3, 2, 2))

    def loss():
        r = T.reshape(x, (2, 3, 2))
        return weighted_sum(T.swapaxes(r, 0, 1), w)

    check_grads(loss, [x])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_expand_batch(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 2, 3)
    w = rng.standard_normal((4, 2, 3))
    check_grads(lambda: weighted_sum(T.expand_batch(x, 4), w), [x])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_mean_pool(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 5, 3)
    w = rng.standard_normal((1, 3))
    check_grads(lambda: weighted_sum(T.mean_pool(x), w), [x])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_l2_normalize(seed):
    rng = np.random.default_rng(seed)
    x = rand(rng, 3, 4)
    w = rng.standard_normal((3, 4))
    check_grads(lambda: weighted_sum(T.l2_normalize_rows(x), w), [x])


@pytest.mark.parametrize("seed", range(20))
def test_gradcheck_cross_entropy(seed):
    rng = np.random.default_rng(seed)
    logits = rand(rng, 4, 5)
    targets = rng.integers(0, 5, size=4)
    check_grads(lambda: T.cross_entropy(logits, targets), [logits])


def test_cross_entropy_analytic_values():
    # near-one-hot correct prediction -> loss near 0
    logits = T.Tensor([[30.0, 0.0, 0.0]])
    assert float(T.cross_entropy(logits, [0]).data) < 1e-9
    # uniform prediction over C classes -> ln C
    c = 7
    logits = T.Tensor(np.zeros((3, c)))
    assert abs(float(T.cross_entropy(logits, [0, 3, 6]).data) - math.log(c)) < 1e-9


def test_cross_entropy_shape_errors():
    with pytest.raises(ShapeError):
        T.cross_entropy(T.Tensor(np.zeros((2, 3))), [0])
    with pytest.raises(ShapeError):
        T.cross_entropy(T.Tensor(np.zeros((2, 3))), [0, 5])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=1, max_size=8))
def test_softmax_is_distribution(xs):
    y = T.softmax(T.Tensor(xs)).data
    assert np.all(y >= 0)
    assert abs(y.sum() - 1.0) < 1e-9


def test_requires_grad_false_never_accumulates():
    x = T.Tensor([1.0, 2.0], requires_grad=False)
    y = T.Tensor([3.0, 4.0], requires_grad=True)
    loss = T.sum_all(T.mul(x, y))
    T.backward(loss)
    assert x.grad is None
    assert y.grad is not None


def test_inference_mode_builds_no_graph():
    x = T.Tensor([1.0], requires_grad=True)
    with T.inference_mode():
        out = T.mul(x, x)
    assert not out.requires_grad
    assert out._backward is None


def test_forward_op_dispatch():
    out = T.forward_op("softmax", T.Tensor([0.0, 0.0]))
    assert np.allclose(out.data, [0.5, 0.5])
    with pytest.raises(ShapeError):
        T.forward_op("nope", T.Tensor([0.0]))


def test_determinism_same_seed_bitwise():
    def run():
        rng = np.random.default_rng(123)
        a = T.Tensor(rng.standard_normal((4, 4)), requires_grad=True)
        b = T.Tensor(rng.standard_normal((4, 4)), requires_grad=True)
        loss = T.cross_entropy(T.matmul(T.gelu(a), b), [0, 1, 2, 3])
        T.backward(loss)
        return loss.data.copy(), a.grad.copy(), b.grad.copy()

    l1, ga1, gb1 = run()
    l2, ga2, gb2 = run()
    assert l1.tobytes() == l2.tobytes()
    assert ga1.tobytes() == ga2.tobytes()
    assert gb1.tobytes() == gb2.tobytes()


def test_grad_accumulates_across_reuse():
    x = T.Tensor([2.0], requires_grad=True)
    loss = T.sum_all(T.add(T.mul(x, x), T.mul(x, x)))
    T.backward(loss)
    assert np.allclose(x.grad, [8.0])
