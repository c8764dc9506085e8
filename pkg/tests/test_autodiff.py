"""Gradient-engine tests: hand oracles, finite differences, double backward."""
import numpy as np
import pytest

from metaxfer.errors import ContractError, NumericError, ShapeError
from metaxfer.params import ParamSet, grad
from metaxfer.tensor import (
    Tensor,
    add,
    apply,
    concat,
    cross_entropy,
    embedding_lookup,
    expand_last,
    finite_difference,
    grad_tensors,
    layer_norm,
    matmul,
    mean_all,
    mean_last,
    mul,
    no_record,
    power,
    relu,
    reshape,
    scale,
    slice_,
    softmax,
    sub,
    sum_all,
    sum_last,
    transpose,
)


def max_rel_err(actual: np.ndarray, expected: np.ndarray) -> float:
    """Max abs deviation, scaled by the largest expected entry."""
    actual = np.asarray(actual)
    expected = np.asarray(expected)
    denom = max(float(np.abs(expected).max(initial=0.0)), 1e-12)
    return float(np.abs(actual - expected).max(initial=0.0)) / denom


def triple_loop_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_relu_definition():
    out = relu(Tensor([-1.0, 0.0, 2.0]))
    assert np.array_equal(out.data, [0.0, 0.0, 2.0])


def test_softmax_symmetry():
    out = softmax(Tensor([0.0, 0.0]))
    assert np.allclose(out.data, [0.5, 0.5], atol=1e-15)


def test_matmul_against_triple_loop_oracle():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(3, 2))
    out = matmul(Tensor(a), Tensor(b))
    assert np.allclose(out.data, triple_loop_matmul(a, b), atol=1e-14)


def test_shape_error_reports_both_shapes():
    with pytest.raises(ShapeError) as exc:
        add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4,))))
    assert "(2, 3)" in str(exc.value) and "(4,)" in str(exc.value)


def test_non_finite_output_raises():
    with pytest.raises(NumericError):
        power(Tensor([0.0]), -1.0)


def test_apply_dispatch_and_unknown_kind():
    out = apply("relu", Tensor([-2.0, 3.0]))
    assert np.array_equal(out.data, [0.0, 3.0])
    with pytest.raises(ContractError):
        apply("conv2d", Tensor([1.0]))


def test_grad_square_at_three():
    x = Tensor(3.0, requires_grad=True)
    loss = mul(x, x)
    (g,) = grad_tensors(loss, [x])
    assert g.item() == pytest.approx(6.0, abs=1e-12)


def test_second_derivative_of_cube():
    # d/dx (d/dx x^3) at x=2 is 6x = 12
    x = Tensor(2.0, requires_grad=True)
    loss = mul(mul(x, x), x)
    (g,) = grad_tensors(loss, [x], create_graph=True)
    (gg,) = grad_tensors(g, [x])
    assert gg.item() == pytest.approx(12.0, abs=1e-10)


def test_second_order_polynomial_exact():
    # f(x) = sum(x^4 + 2 x^2); Hessian-diagonal is 12 x^2 + 4
    rng = np.random.default_rng(0)
    xv = rng.normal(size=4)
    x = Tensor(xv, requires_grad=True)
    f = sum_all(add(power(x, 4.0), scale(power(x, 2.0), 2.0)))
    (g,) = grad_tensors(f, [x], create_graph=True)
    (h_diag_sum,) = grad_tensors(sum_all(g), [x])
    assert np.abs(h_diag_sum.data - (12 * xv**2 + 4)).max() < 1e-8


def test_cross_entropy_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    w0 = rng.normal(size=(3, 3))
    x = rng.normal(size=(3, 3))
    y = np.array([0, 2, 1])

    def loss_at(wv: np.ndarray) -> float:
        return cross_entropy(matmul(Tensor(wv), Tensor(x)), y).item()

    w = Tensor(w0, requires_grad=True)
    loss = cross_entropy(matmul(w, Tensor(x)), y)
    (g,) = grad_tensors(loss, [w])
    fd = finite_difference(loss_at, w0)
    assert max_rel_err(g.data, fd) < 1e-6


def _rand_inputs(rng, shapes):
    return [Tensor(rng.normal(size=s), requires_grad=True) for s in shapes]


OP_CASES = [
    ("add", lambda a, b: add(a, b), [(4, 3), (3,)]),
    ("sub", lambda a, b: sub(a, b), [(2, 4), (2, 4)]),
    ("mul", lambda a, b: mul(a, b), [(3, 5), (5,)]),
    ("scale", lambda a: scale(a, -1.7), [(4, 2)]),
    ("matmul", lambda a, b: matmul(a, b), [(3, 4), (4, 2)]),
    ("matmul_batched", lambda a, b: matmul(a, b), [(2, 3, 4), (2, 4, 3)]),
    ("matmul_nd_2d", lambda a, b: matmul(a, b), [(2, 3, 4), (4, 5)]),
    ("relu", lambda a: relu(a), [(6, 3)]),
    ("softmax", lambda a: softmax(a), [(4, 5)]),
    ("layer_norm", lambda a: layer_norm(a), [(3, 6)]),
    ("transpose", lambda a: transpose(a), [(3, 4)]),
    ("transpose_perm", lambda a: transpose(a, (1, 2, 0)), [(2, 3, 4)]),
    ("reshape", lambda a: reshape(a, (2, 6)), [(3, 4)]),
    ("concat", lambda a, b: concat([a, b], axis=1), [(2, 3), (2, 2)]),
    ("slice", lambda a: slice_(a, (slice(None), slice(1, 3))), [(3, 5)]),
    ("power", lambda a: power(a, 3.0), [(4, 3)]),
    ("sum_last", lambda a: sum_last(a), [(3, 4)]),
    ("expand_last", lambda a: expand_last(a, 5), [(3,)]),
    ("mean_last", lambda a: mean_last(a), [(2, 6)]),
    ("mean_all", lambda a: mean_all(a), [(3, 4)]),
]


@pytest.mark.parametrize("name,fn,shapes", OP_CASES, ids=[c[0] for c in OP_CASES])
def test_primitive_gradients_match_finite_differences(name, fn, shapes):
    # 100 randomized trials per primitive, shapes <= 8 per axis.
    rng = np.random.default_rng(hash(name) % (2**32))
    worst = 0.0
    for _ in range(100):
        xs = _rand_inputs(rng, shapes)
        probe = Tensor(rng.normal(size=fn(*xs).shape))
        loss = sum_all(mul(fn(*xs), probe))
        gs = grad_tensors(loss, xs)
        for i, x in enumerate(xs):
            def loss_at(v, i=i):
                ys = [Tensor(t.data) for t in xs]
                ys[i] = Tensor(v)
                return sum_all(mul(fn(*ys), probe)).item()

            fd = finite_difference(loss_at, x.data)
            worst = max(worst, max_rel_err(gs[i].data, fd))
    assert worst < 1e-5


def test_embedding_lookup_gradient():
    rng = np.random.default_rng(11)
    table = Tensor(rng.normal(size=(7, 4)), requires_grad=True)
    ids = np.array([[1, 1, 5], [0, 6, 1]])
    probe = Tensor(rng.normal(size=(2, 3, 4)))
    loss = sum_all(mul(embedding_lookup(table, ids), probe))
    (g,) = grad_tensors(loss, [table])

    def loss_at(tv):
        return sum_all(mul(embedding_lookup(Tensor(tv), ids), probe)).item()

    fd = finite_difference(loss_at, table.data)
    assert max_rel_err(g.data, fd) < 1e-6


def test_cross_entropy_respects_weights_and_trivials():
    # Saturated correct predictions: tiny loss; uniform logits: ln(k).
    logits = Tensor(np.array([[20.0, -20.0], [-20.0, 20.0]]))
    assert cross_entropy(logits, np.array([0, 1])).item() < 1e-6
    uniform = Tensor(np.zeros((3, 4)))
    assert cross_entropy(uniform, np.array([1, 2, 0])).item() == pytest.approx(np.log(4), abs=1e-12)
    with pytest.raises(ContractError):
        cross_entropy(uniform, np.array([0, 0, 0]), np.zeros(3))
    with pytest.raises(ContractError):
        cross_entropy(uniform, np.array([0, 9, 0]))


def test_zero_gradient_completeness():
    x = Tensor(2.0, requires_grad=True)
    bystander = Tensor(np.ones((3, 2)), requires_grad=True)
    loss = mul(x, x)
    grads = grad(loss, ParamSet({"x": x, "by": bystander}))
    assert np.array_equal(grads["by"].data, np.zeros((3, 2)))
    assert grads["x"].item() == pytest.approx(4.0)


def test_grad_requires_scalar_loss():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ContractError):
        grad_tensors(scale(x, 2.0), [x])


def test_no_record_blocks_tracking():
    x = Tensor(1.5, requires_grad=True)
    with no_record():
        y = mul(x, x)
    assert y.node is None
    (g,) = grad_tensors(mul(x, x), [x])
    assert g.item() == pytest.approx(3.0)


def test_determinism_bit_identical():
    def run():
        rng = np.random.default_rng(42)
        w = Tensor(rng.normal(size=(4, 4)), requires_grad=True)
        x = Tensor(rng.normal(size=(4, 2)))
        loss = cross_entropy(transpose(matmul(w, x)), np.array([0, 1]))
        (g,) = grad_tensors(loss, [w])
        return loss.item(), g.data.copy()

    l1, g1 = run()
    l2, g2 = run()
    assert l1 == l2
    assert np.array_equal(g1, g2)


def test_layer_norm_statistics():
    rng = np.random.default_rng(5)
    h = layer_norm(Tensor(rng.normal(size=(4, 9), scale=3.0)))
    assert np.abs(h.data.mean(axis=-1)).max() < 1e-9
    assert np.abs(h.data.var(axis=-1) - 1.0).max() < 1e-4


def test_paramset_order_and_uniqueness():
    ps = ParamSet({"b": Tensor(1.0), "a.x": Tensor(2.0), "a.y": Tensor(3.0)})
    assert list(ps) == sorted(ps)
    with pytest.raises(ContractError):
        ParamSet([("w", Tensor(0.0)), ("w", Tensor(1.0))])


def test_double_backward_through_matmul_chain():
    # Mixed second derivative of f(w, u) = sum((x @ w) * u^T-ish chain),
    # checked against finite differences of the first gradient.
    rng = np.random.default_rng(9)
    xv = rng.normal(size=(3, 4))
    wv = rng.normal(size=(4, 2))
    uv = rng.normal(size=(2,))

    def first_grad_wrt_w(uvec: np.ndarray) -> np.ndarray:
        w = Tensor(wv, requires_grad=True)
        u = Tensor(uvec)
        y = relu(matmul(Tensor(xv), w))
        loss = sum_all(power(mul(y, u), 2.0))
        (gw,) = grad_tensors(loss, [w])
        return gw.data

    w = Tensor(wv, requires_grad=True)
    u = Tensor(uv, requires_grad=True)
    y = relu(matmul(Tensor(xv), w))
    loss = sum_all(power(mul(y, u), 2.0))
    (gw,) = grad_tensors(loss, [w], create_graph=True)
    probe = Tensor(np.ones_like(wv))
    (mixed,) = grad_tensors(sum_all(mul(gw, probe)), [u])

    fd = finite_difference(lambda uvec: float(first_grad_wrt_w(uvec).sum()), uv, eps=1e-6)
    assert max_rel_err(mixed.data, fd) < 1e-6
