import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import vapformer.autodiff as ad
from vapformer.errors import ShapeError
from vapformer.optim import ParameterStore, grad_check
from vapformer.reference import matmul_naive


def finite_arrays(shape, lo=-10, hi=10):
    n = int(np.prod(shape))
    return st.lists(
        st.floats(min_value=lo, max_value=hi, allow_nan=False, allow_infinity=False),
        min_size=n,
        max_size=n,
    ).map(lambda xs: np.array(xs).reshape(shape))


# ---------------------------------------------------------------- matmul

def test_matmul_identity():
    a = np.arange(10, dtype=float).reshape(2, 5)
    out = ad.matmul(ad.Tensor(np.eye(2)), ad.Tensor(a))
    assert np.array_equal(out.data, a)


def test_matmul_zeros():
    out = ad.matmul(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.ones((3, 4))))
    assert np.array_equal(out.data, np.zeros((2, 4)))


def test_matmul_against_naive_oracle():
    a = np.array([[1.0, 2.0], [3.0, 4.0]])
    b = np.array([[5.0], [6.0]])
    expected = matmul_naive(a, b)
    assert np.array_equal(expected, np.array([[17.0], [39.0]]))
    out = ad.matmul(ad.Tensor(a), ad.Tensor(b))
    assert np.array_equal(out.data, expected)


def test_matmul_random_against_naive(rng):
    a = rng.standard_normal((4, 6))
    b = rng.standard_normal((6, 3))
    out = ad.matmul(ad.Tensor(a), ad.Tensor(b))
    assert np.allclose(out.data, matmul_naive(a, b), rtol=1e-13, atol=1e-13)


def test_matmul_batched_broadcasts_leading_dim(rng):
    a = rng.standard_normal((5, 4, 6))
    b = rng.standard_normal((6, 3))
    out = ad.matmul(ad.Tensor(a), ad.Tensor(b))
    assert out.shape == (5, 4, 3)
    for i in range(5):
        assert np.allclose(out.data[i], matmul_naive(a[i], b), atol=1e-13)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 5\)"):
        ad.matmul(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((4, 5))))


# ---------------------------------------------------------------- softmax

def test_softmax_uniform_on_constant():
    out = ad.softmax(ad.Tensor([0.0, 0.0, 0.0]), axis=0)
    assert np.allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_softmax_matches_exp_sum_oracle():
    x = np.log(np.array([1.0, 2.0, 3.0]))
    expected = np.exp(x) / np.exp(x).sum()
    assert np.allclose(expected, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)
    out = ad.softmax(ad.Tensor(x), axis=0)
    assert np.allclose(out.data, expected, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(finite_arrays((3, 5), lo=-50, hi=50))
def test_softmax_rows_sum_to_one(x):
    out = ad.softmax(ad.Tensor(x), axis=1)
    assert np.all(out.data > 0)
    assert np.all(np.abs(out.data.sum(axis=1) - 1.0) <= 1e-12)


@settings(max_examples=30, deadline=None)
@given(finite_arrays((4,), lo=-30, hi=30), st.floats(min_value=-100, max_value=100))
def test_softmax_shift_invariance(x, c):
    base = ad.softmax(ad.Tensor(x), axis=0).data
    shifted = ad.softmax(ad.Tensor(x + c), axis=0).data
    assert np.allclose(base, shifted, atol=1e-12)


# ---------------------------------------------------------------- layer_norm

def test_layer_norm_constant_row_maps_to_beta():
    x = ad.Tensor(np.full((2, 4), 3.7))
    beta = np.array([1.0, -2.0, 0.5, 0.0])
    out = ad.layer_norm(x, ad.Tensor(np.ones(4)), ad.Tensor(beta), eps=0.0)
    assert np.array_equal(out.data, np.tile(beta, (2, 1)))


def test_layer_norm_output_row_mean_near_zero(rng):
    x = ad.Tensor(rng.standard_normal((6, 8)))
    out = ad.layer_norm(x, ad.Tensor(np.ones(8)), ad.Tensor(np.zeros(8)), eps=0.0)
    assert np.all(np.abs(out.data.mean(axis=1)) < 1e-9)


def test_layer_norm_two_point_row():
    # mean 2, population variance 1 -> (1-2)/1, (3-2)/1
    out = ad.layer_norm(
        ad.Tensor(np.array([[1.0, 3.0]])), ad.Tensor(np.ones(2)), ad.Tensor(np.zeros(2)), eps=0.0
    )
    assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-15)


def test_layer_norm_rejects_mismatched_affine():
    with pytest.raises(ShapeError):
        ad.layer_norm(ad.Tensor(np.zeros((2, 4))), ad.Tensor(np.ones(3)), ad.Tensor(np.zeros(4)))


# ---------------------------------------------------------------- pointwise suite

def test_gelu_zero():
    assert ad.gelu(ad.Tensor([0.0])).data[0] == 0.0


def test_gelu_matches_tanh_formula(rng):
    x = rng.standard_normal(20)
    out = ad.gelu(ad.Tensor(x)).data
    k, c = math.sqrt(2 / math.pi), 0.044715
    expected = 0.5 * x * (1 + np.tanh(k * (x + c * x ** 3)))
    assert np.array_equal(out, expected)


@settings(max_examples=30, deadline=None)
@given(finite_arrays((5, 3)), finite_arrays((7, 3)))
def test_concat_split_roundtrip_bitwise(a, b):
    joined = ad.concat([ad.Tensor(a), ad.Tensor(b)], axis=0)
    pa, pb = ad.split(joined, [5, 7], axis=0)
    assert np.array_equal(pa.data, a) and np.array_equal(pb.data, b)


def test_split_concat_roundtrip_bitwise(rng):
    x = rng.standard_normal((12, 4))
    parts = ad.split(ad.Tensor(x), [3, 4, 5], axis=0)
    joined = ad.concat(parts, axis=0)
    assert np.array_equal(joined.data, x)


def test_split_sizes_must_cover_axis():
    with pytest.raises(ShapeError):
        ad.split(ad.Tensor(np.zeros((5, 2))), [2, 2], axis=0)


def test_broadcast_multiply_by_ones_is_identity(rng):
    x = rng.standard_normal((12, 4))
    out = ad.mul(ad.Tensor(x), ad.Tensor(np.ones(4)))
    assert np.array_equal(out.data, x)


def test_transpose_reshape_roundtrip(rng):
    x = rng.standard_normal((3, 4, 5))
    t = ad.transpose(ad.Tensor(x), (2, 0, 1))
    assert np.array_equal(t.data, x.transpose(2, 0, 1))
    back = ad.reshape(ad.flatten(ad.Tensor(x)), (3, 4, 5))
    assert np.array_equal(back.data, x)


def test_add_shape_error():
    with pytest.raises(ShapeError):
        ad.add(ad.Tensor(np.zeros((2, 3))), ad.Tensor(np.zeros((4, 5))))


def test_mean_full_and_axis(rng):
    x = rng.standard_normal((4, 6))
    assert np.isclose(ad.mean(ad.Tensor(x)).data, x.mean(), atol=1e-15)
    assert np.allclose(ad.mean(ad.Tensor(x), axis=0).data, x.mean(axis=0), atol=1e-15)


# ---------------------------------------------------------------- bce

def test_bce_symmetry_point():
    out = ad.bce_with_logits(ad.Tensor([0.0]), np.array([1.0]))
    assert abs(float(out.data) - math.log(2.0)) < 1e-12


def test_bce_saturation():
    out = ad.bce_with_logits(ad.Tensor([30.0]), np.array([1.0]))
    assert float(out.data) < 1e-12


def test_bce_matches_direct_formula():
    expected = math.log(1.0 + math.e)  # 1.3132616875182228
    out = ad.bce_with_logits(ad.Tensor([1.0]), np.array([0.0]))
    assert abs(float(out.data) - expected) < 1e-12


def test_bce_means_over_batch():
    out = ad.bce_with_logits(ad.Tensor([0.0, 0.0]), np.array([1.0, 0.0]))
    assert abs(float(out.data) - math.log(2.0)) < 1e-12


def test_bce_rejects_non_binary_labels():
    with pytest.raises(ShapeError):
        ad.bce_with_logits(ad.Tensor([0.0]), np.array([0.5]))


# ---------------------------------------------------------------- gradients

def _op_gradcheck(build, param_shapes, seed=0, n_coords=120, tol=1e-5):
    """Randomized finite-difference audit for one op composition."""
    gen = np.random.default_rng(seed)
    store = ParameterStore()
    for name, shape in param_shapes.items():
        store.add(name, ad.Tensor(gen.standard_normal(shape), requires_grad=True))
    err = grad_check(build, store, h=1e-5, n_coords=n_coords, seed=seed)
    assert err < tol, f"max relative error {err}"


def test_grad_matmul_add_mul():
    _op_gradcheck(
        lambda s: ad.sum_(ad.mul(ad.matmul(s["a"], s["b"]), ad.add(s["c"], 1.5))),
        {"a": (5, 4), "b": (4, 6), "c": (5, 6)},
    )


def test_grad_batched_matmul():
    _op_gradcheck(
        lambda s: ad.sum_(ad.matmul(s["a"], s["b"])),
        {"a": (3, 4, 5), "b": (5, 2)},
    )


def test_grad_softmax():
    _op_gradcheck(
        lambda s: ad.sum_(ad.mul(ad.softmax(s["x"], axis=1), s["w"])),
        {"x": (6, 7), "w": (6, 7)},
    )


def test_grad_channel_axis_softmax():
    _op_gradcheck(
        lambda s: ad.sum_(ad.mul(ad.softmax(s["x"], axis=0), s["w"])),
        {"x": (6, 7), "w": (6, 7)},
    )


def test_grad_layer_norm():
    _op_gradcheck(
        lambda s: ad.sum_(ad.mul(ad.layer_norm(s["x"], s["g"], s["b"], eps=1e-5), s["w"])),
        {"x": (5, 8), "g": (8,), "b": (8,), "w": (5, 8)},
    )


def test_grad_gelu():
    _op_gradcheck(lambda s: ad.sum_(ad.gelu(s["x"])), {"x": (9, 5)})


def test_grad_concat_split_transpose_reshape():
    def build(s):
        joined = ad.concat([s["a"], s["b"]], axis=0)
        left, right = ad.split(joined, [3, 4], axis=0)
        return ad.sum_(ad.matmul(left, ad.transpose(right)))

    _op_gradcheck(build, {"a": (3, 6), "b": (4, 6)})


def test_grad_mean_flatten():
    _op_gradcheck(
        lambda s: ad.mean(ad.mul(ad.flatten(s["x"]), ad.flatten(s["x"]))),
        {"x": (4, 5)},
    )


def test_grad_bce_softmax_composite():
    labels = np.array([1.0, 0.0, 1.0, 0.0, 1.0])

    def build(s):
        logits = ad.reshape(ad.matmul(s["x"], s["w"]), (5,))
        return ad.bce_with_logits(logits, labels)

    gen = np.random.default_rng(3)
    store = ParameterStore()
    store.add("x", ad.Tensor(gen.standard_normal((5, 4)), requires_grad=True))
    store.add("w", ad.Tensor(gen.standard_normal((4, 1)), requires_grad=True))
    err = grad_check(build, store, h=1e-5, n_coords=120, seed=3)
    assert err < 1e-5


def test_backward_off_path_grad_stays_zero(rng):
    a = ad.Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    unused = ad.Tensor(rng.standard_normal((3, 3)), requires_grad=True)
    loss = ad.sum_(ad.mul(a, a))
    loss.backward()
    assert unused.grad is None
    assert np.allclose(a.grad, 2 * a.data, atol=1e-12)


def test_no_grad_suppresses_tape(rng):
    a = ad.Tensor(rng.standard_normal((2, 2)), requires_grad=True)
    with ad.no_grad():
        out = ad.sum_(ad.mul(a, a))
    assert out._backward is None and not out.requires_grad
