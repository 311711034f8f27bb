"""Linear-algebra primitives against slow, independent references."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphere_attn import NumericError, ShapeError, finite_difference_gradient, matmul, row_softmax


def triple_loop_matmul(a, b):
    rows, inner, cols = a.shape[0], a.shape[1], b.shape[1]
    out = np.zeros((rows, cols))
    for i in range(rows):
        for j in range(cols):
            acc = 0.0
            for t in range(inner):
                acc += a[i, t] * b[t, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_matches_triple_loop(self):
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.standard_normal((7, 5))
            b = rng.standard_normal((5, 9))
            np.testing.assert_allclose(matmul(a, b), triple_loop_matmul(a, b), atol=1e-12)

    def test_identity(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((4, 4))
        np.testing.assert_array_equal(matmul(a, np.eye(4)), a)

    def test_rejects_bad_rank(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros(3), np.zeros((3, 3)))

    def test_rejects_mismatched_inner(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros((2, 3)), np.zeros((4, 2)))

    def test_rejects_nonfinite_result(self):
        big = np.full((2, 2), 1e300)
        with pytest.raises(NumericError):
            matmul(big, big)


class TestRowSoftmax:
    def test_uniform_logits(self):
        out = row_softmax(np.zeros((3, 4)))
        np.testing.assert_allclose(out, np.full((3, 4), 0.25))

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(2)
        out = row_softmax(rng.standard_normal((6, 11)) * 10)
        np.testing.assert_allclose(out.sum(axis=-1), np.ones(6), atol=1e-12)
        assert np.all(out >= 0)

    def test_extreme_logits_do_not_overflow(self):
        out = row_softmax(np.array([[1e4, 0.0, -1e4]]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out.sum(), 1.0)

    def test_works_on_3d_batches(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 5, 7))
        out = row_softmax(x)
        np.testing.assert_allclose(out.sum(axis=-1), np.ones((2, 5)), atol=1e-12)

    @given(
        st.lists(
            st.floats(min_value=-50, max_value=50, allow_nan=False),
            min_size=2,
            max_size=8,
        ),
        st.floats(min_value=-30, max_value=30, allow_nan=False),
    )
    @settings(max_examples=50, deadline=None)
    def test_shift_invariance(self, row, shift):
        """softmax(x + c) == softmax(x): the defining stability property."""
        x = np.array([row])
        np.testing.assert_allclose(row_softmax(x + shift), row_softmax(x), atol=1e-12)


class TestFiniteDifferenceGradient:
    def test_quadratic(self):
        # f(x) = sum(x^2) has gradient 2x
        x = np.array([1.0, -2.0, 3.0])
        grad = finite_difference_gradient(lambda v: float(np.sum(v * v)), x)
        np.testing.assert_allclose(grad, 2 * x, atol=1e-8)

    def test_linear_is_exact_to_truncation(self):
        w = np.array([2.0, -1.0, 0.5, 4.0])
        grad = finite_difference_gradient(lambda v: float(w @ v), np.zeros(4))
        np.testing.assert_allclose(grad, w, atol=1e-10)

    def test_trig(self):
        x = np.array([0.3, 1.1])
        grad = finite_difference_gradient(lambda v: float(np.sin(v).sum()), x)
        np.testing.assert_allclose(grad, np.cos(x), atol=1e-9)

    def test_rejects_matrix_input(self):
        with pytest.raises(ShapeError):
            finite_difference_gradient(lambda v: 0.0, np.zeros((2, 2)))

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            finite_difference_gradient(lambda v: 0.0, np.zeros(2), eps=0.0)

    def test_rejects_nonfinite_function(self):
        with pytest.raises(NumericError):
            finite_difference_gradient(lambda v: float("nan"), np.zeros(2))
