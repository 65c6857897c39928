import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import cross_entropy_loop, head_loop, matvec_loop, pool_spatial_loop
from reconet.head import (
    GpmParams,
    HeadParams,
    gpm_forward,
    head_forward,
    softmax_cross_entropy,
    total_loss,
)
from reconet.tensor import ShapeError


class TestGpm:
    def test_identity(self, rng):
        x = rng.normal(size=(3, 2, 2))
        out = gpm_forward(x, GpmParams(np.eye(3), np.zeros(3)))
        np.testing.assert_allclose(out, pool_spatial_loop(x), rtol=0, atol=1e-16)

    def test_zero_weight(self, rng):
        b = np.array([1.0, -2.0])
        assert np.array_equal(gpm_forward(rng.normal(size=(3, 2, 2)), GpmParams(np.zeros((2, 3)), b)), b)

    def test_oracle(self, rng):
        x = rng.normal(size=(3, 2, 2))
        p = GpmParams(rng.normal(size=(4, 3)), rng.normal(size=4))
        expected = matvec_loop(p.weight, pool_spatial_loop(x)) + p.bias
        np.testing.assert_allclose(gpm_forward(x, p), expected, rtol=0, atol=1e-15)

    def test_mismatch(self, rng):
        with pytest.raises(ShapeError):
            gpm_forward(rng.normal(size=(3, 2, 2)), GpmParams(np.zeros((2, 4)), np.zeros(2)))


class TestHead:
    def test_zero_weight_gives_bias(self, rng):
        x, y = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3))
        p = HeadParams(np.zeros((3, 6)), np.array([1.0, 2.0, 3.0]))
        logits = head_forward(x, y, rng.normal(size=2), p)
        assert np.array_equal(logits, np.broadcast_to(p.bias[:, None, None], (3, 3, 3)))

    def test_global_block_only_is_spatially_constant(self, rng):
        x, y = rng.normal(size=(2, 3, 4)), rng.normal(size=(2, 3, 4))
        w = np.zeros((2, 6))
        w[:, 4:] = rng.normal(size=(2, 2))
        logits = head_forward(x, y, rng.normal(size=2), HeadParams(w, np.zeros(2)))
        assert np.all(logits == logits[:, :1, :1])

    def test_oracle(self, rng):
        x, y, g = rng.normal(size=(2, 2, 3)), rng.normal(size=(2, 2, 3)), rng.normal(size=3)
        p = HeadParams(rng.normal(size=(3, 7)), rng.normal(size=3))
        np.testing.assert_allclose(head_forward(x, y, g, p), head_loop(p.weight, p.bias, x, y, g), rtol=0, atol=1e-15)

    def test_broadcast_isolation(self, rng):
        x, y = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3))
        w = rng.normal(size=(3, 7))
        w[:, 4:] = 0.0
        p = HeadParams(w, rng.normal(size=3))
        base = head_forward(x, y, rng.normal(size=3), p)
        assert np.array_equal(base, head_forward(x, y, 100 * rng.normal(size=3), p))

    def test_mismatch(self, rng):
        with pytest.raises(ShapeError):
            head_forward(rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2, 3)), np.zeros(1), HeadParams(np.zeros((2, 5)), np.zeros(2)))


class TestCrossEntropy:
    def test_uniform_logits(self, rng):
        labels = rng.integers(0, 4, size=(3, 5))
        assert softmax_cross_entropy(np.zeros((4, 3, 5)), labels) == pytest.approx(math.log(4), abs=1e-15)

    def test_margin(self):
        logits = np.array([10.0, 0.0]).reshape(2, 1, 1)
        assert softmax_cross_entropy(logits, np.zeros((1, 1), dtype=int)) == pytest.approx(math.log1p(math.exp(-10)), rel=1e-9)

    def test_oracle(self, rng):
        logits = rng.normal(size=(3, 2, 2))
        labels = rng.integers(0, 3, size=(2, 2))
        assert softmax_cross_entropy(logits, labels) == pytest.approx(cross_entropy_loop(logits, labels), abs=1e-12)

    def test_label_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 1, 1)), np.array([[2]]))
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros((2, 1, 1)), np.array([[-1]]))

    def test_large_logits_stay_finite(self):
        logits = np.array([1000.0, -1000.0]).reshape(2, 1, 1)
        assert softmax_cross_entropy(logits, np.array([[1]])) == pytest.approx(2000.0)

    @settings(max_examples=50)
    @given(st.integers(0, 2**30), st.floats(-100, 100))
    def test_shift_invariance(self, seed, shift):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(3, 2, 3))
        labels = rng.integers(0, 3, size=(2, 3))
        base = softmax_cross_entropy(logits, labels)
        shifted = softmax_cross_entropy(logits + shift, labels)
        assert abs(base - shifted) <= 1e-12


class TestTotalLoss:
    def test_examples(self):
        assert total_loss(1.0, 0.0).total == 1.0
        assert total_loss(0.0, 1.0).total == 0.2
        assert total_loss(2.0, 5.0).total == 3.0
        assert total_loss(2.0, 5.0).alpha == 0.2

    def test_negative(self):
        with pytest.raises(ValueError):
            total_loss(-1.0, 0.0)

    @given(st.floats(0, 1e3), st.floats(0, 1e3))
    def test_linear_in_aux(self, main, aux):
        lb = total_loss(main, aux)
        assert lb.total == main + 0.2 * aux
        assert lb.main == main and lb.aux == aux
