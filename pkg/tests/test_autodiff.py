import numpy as np
import pytest

from reconet import autodiff
from reconet.autodiff import (
    Primitive,
    Tape,
    UnregisteredOpError,
    backward,
    finite_diff_grad,
    gradcheck,
    record_forward,
    relative_error,
)
from reconet.model import (
    ModelParams,
    check_gradients,
    init_model,
    loss_and_grad,
    model_logits,
    model_loss,
    random_instance,
    taped_logits,
)
from reconet.tensor import outer3, sigmoid_map
from reconet.trm import tgm_trm_forward


def sum_sigmoid(tape, leaves):
    return tape.sum(tape.sigmoid(leaves["theta"]))


class TestRecord:
    def test_single_sigmoid(self):
        out, tape = record_forward(lambda t, l: t.sigmoid(l["theta"]), {"theta": np.zeros(3)})
        assert tape.op_count == 1
        assert np.all(out == 0.5)

    def test_structure_is_deterministic(self):
        p = {"theta": np.arange(3.0)}
        _, t1 = record_forward(sum_sigmoid, p)
        _, t2 = record_forward(sum_sigmoid, p)
        assert t1.structure() == t2.structure()

    def test_unregistered_op(self):
        tape = Tape()
        with pytest.raises(UnregisteredOpError):
            tape.apply("conv7x7", tape.const(np.zeros(2)))

    def test_replay_full_forward_bit_identical(self, rng):
        params = init_model(2, 2, 3, seed=4)
        x = rng.normal(size=(2, 2, 2))
        out, tape = record_forward(lambda t, l: taped_logits(t, l, x)[2], params.arrays())
        assert np.array_equal(tape.replay(), out)
        assert np.array_equal(tape.replay(params.arrays()), out)
        _, a, _ = tgm_trm_forward(x, params.tgm)
        np.testing.assert_allclose(out, a, rtol=1e-15, atol=0)

    def test_replay_follows_new_parameters(self, rng):
        params = init_model(2, 2, 3, seed=4)
        x = rng.normal(size=(2, 3, 3))
        labels = rng.integers(0, 3, size=(3, 3))
        _, tape = record_forward(lambda t, l: t.softmax_ce(taped_logits(t, l, x)[0], labels), params.arrays())
        other = init_model(2, 2, 3, seed=5)
        logits, _ = model_logits(x, other)
        from reconet.head import softmax_cross_entropy

        assert float(tape.replay(other.arrays())) == pytest.approx(softmax_cross_entropy(logits, labels), rel=1e-14)


class TestBackward:
    def test_sigmoid_at_zero(self):
        _, tape = record_forward(sum_sigmoid, {"theta": np.zeros(4)})
        assert np.array_equal(backward(tape)["theta"], np.full(4, 0.25))

    def test_outer_product_sum(self, rng):
        vc, vh, vw = rng.uniform(size=3), rng.uniform(size=4), rng.uniform(size=5)
        _, tape = record_forward(
            lambda t, l: t.sum(t.outer3(l["vc"], l["vh"], l["vw"])), {"vc": vc, "vh": vh, "vw": vw}
        )
        g = backward(tape)
        np.testing.assert_allclose(g["vc"], np.full(3, vh.sum() * vw.sum()), rtol=1e-14)
        np.testing.assert_allclose(g["vw"], np.full(5, vc.sum() * vh.sum()), rtol=1e-14)

    def test_outer3_adjoint_identity(self, rng):
        vc, vh, vw = rng.normal(size=3), rng.normal(size=2), rng.normal(size=4)
        G = rng.normal(size=(3, 2, 4))
        dvc, dvh, dvw = autodiff.OPS["outer3"].vjp(G, (vc, vh, vw), outer3(vc, vh, vw))
        for c in range(3):
            assert dvc[c] == pytest.approx(sum(G[c, h, w] * vh[h] * vw[w] for h in range(2) for w in range(4)), rel=1e-13)
        for h in range(2):
            assert dvh[h] == pytest.approx(sum(G[c, h, w] * vc[c] * vw[w] for c in range(3) for w in range(4)), rel=1e-13)
        for w in range(4):
            assert dvw[w] == pytest.approx(sum(G[c, h, w] * vc[c] * vh[h] for c in range(3) for h in range(2)), rel=1e-13)

    def test_mean_pool_scales_by_count(self):
        x = np.zeros((2, 3, 4))
        for op, count in (("pool_spatial", 12), ("pool_over_width", 4), ("pool_over_height", 3)):
            out = autodiff.OPS[op].forward(x)
            (dx,) = autodiff.OPS[op].vjp(np.ones_like(out), (x,), out)
            assert np.all(dx == 1.0 / count), op

    def test_lambda_gradient_through_squash(self, rng):
        """d loss / d lambda_raw_i = sigmoid'(theta_i) * <A_i, dL/dA>."""
        r, shape = 3, (2, 3, 2)
        theta = rng.normal(size=r)
        vc, vh, vw = rng.uniform(size=(r, 2)), rng.uniform(size=(r, 3)), rng.uniform(size=(r, 2))
        G = rng.normal(size=shape)

        def comp(t, l):
            a = t.cp_reconstruct(t.sigmoid(l["theta"]), t.const(vc), t.const(vh), t.const(vw))
            return t.sum(t.hadamard(a, t.const(G)))

        _, tape = record_forward(comp, {"theta": theta})
        got = backward(tape)["theta"]
        s = sigmoid_map(theta)
        expected = [s[i] * (1 - s[i]) * np.sum(outer3(vc[i], vh[i], vw[i]) * G) for i in range(r)]
        np.testing.assert_allclose(got, expected, rtol=1e-13)

        def f(p):
            return float(np.sum(sum(sigmoid_map(p["theta"])[i] * outer3(vc[i], vh[i], vw[i]) for i in range(r)) * G))

        fd = finite_diff_grad(f, {"theta": theta.copy()})["theta"]
        assert relative_error(got, fd).max() < 1e-8

    def test_fused_reconstruction_matches_elementwise_chain(self, rng):
        r, shape = 3, (3, 2, 4)
        params = {
            "theta": rng.normal(size=r),
            "vc": rng.normal(size=(r, 3)),
            "vh": rng.normal(size=(r, 2)),
            "vw": rng.normal(size=(r, 4)),
        }
        G = rng.normal(size=shape)

        def fused(t, l):
            a = t.cp_reconstruct(t.sigmoid(l["theta"]), l["vc"], l["vh"], l["vw"])
            return t.sum(t.hadamard(a, t.const(G)))

        def chain(t, l):
            lam = t.sigmoid(l["theta"])
            a = t.const(np.zeros(shape))
            for i in range(r):
                term = t.outer3(t.take(l["vc"], i), t.take(l["vh"], i), t.take(l["vw"], i))
                a = t.scaled_accumulate(a, t.take(lam, i), term)
            return t.sum(t.hadamard(a, t.const(G)))

        v1, tape1 = record_forward(fused, {k: v.copy() for k, v in params.items()})
        v2, tape2 = record_forward(chain, {k: v.copy() for k, v in params.items()})
        assert float(v1) == pytest.approx(float(v2), rel=1e-14)
        g1, g2 = backward(tape1), backward(tape2)
        for name in params:
            np.testing.assert_allclose(g1[name], g2[name], rtol=1e-12, atol=1e-14)

    def test_non_scalar_root(self):
        _, tape = record_forward(lambda t, l: t.sigmoid(l["theta"]), {"theta": np.zeros(2)})
        with pytest.raises(ValueError):
            backward(tape)

    def test_two_passes_bit_identical(self, rng):
        params, x, labels = random_instance(3, 3, 3, 2, 3, seed=1)
        from reconet.model import taped_loss

        _, tape = record_forward(lambda t, l: taped_loss(t, l, x, labels)[0], params.arrays())
        g1, g2 = backward(tape), backward(tape)
        for k in g1:
            assert np.array_equal(g1[k], g2[k])

    def test_loss_matches_numpy_path(self):
        params, x, labels = random_instance(3, 4, 4, 2, 3, seed=2)
        loss, grads = loss_and_grad(params, x, labels)
        ref = model_loss(params, x, labels)
        assert loss.total == pytest.approx(ref.total, rel=1e-14)
        assert set(grads) == set(params.arrays())


class TestFiniteDifferences:
    def test_quadratic(self):
        g = finite_diff_grad(lambda p: float(p["p"][0] ** 2), {"p": np.array([3.0])})
        assert g["p"][0] == pytest.approx(6.0, abs=1e-9)

    def test_linear(self):
        g = finite_diff_grad(lambda p: float(5 * p["p"][0]), {"p": np.array([1.7])})
        assert g["p"][0] == pytest.approx(5.0, rel=1e-10)

    def test_restores_parameters(self):
        p = {"p": np.array([1.0, 2.0])}
        finite_diff_grad(lambda d: float(np.sum(d["p"] ** 3)), p)
        assert np.array_equal(p["p"], [1.0, 2.0])

    def test_eps_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda d: 0.0, {"p": np.zeros(1)}, eps=0.0)

    @pytest.mark.parametrize("eps", [1e-3, 1e-4, 1e-5, 1e-6])
    def test_eps_sweep_on_model_loss(self, eps):
        # truncation dominates for large eps and rounding for small; 1e-5 sits near the optimum
        params, x, labels = random_instance(3, 3, 3, 2, 3, seed=0)
        report = check_gradients(3, 3, 3, 2, 3, seed=0, tolerance=1.0, eps=eps)
        bound = {1e-3: 1e-3, 1e-4: 1e-5, 1e-5: 1e-6, 1e-6: 1e-4}[eps]
        assert report.max_rel_err < bound


class TestGradcheck:
    def test_sigmoid_chain(self, rng):
        theta = {"theta": rng.normal(size=5)}

        def loss(p):
            return float(np.sum(sigmoid_map(sigmoid_map(p["theta"]) * 2.0)))

        def grad(p):
            _, tape = record_forward(lambda t, l: t.sum(t.sigmoid(t.scale(t.sigmoid(l["theta"]), 2.0))), p)
            return backward(tape)

        assert gradcheck(loss, theta, 1e-9, grad_fn=grad).max_rel_err < 1e-9

    def test_full_loss_small_instance(self):
        report = check_gradients(C=3, H=4, W=4, r=2, K=3, seed=0)
        assert report.passed, report.lines()

    def test_report_lines(self):
        report = check_gradients(C=2, H=2, W=2, r=1, K=2, seed=0)
        lines = report.lines()
        assert len(lines) == len(report.per_block) + 1
        assert lines[-1].startswith("PASS")

    def test_corrupted_rule_is_located(self, monkeypatch):
        prim = autodiff.OPS["cp_reconstruct"]

        def broken(g, inputs, out):
            d_lam, d_vc, d_vh, d_vw = prim.vjp(g, inputs, out)
            return d_lam, d_vc, d_vh, 1.5 * d_vw

        monkeypatch.setitem(autodiff.OPS, "cp_reconstruct", Primitive(prim.forward, broken))
        report = check_gradients(C=3, H=3, W=3, r=2, K=3, seed=0)
        assert not report.passed
        assert report.worst_parameter.startswith("tgm.width_")

    def test_relative_error_floor(self):
        assert relative_error(np.array([0.0]), np.array([1e-12]))[0] == pytest.approx(1e-4)
