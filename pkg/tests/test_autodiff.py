import numpy as np
import pytest

from sketchrep.autodiff import (
    Adam,
    ParameterSet,
    RMSprop,
    Tensor,
    backward,
    finite_difference_check,
    gru_bidirectional,
    init_gru_params,
    load_checkpoint,
    make_optimizer,
    ops,
    save_checkpoint,
    sequence_steps,
)
from sketchrep.errors import (
    EmptySequence,
    LabelOutOfRange,
    MissingGrads,
    NonScalarOutput,
    ShapeMismatch,
)


class TestForwardBasics:
    def test_dense_identity(self):
        pset = ParameterSet()
        w = pset.add("w", np.eye(3))
        b = pset.add("b", np.zeros(3))
        x = ops.constant(np.array([[1.0, -2.0, 3.0]]))
        np.testing.assert_allclose(ops.dense(x, w, b).values, x.values)

    def test_sigmoid_zero(self):
        assert ops.sigmoid(ops.constant(np.zeros(1))).values[0] == pytest.approx(0.5)

    def test_1x1_conv_scalar_product(self):
        pset = ParameterSet()
        w = pset.add("w", np.array([[[[2.0]]]]))
        b = pset.add("b", np.zeros(1))
        x = ops.constant(np.array([[[[3.0]]]]))
        out = ops.conv2d(x, w, b, pad=0)
        assert out.values.reshape(()) == pytest.approx(6.0)

    def test_shape_mismatch(self):
        pset = ParameterSet()
        w = pset.add("w", np.zeros((3, 2)))
        with pytest.raises(ShapeMismatch):
            ops.matmul(ops.constant(np.zeros((1, 4))), w)

    def test_softmax_ce_shift_invariance(self, rng):
        logits = rng.normal(size=(5, 7))
        labels = rng.integers(0, 7, size=5)
        a = ops.softmax_cross_entropy(ops.constant(logits), labels).item()
        b = ops.softmax_cross_entropy(ops.constant(logits + 123.456), labels).item()
        assert a == pytest.approx(b, abs=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(LabelOutOfRange):
            ops.softmax_cross_entropy(ops.constant(np.zeros((2, 3))), [0, 3])

    def test_forward_reproducible(self, rng):
        x = rng.normal(size=(4, 6))
        pset = ParameterSet()
        w = pset.add("w", rng.normal(size=(6, 3)))
        b = pset.add("b", rng.normal(size=3))
        a = ops.dense(ops.constant(x), w, b).values
        bvals = ops.dense(ops.constant(x), w, b).values
        assert np.array_equal(a, bvals)


class TestBackwardBasics:
    def test_linear_grad(self):
        pset = ParameterSet()
        w = pset.add("w", np.array(2.0))
        x = ops.constant(np.array(3.0))
        out = ops.mul(w, x)
        pset.zero_grads()
        backward(out)
        assert w.grad == pytest.approx(3.0)

    def test_unreachable_param_zero_grad(self):
        pset = ParameterSet()
        w = pset.add("w", np.array(2.0))
        unused = pset.add("unused", np.array(5.0))
        pset.zero_grads()
        backward(ops.mul(w, ops.constant(np.array(4.0))))
        assert unused.grad == pytest.approx(0.0)
        assert w.grad == pytest.approx(4.0)

    def test_non_scalar_output_rejected(self):
        pset = ParameterSet()
        w = pset.add("w", np.ones(3))
        with pytest.raises(NonScalarOutput):
            backward(ops.mul_const(w, 2.0))


def random_graph_loss(pset, x, labels):
    """Small composite graph touching dense, relu, sigmoid, tanh, concat,
    narrow, and the CE loss."""
    h = ops.relu(ops.dense(x, pset["w1"], pset["b1"]))
    g = ops.tanh(ops.dense(x, pset["w2"], pset["b2"]))
    both = ops.concat([h, g], axis=1)
    part = ops.narrow(both, 1, both.values.shape[1] - 2, axis=1)
    s = ops.sigmoid(ops.dense(part, pset["w3"], pset["b3"]))
    ce = ops.softmax_cross_entropy(ops.dense(s, pset["w4"], pset["b4"]), labels)
    return ops.add(ce, ops.mul_const(ops.mean_row_sumsq(s), 0.1))


class TestGradientChecks:
    def test_random_graph_vs_finite_differences(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            pset = ParameterSet()
            pset.add("w1", rng.normal(size=(5, 4)) * 0.5)
            pset.add("b1", rng.normal(size=4) * 0.1)
            pset.add("w2", rng.normal(size=(5, 3)) * 0.5)
            pset.add("b2", rng.normal(size=3) * 0.1)
            pset.add("w3", rng.normal(size=(5, 4)) * 0.5)
            pset.add("b3", rng.normal(size=4) * 0.1)
            pset.add("w4", rng.normal(size=(4, 3)) * 0.5)
            pset.add("b4", rng.normal(size=3) * 0.1)
            x = ops.constant(rng.normal(size=(3, 5)))
            labels = rng.integers(0, 3, size=3)
            err = finite_difference_check(lambda: random_graph_loss(pset, x, labels), pset)
            assert err < 1e-4, f"seed {seed}: rel err {err}"

    def test_conv_pool_vs_finite_differences(self):
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            pset = ParameterSet()
            pset.add("w", rng.normal(size=(2, 1, 3, 3)) * 0.5)
            pset.add("b", rng.normal(size=2) * 0.1)
            pset.add("wh", rng.normal(size=(8, 3)) * 0.5)
            pset.add("bh", rng.normal(size=3) * 0.1)
            x = ops.constant(rng.normal(size=(2, 1, 4, 4)))
            labels = rng.integers(0, 3, size=2)

            def loss():
                h = ops.maxpool2d(ops.relu(ops.conv2d(x, pset["w"], pset["b"])))
                flat = ops.reshape(h, (2, -1))
                return ops.softmax_cross_entropy(ops.dense(flat, pset["wh"], pset["bh"]), labels)

            err = finite_difference_check(loss, pset)
            assert err < 1e-4, f"seed {seed}: rel err {err}"


class TestGRU:
    def make(self, rng, layers=1, hidden=3):
        pset = ParameterSet()
        init_gru_params(pset, "rnn", 4, hidden, layers, rng)
        return pset

    def test_zero_params_zero_input_fixed_point(self):
        pset = ParameterSet()
        init_gru_params(pset, "rnn", 4, 3, 1, np.random.default_rng(0))
        for name, t in pset.items():
            t.values[:] = 0.0
        steps = [ops.constant(np.zeros((2, 4))) for _ in range(4)]
        out = gru_bidirectional(steps, pset, "rnn", 1, 3)
        np.testing.assert_allclose(out.values, 0.0)

    def test_length_one_symmetry(self, rng):
        pset = self.make(np.random.default_rng(1))
        steps = [ops.constant(rng.normal(size=(1, 4)))]
        out = gru_bidirectional(steps, pset, "rnn", 1, 3)
        assert out.values.shape == (1, 6)
        # both directions consume the same single step with their own weights

    def test_output_dim(self, rng):
        pset = self.make(np.random.default_rng(2), layers=2, hidden=5)
        steps = [ops.constant(rng.normal(size=(3, 4))) for _ in range(6)]
        out = gru_bidirectional(steps, pset, "rnn", 2, 5)
        assert out.values.shape == (3, 10)

    def test_empty_sequence(self):
        pset = self.make(np.random.default_rng(3))
        with pytest.raises(EmptySequence):
            gru_bidirectional([], pset, "rnn", 1, 3)

    def test_masking_equals_truncation(self, rng):
        """A padded+masked short sequence must equal running it unpadded."""
        pset = self.make(np.random.default_rng(4))
        seq = rng.normal(size=(5, 4))
        steps_full, mask = sequence_steps([seq[:3], seq], dtype=np.float64)
        out = gru_bidirectional(steps_full, pset, "rnn", 1, 3, mask=mask)
        steps_short, _ = sequence_steps([seq[:3]])
        alone = gru_bidirectional(steps_short, pset, "rnn", 1, 3)
        np.testing.assert_allclose(out.values[0], alone.values[0], atol=1e-12)

    def test_gradient_check_5_steps(self):
        for seed in range(3):
            rng = np.random.default_rng(200 + seed)
            pset = self.make(rng, layers=1, hidden=3)
            x = rng.normal(size=(2, 5, 4))
            labels = rng.integers(0, 2, size=2)
            head = pset.add("hw", rng.normal(size=(6, 2)) * 0.5)
            hb = pset.add("hb", np.zeros(2))

            def loss():
                steps = [ops.constant(x[:, t, :]) for t in range(5)]
                h = gru_bidirectional(steps, pset, "rnn", 1, 3)
                return ops.softmax_cross_entropy(ops.dense(h, head, hb), labels)

            err = finite_difference_check(loss, pset)
            assert err < 1e-4, f"seed {seed}: rel err {err}"


class TestOptimizers:
    def test_zero_grads_no_update(self):
        pset = ParameterSet()
        w = pset.add("w", np.array([1.0, 2.0]))
        pset.zero_grads()
        Adam(pset, lr=0.1).step()
        np.testing.assert_allclose(w.values, [1.0, 2.0])

    def test_adam_first_step_bias_corrected(self):
        # hand trace: m_hat = v_hat = 1 after one step with grad 1, so the
        # update is lr / (1 + eps)
        pset = ParameterSet()
        w = pset.add("w", np.array(1.0))
        w.grad = np.array(1.0)
        Adam(pset, lr=0.1).step()
        assert w.values == pytest.approx(1.0 - 0.1, abs=1e-8)

    def test_rmsprop_first_step(self):
        # v = 0.1 * g^2 -> step = lr * g / (sqrt(0.1) + eps)
        pset = ParameterSet()
        w = pset.add("w", np.array(0.0))
        w.grad = np.array(2.0)
        RMSprop(pset, lr=0.01).step()
        assert w.values == pytest.approx(-0.01 * 2.0 / (np.sqrt(0.4) + 1e-8), abs=1e-10)

    def test_missing_grads(self):
        pset = ParameterSet()
        pset.add("w", np.array(1.0))
        with pytest.raises(MissingGrads):
            make_optimizer("adam", pset).step()

    def test_deterministic_trajectories(self):
        def run():
            rng = np.random.default_rng(5)
            pset = ParameterSet()
            w = pset.add("w", rng.normal(size=(3, 2)))
            opt = Adam(pset, lr=0.05)
            x = ops.constant(rng.normal(size=(4, 3)))
            for _ in range(5):
                pset.zero_grads()
                backward(ops.mean_row_sumsq(ops.matmul(x, w)))
                opt.step()
            return w.values.copy()

        assert np.array_equal(run(), run())


class TestCheckpoint:
    def test_roundtrip(self, tmp_path, rng):
        pset = ParameterSet()
        pset.add("alpha.w", rng.normal(size=(3, 4)))
        pset.add("beta.b", rng.normal(size=5).astype(np.float32))
        path = tmp_path / "model.ckpt"
        save_checkpoint(path, pset)
        loaded = load_checkpoint(path)
        assert loaded.names() == ["alpha.w", "beta.b"]
        np.testing.assert_array_equal(loaded["alpha.w"].values, pset["alpha.w"].values)
        np.testing.assert_array_equal(loaded["beta.b"].values, pset["beta.b"].values)
        assert loaded["beta.b"].values.dtype == np.float32
        assert path.read_bytes()[:4] == b"SFCK"
