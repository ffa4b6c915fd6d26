import numpy as np
import pytest

from sketchrep.autodiff import backward, make_optimizer
from sketchrep.encoder import (
    ClassifierHead,
    EncoderConfig,
    classify,
    encode,
    encode_batch,
    encode_branch,
    encode_branch_batch,
    head_from_params,
    init_encoder_params,
    validate_topology,
)
from sketchrep.errors import DimensionMismatch, TopologyMismatch
from sketchrep.objectives import cross_entropy_loss
from sketchrep.sketch_data import rasterize, encode_sequence, SketchSample


class TestConfig:
    def test_dims(self):
        cfg = EncoderConfig(raster_size=32, cnn_stages=2, cnn_base_channels=4,
                            rnn_hidden=8, fusion_dim=16)
        assert cfg.cnn_channels == [4, 8]
        assert cfg.cnn_out_dim == 8 * 8 * 8
        assert cfg.fusion_in_dim == cfg.cnn_out_dim + 16

    def test_validation(self):
        with pytest.raises(ValueError):
            EncoderConfig(fusion_activation="softplus")
        with pytest.raises(ValueError):
            EncoderConfig(raster_size=30, cnn_stages=2)


class TestEncode:
    def test_sigmoid_range(self, tiny_dataset, tiny_config, tiny_params):
        samples, _, _ = tiny_dataset
        feats = encode_batch(samples[:5], tiny_params, tiny_config)
        assert np.all(feats.values > 0) and np.all(feats.values < 1)

    def test_zero_fusion_weights_give_half(self, tiny_dataset, tiny_config, tiny_params):
        samples, _, _ = tiny_dataset
        tiny_params["fusion.w"].values[:] = 0.0
        tiny_params["fusion.b"].values[:] = 0.0
        feat = encode(samples[0], tiny_params, tiny_config)
        np.testing.assert_allclose(feat.vector, 0.5)

    def test_deterministic(self, tiny_dataset, tiny_config, tiny_params):
        samples, _, _ = tiny_dataset
        a = encode(samples[1], tiny_params, tiny_config)
        b = encode(samples[1], tiny_params, tiny_config)
        assert np.array_equal(a.vector, b.vector)
        assert a.sample_id == samples[1].sample_id

    def test_topology_mismatch(self, tiny_dataset, tiny_config):
        samples, _, _ = tiny_dataset
        other = init_encoder_params(
            EncoderConfig(raster_size=32, cnn_stages=2, cnn_base_channels=4,
                          rnn_hidden=8, fusion_dim=8, num_classes=4), seed=0)
        with pytest.raises(TopologyMismatch):
            encode_batch(samples[:2], other, tiny_config)


class TestBranches:
    def test_rnn_branch_dim(self, tiny_dataset, tiny_config, tiny_params):
        samples, _, _ = tiny_dataset
        out = encode_branch(samples[0], "rnn", tiny_params, tiny_config)
        assert out.shape == (2 * tiny_config.rnn_hidden,)

    def test_branch_concat_is_fusion_input(self, tiny_dataset, tiny_config, tiny_params):
        samples, _, _ = tiny_dataset
        cnn = encode_branch_batch(samples[:3], "cnn", tiny_params, tiny_config)
        rnn = encode_branch_batch(samples[:3], "rnn", tiny_params, tiny_config)
        assert cnn.values.shape[1] + rnn.values.shape[1] == tiny_config.fusion_in_dim

    def test_cnn_branch_sensitive_to_ink(self, tiny_config, tiny_params):
        blank = SketchSample(rasterize([[[0], [0]]], 32), encode_sequence([[[0], [0]]]), 0, 0)
        inked = SketchSample(rasterize([[[0, 20, 20, 0, 0], [0, 0, 20, 20, 0]]], 32),
                             encode_sequence([[[0], [0]]]), 0, 1)
        a = encode_branch(blank, "cnn", tiny_params, tiny_config)
        b = encode_branch(inked, "cnn", tiny_params, tiny_config)
        assert not np.allclose(a, b)


class TestClassify:
    def test_uniform_when_zero_head(self):
        head = ClassifierHead(np.zeros((4, 5)), np.zeros(5))
        probs = classify(np.ones(4), head)
        np.testing.assert_allclose(probs, 0.2)

    def test_bias_dominates(self):
        bias = np.zeros(3)
        bias[0] = 10.0
        head = ClassifierHead(np.zeros((4, 3)), bias)
        assert classify(np.ones(4), head).argmax() == 0

    def test_probabilities_sum_to_one(self, rng):
        head = ClassifierHead(rng.normal(size=(6, 4)), rng.normal(size=4))
        for _ in range(10):
            probs = classify(rng.normal(size=6), head)
            assert probs.sum() == pytest.approx(1.0, abs=1e-9)

    def test_dimension_mismatch(self):
        head = ClassifierHead(np.zeros((4, 3)), np.zeros(3))
        with pytest.raises(DimensionMismatch):
            classify(np.ones(5), head)

    def test_prediction_stable_under_reencoding(self, tiny_dataset, tiny_config, tiny_params):
        samples, _, records = tiny_dataset
        head = head_from_params(tiny_params)
        from sketchrep.sketch_data import build_sample
        for rec, s in list(zip(records, samples))[:4]:
            rebuilt = build_sample(rec, tiny_config.raster_size)
            p1 = classify(encode(s, tiny_params, tiny_config), head)
            p2 = classify(encode(rebuilt, tiny_params, tiny_config), head)
            assert p1.argmax() == p2.argmax()


def test_gradient_reaches_both_branches(tiny_dataset, tiny_config, tiny_params):
    samples, _, _ = tiny_dataset
    before = {n: t.values.copy() for n, t in tiny_params.items()}
    opt = make_optimizer("adam", tiny_params.subset(("cnn.", "rnn.", "fusion.", "head.")), lr=1e-2)
    tiny_params.zero_grads()
    feats = encode_batch(samples[:8], tiny_params, tiny_config)
    loss = cross_entropy_loss(feats, [s.class_id for s in samples[:8]],
                              tiny_params["head.w"], tiny_params["head.b"])
    assert loss.item() > 0
    backward(loss)
    opt.step()
    assert any(not np.array_equal(before[n], t.values)
               for n, t in tiny_params.with_prefix("cnn."))
    assert any(not np.array_equal(before[n], t.values)
               for n, t in tiny_params.with_prefix("rnn."))
