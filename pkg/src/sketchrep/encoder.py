"""Dual-branch CNN-RNN sketch encoder.

The CNN branch stacks conv(3x3)-relu-maxpool(2) stages over the binary
raster and flattens; the RNN branch runs a stacked bidirectional GRU over
the stroke sequence and concatenates the two final hidden states. Branch
outputs are concatenated into one fully-connected late-fusion layer whose
activation is task-dependent: sigmoid for hashing (features must live in
(0,1) for thresholding), relu for the zero-shot embedding space. An
optional linear head on top of the fusion feature gives class
probabilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import ParameterSet, init_gru_params, ops, sequence_steps, uniform_fan_in
from .autodiff.rnn import gru_bidirectional
from .errors import DimensionMismatch, TopologyMismatch

FUSION_ACTIVATIONS = ("sigmoid", "relu")


@dataclass
class EncoderConfig:
    raster_size: int = 64
    cnn_stages: int = 2
    cnn_base_channels: int = 8
    rnn_layers: int = 1
    rnn_hidden: int = 32
    fusion_dim: int = 16
    fusion_activation: str = "sigmoid"
    num_classes: int = 10

    def __post_init__(self):
        if self.fusion_activation not in FUSION_ACTIVATIONS:
            raise ValueError(f"fusion_activation must be one of {FUSION_ACTIVATIONS}")
        if self.fusion_dim < 1:
            raise ValueError("fusion_dim must be >= 1")
        if self.raster_size % (2 ** self.cnn_stages) != 0:
            raise ValueError("raster_size must be divisible by 2**cnn_stages")

    @property
    def cnn_channels(self):
        return [self.cnn_base_channels * (2 ** i) for i in range(self.cnn_stages)]

    @property
    def cnn_out_dim(self):
        side = self.raster_size // (2 ** self.cnn_stages)
        return self.cnn_channels[-1] * side * side

    @property
    def rnn_out_dim(self):
        return 2 * self.rnn_hidden

    @property
    def fusion_in_dim(self):
        return self.cnn_out_dim + self.rnn_out_dim


@dataclass
class ClassifierHead:
    """Linear softmax head: weights (D, L), bias (L,)."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if self.weights.shape[1] != self.bias.shape[0]:
            raise DimensionMismatch(
                f"head weights {self.weights.shape} vs bias {self.bias.shape}")


@dataclass
class FusionFeature:
    vector: np.ndarray  # (D,)
    sample_id: int = -1
    class_id: int = -1


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

def init_encoder_params(config, seed, dtype=np.float64):
    """Fresh ParameterSet covering both branches, fusion, and all heads.

    Branch pretraining heads (cnn_head, rnn_head) are included so staged
    training and single-branch ablations share one checkpoint layout.
    """
    rng = np.random.default_rng(seed)
    pset = ParameterSet()
    in_ch = 1
    for i, out_ch in enumerate(config.cnn_channels):
        fan_in = in_ch * 9
        pset.add(f"cnn.conv{i}.w", uniform_fan_in(rng, (out_ch, in_ch, 3, 3), fan_in, dtype))
        pset.add(f"cnn.conv{i}.b", np.zeros(out_ch, dtype=dtype))
        in_ch = out_ch
    init_gru_params(pset, "rnn", 4, config.rnn_hidden, config.rnn_layers, rng, dtype)
    pset.add("fusion.w", uniform_fan_in(rng, (config.fusion_in_dim, config.fusion_dim),
                                        config.fusion_in_dim, dtype))
    pset.add("fusion.b", np.zeros(config.fusion_dim, dtype=dtype))
    pset.add("head.w", uniform_fan_in(rng, (config.fusion_dim, config.num_classes),
                                      config.fusion_dim, dtype))
    pset.add("head.b", np.zeros(config.num_classes, dtype=dtype))
    pset.add("cnn_head.w", uniform_fan_in(rng, (config.cnn_out_dim, config.num_classes),
                                          config.cnn_out_dim, dtype))
    pset.add("cnn_head.b", np.zeros(config.num_classes, dtype=dtype))
    pset.add("rnn_head.w", uniform_fan_in(rng, (config.rnn_out_dim, config.num_classes),
                                          config.rnn_out_dim, dtype))
    pset.add("rnn_head.b", np.zeros(config.num_classes, dtype=dtype))
    return pset


def validate_topology(params, config):
    checks = {
        "fusion.w": (config.fusion_in_dim, config.fusion_dim),
        "head.w": (config.fusion_dim, config.num_classes),
        "cnn.conv0.w": (config.cnn_channels[0], 1, 3, 3),
        "rnn.l0.fwd.W": (4, 3 * config.rnn_hidden),
    }
    for name, shape in checks.items():
        if name not in params:
            raise TopologyMismatch(f"missing parameter {name!r}")
        if params[name].values.shape != shape:
            raise TopologyMismatch(
                f"{name}: checkpoint shape {params[name].values.shape}, config wants {shape}")


# ---------------------------------------------------------------------------
# forward paths (graph-building; read .values for inference)
# ---------------------------------------------------------------------------

def raster_input(rasters, dtype=np.float64):
    """Stack binary rasters into (B, 1, S, S) with ink = 1.0, background = 0.0."""
    grids = [r.pixels if hasattr(r, "pixels") else r for r in rasters]
    x = 1.0 - np.stack(grids).astype(dtype) / 255.0
    return ops.constant(x[:, None, :, :])


def cnn_branch(x, params, config):
    out = x
    for i in range(config.cnn_stages):
        out = ops.maxpool2d(ops.relu(ops.conv2d(out, params[f"cnn.conv{i}.w"],
                                                params[f"cnn.conv{i}.b"])))
    return ops.reshape(out, (out.values.shape[0], -1))


def rnn_branch(sequences, params, config, dtype=np.float64):
    steps, mask = sequence_steps(sequences, dtype)
    return gru_bidirectional(steps, params, "rnn", config.rnn_layers, config.rnn_hidden,
                             mask=mask)


def fusion_layer(cnn_out, rnn_out, params, config):
    fused = ops.dense(ops.concat([cnn_out, rnn_out], axis=1), params["fusion.w"], params["fusion.b"])
    return ops.sigmoid(fused) if config.fusion_activation == "sigmoid" else ops.relu(fused)


def encode_batch(samples, params, config, dtype=np.float64):
    """Graph-building batch encode: returns the (B, D) fusion Tensor."""
    validate_topology(params, config)
    x = raster_input([s.raster for s in samples], dtype)
    cnn_out = cnn_branch(x, params, config)
    rnn_out = rnn_branch([s.sequence for s in samples], params, config, dtype)
    return fusion_layer(cnn_out, rnn_out, params, config)


def encode(sample, params, config, dtype=np.float64):
    """Single-sample fusion feature."""
    feat = encode_batch([sample], params, config, dtype)
    return FusionFeature(feat.values[0].copy(), sample.sample_id, sample.class_id)


def encode_branch_batch(samples, branch, params, config, dtype=np.float64):
    """One branch alone, as used for pretraining and the ablation models."""
    if branch == "cnn":
        return cnn_branch(raster_input([s.raster for s in samples], dtype), params, config)
    if branch == "rnn":
        return rnn_branch([s.sequence for s in samples], params, config, dtype)
    raise ValueError(f"unknown branch {branch!r}")


def encode_branch(sample, branch, params, config, dtype=np.float64):
    out = encode_branch_batch([sample], branch, params, config, dtype)
    return out.values[0].copy()


def head_from_params(params, name="head"):
    return ClassifierHead(params[f"{name}.w"].values.copy(), params[f"{name}.b"].values.copy())


def classify(feature, head):
    """Class probability vector from a fusion feature."""
    vec = feature.vector if isinstance(feature, FusionFeature) else np.asarray(feature)
    if vec.shape[0] != head.weights.shape[0]:
        raise DimensionMismatch(
            f"feature dim {vec.shape[0]} vs head input dim {head.weights.shape[0]}")
    logits = vec @ head.weights + head.bias
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()
