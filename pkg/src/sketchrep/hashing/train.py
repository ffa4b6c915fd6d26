"""Staged training of the hashing model with alternating binary-code
updates.

Stages, in order: pretrain the CNN branch (cross entropy through a
temporary head), pretrain the RNN branch likewise, fine-tune the fused
model, compute entropy-gated class centers and fine-tune with the center
loss added, then alternate between updating the network under the full
loss with codes fixed and re-quantizing the codes with the network fixed.
Every stage is skippable by setting its epoch count to zero, which is how
the ablation variants (CEL-only, CEL+CL, CEL+SCL) are produced.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..autodiff import backward, make_optimizer, ops
from ..encoder import (
    cnn_branch,
    encode_batch,
    encode_branch_batch,
    init_encoder_params,
    raster_input,
)
from ..entropy_filter import bands_by_class, entropy_records
from ..errors import EmptyBatch
from ..objectives import (
    CommonCenters,
    LossWeights,
    compute_class_centers,
    cross_entropy_loss,
    full_hashing_loss,
    sketch_center_loss,
)
from .codes import CodeStore, pack_bits, quantize_batch

CENTER_MODES = ("sketch", "common")


@dataclass
class TrainSchedule:
    pretrain_cnn_epochs: int = 3
    pretrain_rnn_epochs: int = 3
    fuse_epochs: int = 3
    scl_epochs: int = 3
    alt_iterations: int = 2
    inner_epochs: int = 1
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    batch_size: int = 64
    lr: float = 1e-3
    optimizer: str = "adam"
    center_mode: str = "sketch"
    common_center_alpha: float = 0.5
    phi: float = 5.0
    varphi: float = 95.0
    center_normalization: str = "literal_gamma"

    def __post_init__(self):
        counts = (self.pretrain_cnn_epochs, self.pretrain_rnn_epochs, self.fuse_epochs,
                  self.scl_epochs, self.alt_iterations, self.inner_epochs)
        if any(c < 0 for c in counts):
            raise ValueError("schedule counts must be >= 0")
        if self.alt_iterations > 0 and self.inner_epochs < 1:
            raise ValueError("alternation requires inner_epochs >= 1")
        if self.center_mode not in CENTER_MODES:
            raise ValueError(f"center_mode must be one of {CENTER_MODES}")


@dataclass
class TrainResult:
    params: object
    centers: list
    store: CodeStore
    log: list


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _run_stage(stage, epochs, samples, labels, params, prefixes, schedule, stage_seed,
               loss_fn, log, dtype, hook=None):
    """One optimization stage; loss_fn(batch_idx) -> (loss Tensor, parts)."""
    if epochs == 0:
        return
    opt = make_optimizer(schedule.optimizer, params.subset(prefixes), lr=schedule.lr)
    rng = np.random.default_rng([schedule.seed, stage_seed])
    n = len(samples)
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        sums, seen = {}, 0
        for idx in _batches(n, schedule.batch_size, rng):
            params.zero_grads()
            loss, parts = loss_fn(idx)
            backward(loss)
            opt.step()
            for k, v in parts.items():
                sums[k] = sums.get(k, 0.0) + v * len(idx)
            seen += len(idx)
        record = {"stage": stage, "epoch": epoch}
        record.update({k: v / seen for k, v in sorted(sums.items())})
        record["wall_time"] = round(time.perf_counter() - t0, 3)
        log.append(record)
    if hook is not None:
        hook(stage, params)


def extract_features(samples, params, config, dtype, batch_size=256):
    """Inference pass over a sample list -> (N, D) fusion features."""
    rows = []
    for start in range(0, len(samples), batch_size):
        rows.append(encode_batch(samples[start:start + batch_size], params, config, dtype).values)
    return np.concatenate(rows) if rows else np.zeros((0, config.fusion_dim))


def train_hashing(train_samples, config, schedule, dtype=np.float32, stage_hook=None):
    """Run the full staged procedure and return params, centers, codes, log.

    The returned store holds the final quantization of the training-set
    features, ordered like train_samples. Deterministic for a fixed seed.
    """
    if not train_samples:
        raise EmptyBatch("no training samples")
    if config.fusion_activation != "sigmoid":
        raise ValueError("hashing needs a sigmoid fusion layer")
    labels = np.array([s.class_id for s in train_samples], dtype=np.int64)
    params = init_encoder_params(config, schedule.seed, dtype)
    log = []

    # 1. CNN branch from scratch
    def cnn_loss(idx):
        batch = [train_samples[i] for i in idx]
        feats = encode_branch_batch(batch, "cnn", params, config, dtype)
        loss = cross_entropy_loss(feats, labels[idx], params["cnn_head.w"], params["cnn_head.b"])
        return loss, {"cel": loss.item()}

    _run_stage("pretrain_cnn", schedule.pretrain_cnn_epochs, train_samples, labels, params,
               ("cnn.", "cnn_head."), schedule, 1, cnn_loss, log, dtype, stage_hook)

    # 2. RNN branch from scratch
    def rnn_loss(idx):
        batch = [train_samples[i] for i in idx]
        feats = encode_branch_batch(batch, "rnn", params, config, dtype)
        loss = cross_entropy_loss(feats, labels[idx], params["rnn_head.w"], params["rnn_head.b"])
        return loss, {"cel": loss.item()}

    _run_stage("pretrain_rnn", schedule.pretrain_rnn_epochs, train_samples, labels, params,
               ("rnn.", "rnn_head."), schedule, 2, rnn_loss, log, dtype, stage_hook)

    # 3. connect branches via the fusion layer, fine-tune with CEL
    def fuse_loss(idx):
        batch = [train_samples[i] for i in idx]
        feats = encode_batch(batch, params, config, dtype)
        loss = cross_entropy_loss(feats, labels[idx], params["head.w"], params["head.b"])
        return loss, {"cel": loss.item()}

    _run_stage("fuse", schedule.fuse_epochs, train_samples, labels, params,
               ("cnn.", "rnn.", "fusion.", "head."), schedule, 3, fuse_loss, log, dtype, stage_hook)

    # 4. fixed entropy-gated centers from the stage-3 model, then CEL + SCL
    centers = []
    need_centers = schedule.center_mode == "sketch" and (
        schedule.scl_epochs > 0
        or (schedule.alt_iterations > 0 and schedule.weights.lambda_scl > 0))
    if need_centers:
        records = entropy_records(train_samples)
        bands = bands_by_class(records, schedule.phi, schedule.varphi)
        pretrained = extract_features(train_samples, params, config, dtype)
        feature_map = {s.sample_id: pretrained[i] for i, s in enumerate(train_samples)}
        centers = compute_class_centers(feature_map, records, bands,
                                        schedule.center_normalization)
    centers_map = {c.class_id: c.vector for c in centers}
    common = CommonCenters(schedule.common_center_alpha) if schedule.center_mode == "common" else None

    def center_stage_loss(idx):
        batch = [train_samples[i] for i in idx]
        feats = encode_batch(batch, params, config, dtype)
        cel = cross_entropy_loss(feats, labels[idx], params["head.w"], params["head.b"])
        if common is not None:
            ctr = common.loss(feats, labels[idx])
        else:
            ctr = sketch_center_loss(feats, labels[idx], centers_map)
        total = ops.add(cel, ops.mul_const(ctr, schedule.weights.lambda_scl))
        return total, {"cel": cel.item(), "scl": ctr.item()}

    _run_stage("center", schedule.scl_epochs, train_samples, labels, params,
               ("cnn.", "rnn.", "fusion.", "head."), schedule, 4, center_stage_loss, log,
               dtype, stage_hook)

    # 5. alternate: fix codes, update the network under the full loss;
    #    fix the network, re-quantize the codes
    if schedule.alt_iterations > 0:
        code_bits, _ = quantize_batch(extract_features(train_samples, params, config, dtype))
        opt = make_optimizer(schedule.optimizer,
                             params.subset(("cnn.", "rnn.", "fusion.", "head.")), lr=schedule.lr)
        rng = np.random.default_rng([schedule.seed, 5])
        for it in range(1, schedule.alt_iterations + 1):
            for epoch in range(1, schedule.inner_epochs + 1):
                t0 = time.perf_counter()
                sums, seen = {}, 0
                for idx in _batches(len(train_samples), schedule.batch_size, rng):
                    batch = [train_samples[i] for i in idx]
                    params.zero_grads()
                    feats = encode_batch(batch, params, config, dtype)
                    loss, parts = full_hashing_loss(feats, labels[idx], params["head.w"],
                                                    params["head.b"], centers_map,
                                                    code_bits[idx], schedule.weights)
                    parts["total"] = loss.item()
                    backward(loss)
                    opt.step()
                    for k, v in parts.items():
                        sums[k] = sums.get(k, 0.0) + v * len(idx)
                    seen += len(idx)
                record = {"stage": "alternate", "iteration": it, "epoch": epoch}
                record.update({k: v / seen for k, v in sorted(sums.items())})
                record["wall_time"] = round(time.perf_counter() - t0, 3)
                log.append(record)
            code_bits, _ = quantize_batch(extract_features(train_samples, params, config, dtype))
        if stage_hook is not None:
            stage_hook("alternate", params)

    final_feats = extract_features(train_samples, params, config, dtype)
    bits, words = quantize_batch(final_feats)
    store = CodeStore(config.fusion_dim, words,
                      [s.sample_id for s in train_samples], labels)
    return TrainResult(params=params, centers=centers, store=store, log=log)


def encode_gallery(samples, params, config, dtype=np.float64, batch_size=256):
    """Quantize a sample list into a CodeStore, order-preserving."""
    if not samples:
        return CodeStore(config.fusion_dim,
                         np.zeros((0, (config.fusion_dim + 63) // 64), dtype=np.uint64), [], [])
    feats = extract_features(samples, params, config, dtype, batch_size)
    _, words = quantize_batch(feats)
    return CodeStore(config.fusion_dim, words,
                     [s.sample_id for s in samples], [s.class_id for s in samples])
