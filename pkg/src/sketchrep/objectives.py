"""Loss functions for the hashing and zero-shot models.

All losses are graph ops over the autodiff Tensors: call backward() on the
returned scalar to populate gradients. Class centers and binary codes enter
as constants, so gradients flow to features (and, for the zero-shot loss,
the embedding parameters) only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .autodiff import ops
from .autodiff.ops import constant, mean_row_sumsq, softmax_cross_entropy
from .entropy_filter import gate
from .errors import (
    DimensionMismatch,
    EmptyBatch,
    EmptyClassAfterGating,
    MissingCenter,
    NonBinaryCode,
)

CENTER_NORMALIZATIONS = ("literal_gamma", "actual_count")


@dataclass
class ClassCenter:
    """Fixed per-class feature center; immutable once computed."""

    class_id: int
    vector: np.ndarray
    kept_count: int
    normalization: str = "literal_gamma"


@dataclass
class LossWeights:
    lambda_scl: float = 0.01
    lambda_ql: float = 0.0001
    lambda_zsl: float = 1e-4

    def __post_init__(self):
        for v in (self.lambda_scl, self.lambda_ql, self.lambda_zsl):
            if not np.isfinite(v) or v < 0:
                raise ValueError("loss weights must be finite and non-negative")


def cross_entropy_loss(features, labels, head_w, head_b):
    """Mean negative log softmax probability of the true class (natural log)."""
    if features.values.shape[0] == 0:
        raise EmptyBatch("no features")
    return softmax_cross_entropy(ops.dense(features, head_w, head_b), labels)


def _centers_matrix(labels, centers_map, dim, dtype):
    rows = np.empty((len(labels), dim), dtype=dtype)
    for i, y in enumerate(labels):
        if int(y) not in centers_map:
            raise MissingCenter(int(y))
        rows[i] = centers_map[int(y)]
    return rows


def sketch_center_loss(features, labels, centers):
    """Mean squared distance of each feature to its fixed class center.

    centers: {class_id: vector} or a list of ClassCenter. Centers carry no
    gradient.
    """
    if features.values.shape[0] == 0:
        raise EmptyBatch("no features")
    centers_map = centers if isinstance(centers, dict) else {c.class_id: c.vector for c in centers}
    target = _centers_matrix(labels, centers_map, features.values.shape[1], features.values.dtype)
    return mean_row_sumsq(ops.sub(features, constant(target)))


class CommonCenters:
    """Mini-batch-updated running class centers (the CL ablation baseline).

    Centers initialize lazily at the first batch mean of their class and
    then move toward each batch's class mean at rate alpha. The loss for a
    batch uses the centers as they stand before that batch's update.
    """

    def __init__(self, alpha=0.5):
        self.alpha = alpha
        self.centers = {}

    def loss(self, features, labels):
        if features.values.shape[0] == 0:
            raise EmptyBatch("no features")
        vals = features.values
        labels = np.asarray(labels)
        for y in np.unique(labels):
            if int(y) not in self.centers:
                self.centers[int(y)] = vals[labels == y].mean(axis=0).astype(np.float64)
        target = _centers_matrix(labels, self.centers, vals.shape[1], vals.dtype)
        out = mean_row_sumsq(ops.sub(features, constant(target)))
        # batch update after the loss snapshot; features treated as data
        for y in np.unique(labels):
            members = vals[labels == y]
            delta = (self.centers[int(y)] - members.astype(np.float64)).sum(axis=0) / (1.0 + len(members))
            self.centers[int(y)] = self.centers[int(y)] - self.alpha * delta
        return out


def common_center_loss(features, labels, running_centers):
    return running_centers.loss(features, labels)


def quantization_loss(features, codes):
    """Mean squared distance between features and their fixed binary codes."""
    codes = np.asarray(codes)
    if codes.shape != features.values.shape:
        raise DimensionMismatch(f"codes {codes.shape} vs features {features.values.shape}")
    if not np.all((codes == 0) | (codes == 1)):
        raise NonBinaryCode("codes must be exactly 0 or 1")
    return mean_row_sumsq(ops.sub(features, constant(codes.astype(features.values.dtype))))


def full_hashing_loss(features, labels, head_w, head_b, centers, codes, weights):
    """L_cel + lambda_scl * L_scl + lambda_ql * L_ql with codes held fixed.

    Returns (total, parts) where parts holds the unweighted component values.
    """
    cel = cross_entropy_loss(features, labels, head_w, head_b)
    total = cel
    parts = {"cel": cel.item(), "scl": 0.0, "ql": 0.0}
    if weights.lambda_scl > 0:
        scl = sketch_center_loss(features, labels, centers)
        parts["scl"] = scl.item()
        total = ops.add(total, ops.mul_const(scl, weights.lambda_scl))
    if weights.lambda_ql > 0:
        ql = quantization_loss(features, codes)
        parts["ql"] = ql.item()
        total = ops.add(total, ops.mul_const(ql, weights.lambda_ql))
    return total, parts


def compute_class_centers(features, entropy_records, bands, normalization="literal_gamma"):
    """Entropy-gated fixed class centers from pretrained-stage features.

    features: {sample_id: vector}. literal_gamma divides the gated sum by
    gamma * |K^y| (the class size scaled by the nominal kept fraction);
    actual_count divides by the number actually kept.
    """
    if normalization not in CENTER_NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {CENTER_NORMALIZATIONS}")
    by_class = {}
    for rec in entropy_records:
        by_class.setdefault(rec.class_id, []).append(rec)

    centers = []
    for class_id in sorted(by_class):
        band = bands[class_id]
        kept = [features[r.sample_id] for r in by_class[class_id] if gate(r, band)]
        if not kept:
            raise EmptyClassAfterGating(class_id)
        total = np.sum(np.asarray(kept, dtype=np.float64), axis=0)
        if normalization == "literal_gamma":
            denom = band.gamma * len(by_class[class_id])
        else:
            denom = float(len(kept))
        centers.append(ClassCenter(class_id, total / denom, len(kept), normalization))
    return centers


def zsl_embedding_loss(sketch_features, embedded_prototypes, eve_params, lam):
    """Mean squared sketch-to-embedded-prototype distance plus ridge term.

    sketch_features come from the frozen sketch encoder (constant);
    embedded_prototypes is the graph output of the embedding subnet, so
    gradients reach only the embedding parameters.
    """
    if embedded_prototypes.values.shape != sketch_features.values.shape:
        raise DimensionMismatch(
            f"prototypes {embedded_prototypes.values.shape} vs sketches {sketch_features.values.shape}")
    total = mean_row_sumsq(ops.sub(sketch_features, embedded_prototypes))
    if lam > 0:
        reg = None
        for _, t in eve_params.items():
            term = ops.sum_all(ops.mul(t, t))
            reg = term if reg is None else ops.add(reg, term)
        total = ops.add(total, ops.mul_const(reg, lam))
    return total


# ---------------------------------------------------------------------------
# centers file (magic "SFCN")
# ---------------------------------------------------------------------------

_CENTERS_MAGIC = b"SFCN"


def save_centers(path, centers):
    with open(path, "wb") as f:
        f.write(_CENTERS_MAGIC)
        f.write(struct.pack("<I", len(centers)))
        for c in centers:
            vec = np.asarray(c.vector, dtype="<f8")
            f.write(struct.pack("<II", c.class_id, vec.size))
            f.write(vec.tobytes())
            f.write(struct.pack("<I", c.kept_count))


def load_centers(path):
    centers = []
    with open(path, "rb") as f:
        if f.read(4) != _CENTERS_MAGIC:
            raise ValueError(f"{path}: not a centers file")
        (count,) = struct.unpack("<I", f.read(4))
        for _ in range(count):
            class_id, dim = struct.unpack("<II", f.read(8))
            vec = np.frombuffer(f.read(8 * dim), dtype="<f8").astype(np.float64)
            (kept,) = struct.unpack("<I", f.read(4))
            centers.append(ClassCenter(class_id, vec, kept))
    return centers
