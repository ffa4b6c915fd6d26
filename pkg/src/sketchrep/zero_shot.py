"""Zero-shot recognition: class prototype management, the two-layer
prototype-embedding subnet, its training loop, and nearest-prototype
classification in ZSL / GZSL candidate regimes.

Prototypes are per-class semantic vectors (mean features of auxiliary
renderings, or loaded from a prototype file). The embedding subnet maps
between the prototype space and the sketch feature space; the default
direction embeds prototypes into sketch space, which avoids the hubness
degradation of the reverse direction and is kept as an ablation.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import ParameterSet, Tensor, backward, make_optimizer, ops, uniform_fan_in
from .autodiff.ops import constant
from .encoder import encode_batch
from .errors import (
    DimensionMismatch,
    EmptyCandidateSet,
    EmptyClass,
    MissingPrototype,
    SplitOverlap,
    TopologyMismatch,
)
from .hashing.train import extract_features
from .objectives import zsl_embedding_loss

DIRECTIONS = ("semantic_to_visual", "visual_to_semantic")


@dataclass
class ClassPrototype:
    class_id: int
    vector: np.ndarray
    source: str = "file"  # "file" or "synthetic_mean"

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if not np.all(np.isfinite(self.vector)):
            raise ValueError(f"prototype {self.class_id} has non-finite components")


@dataclass
class EveConfig:
    """Two dense layers with rectified-linear activations.

    semantic_to_visual maps prototype_dim -> hidden -> sketch_dim;
    visual_to_semantic swaps the endpoints.
    """

    prototype_dim: int
    hidden_dim: int
    sketch_dim: int
    direction: str = "semantic_to_visual"

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"direction must be one of {DIRECTIONS}")

    @property
    def in_dim(self):
        return self.prototype_dim if self.direction == "semantic_to_visual" else self.sketch_dim

    @property
    def out_dim(self):
        return self.sketch_dim if self.direction == "semantic_to_visual" else self.prototype_dim

    def swapped(self):
        other = ("visual_to_semantic" if self.direction == "semantic_to_visual"
                 else "semantic_to_visual")
        return EveConfig(self.prototype_dim, self.hidden_dim, self.sketch_dim, other)


def build_prototypes(features, labels, class_ids=None, source="synthetic_mean"):
    """Arithmetic-mean prototype per class from auxiliary features."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    present = {int(y) for y in labels}
    wanted = sorted(present) if class_ids is None else sorted(class_ids)
    protos = []
    for cid in wanted:
        if cid not in present:
            raise EmptyClass(cid)
        protos.append(ClassPrototype(cid, features[labels == cid].mean(axis=0), source))
    return protos


def init_eve_params(config, seed, dtype=np.float64):
    rng = np.random.default_rng(seed)
    pset = ParameterSet()
    pset.add("eve.fc1.w", uniform_fan_in(rng, (config.in_dim, config.hidden_dim),
                                         config.in_dim, dtype))
    pset.add("eve.fc1.b", np.zeros(config.hidden_dim, dtype=dtype))
    pset.add("eve.fc2.w", uniform_fan_in(rng, (config.hidden_dim, config.out_dim),
                                         config.hidden_dim, dtype))
    pset.add("eve.fc2.b", np.zeros(config.out_dim, dtype=dtype))
    return pset


def embed_batch(vectors, eve_params, config):
    """Graph forward of (B, in_dim) vectors through the two relu layers."""
    if isinstance(vectors, Tensor):
        x = vectors
    else:
        vectors = np.asarray(vectors)
        x = constant(vectors.astype(eve_params["eve.fc1.w"].values.dtype))
    if x.values.shape[1] != config.in_dim:
        raise DimensionMismatch(f"embedding input dim {x.values.shape[1]}, config wants {config.in_dim}")
    h = ops.relu(ops.dense(x, eve_params["eve.fc1.w"], eve_params["eve.fc1.b"]))
    return ops.relu(ops.dense(h, eve_params["eve.fc2.w"], eve_params["eve.fc2.b"]))


def embed_prototype(prototype, eve_params, config):
    """Embedded vector of one prototype (values, not a graph node)."""
    return embed_batch(prototype.vector[None, :], eve_params, config).values[0].copy()


def train_zsl(seen_samples, prototypes, se_params, se_config, eve_config,
              lam=1e-4, epochs=5, lr=1e-3, seed=0, batch_size=64,
              unseen_class_ids=None, dtype=np.float64):
    """Fit the embedding subnet against frozen sketch-encoder features.

    The sketch encoder parameters are never touched; only the embedding
    parameters are optimized (RMSprop). Returns (eve_params, log).
    """
    if se_config.fusion_activation != "relu":
        raise TopologyMismatch("zero-shot sketch encoder must use a relu fusion layer")
    if se_config.fusion_dim != eve_config.sketch_dim:
        raise TopologyMismatch(
            f"encoder fusion dim {se_config.fusion_dim} vs embedding sketch dim {eve_config.sketch_dim}")
    seen_ids = {s.class_id for s in seen_samples}
    if unseen_class_ids is not None and seen_ids & set(unseen_class_ids):
        raise SplitOverlap(f"seen/unseen classes overlap: {sorted(seen_ids & set(unseen_class_ids))}")
    proto_map = {p.class_id: p.vector for p in prototypes}
    for cid in sorted(seen_ids):
        if cid not in proto_map:
            raise MissingPrototype(cid)

    sketch_feats = extract_features(seen_samples, se_params, se_config, dtype)
    labels = np.array([s.class_id for s in seen_samples])
    proto_rows = np.stack([proto_map[int(y)] for y in labels]).astype(dtype)

    eve_params = init_eve_params(eve_config, seed, dtype)
    opt = make_optimizer("rmsprop", eve_params, lr=lr)
    rng = np.random.default_rng([seed, 7])
    log = []
    for epoch in range(1, epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(seen_samples))
        total, seen_n = 0.0, 0
        for start in range(0, len(order), batch_size):
            idx = order[start:start + batch_size]
            eve_params.zero_grads()
            if eve_config.direction == "semantic_to_visual":
                embedded = embed_batch(proto_rows[idx], eve_params, eve_config)
                loss = zsl_embedding_loss(constant(sketch_feats[idx]), embedded, eve_params, lam)
            else:
                embedded = embed_batch(sketch_feats[idx], eve_params, eve_config)
                loss = zsl_embedding_loss(constant(proto_rows[idx]), embedded, eve_params, lam)
            backward(loss)
            opt.step()
            total += loss.item() * len(idx)
            seen_n += len(idx)
        log.append({"stage": "eve", "epoch": epoch, "loss": total / seen_n,
                    "wall_time": round(time.perf_counter() - t0, 3)})
    return eve_params, log


def _candidate_matrix(candidates, eve_params, eve_config):
    """Embed candidates once; returns (class_ids, matrix in comparison space)."""
    class_ids = [p.class_id for p in candidates]
    vectors = np.stack([p.vector for p in candidates])
    if eve_config.direction == "semantic_to_visual":
        matrix = embed_batch(vectors, eve_params, eve_config).values
    else:
        matrix = vectors
    return class_ids, matrix


def classify_zsl_batch(samples, candidates, se_params, se_config, eve_params, eve_config,
                       mode="zsl", unseen_class_ids=None, dtype=np.float64):
    """Ranked class lists for a batch of sketches.

    mode "zsl" restricts candidates to the unseen classes (when given);
    "gzsl" ranks every candidate. Classes are ordered by ascending squared
    Euclidean distance, ties broken by ascending class_id.
    """
    if mode not in ("zsl", "gzsl"):
        raise ValueError(f"mode must be 'zsl' or 'gzsl', got {mode!r}")
    pool = list(candidates)
    if mode == "zsl" and unseen_class_ids is not None:
        pool = [p for p in pool if p.class_id in set(unseen_class_ids)]
    if not pool:
        raise EmptyCandidateSet("no candidate prototypes")

    class_ids, matrix = _candidate_matrix(pool, eve_params, eve_config)
    feats = extract_features(samples, se_params, se_config, dtype)
    if eve_config.direction == "visual_to_semantic":
        feats = embed_batch(feats, eve_params, eve_config).values

    diffs = feats[:, None, :] - matrix[None, :, :]
    dists = (diffs ** 2).sum(axis=2)
    rankings = []
    for row in dists:
        order = sorted(range(len(class_ids)), key=lambda i: (row[i], class_ids[i]))
        rankings.append([(class_ids[i], float(row[i])) for i in order])
    return rankings


def classify_zsl(sample, candidates, se_params, se_config, eve_params, eve_config,
                 mode="zsl", unseen_class_ids=None, dtype=np.float64):
    return classify_zsl_batch([sample], candidates, se_params, se_config, eve_params,
                              eve_config, mode, unseen_class_ids, dtype)[0]


# ---------------------------------------------------------------------------
# prototype file (line-delimited JSON)
# ---------------------------------------------------------------------------

def save_prototypes(path, prototypes):
    with open(path, "w") as f:
        for p in prototypes:
            f.write(json.dumps({"class_id": p.class_id, "dim": int(p.vector.size),
                                "values": [float(v) for v in p.vector]},
                               separators=(",", ":")) + "\n")


def load_prototypes(path, source="file"):
    protos = []
    dim = None
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            values = np.asarray(obj["values"], dtype=np.float64)
            if obj["dim"] != values.size:
                raise DimensionMismatch(f"prototype {obj['class_id']}: dim field {obj['dim']} "
                                        f"but {values.size} values")
            if dim is None:
                dim = values.size
            elif values.size != dim:
                raise DimensionMismatch("prototype dims are not uniform")
            protos.append(ClassPrototype(obj["class_id"], values, source))
    return protos
