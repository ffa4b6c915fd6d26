"""Retrieval and recognition metrics.

Relevance means a gallery item shares the query's class. Average precision
uses the gallery-R denominator: the total count of relevant items present
in the ranked gallery, not the truncation depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NoRelevantItems, SingleClass


@dataclass
class RetrievalResult:
    """One query's ranked gallery: rows of (sample_id, class_id, distance)."""

    query_sample_id: int
    query_class_id: int
    ranking: list

    def relevance(self):
        return np.array([1 if cid == self.query_class_id else 0 for _, cid, _ in self.ranking])


@dataclass
class DistanceStats:
    d1: float  # mean intra-class distance (sample to its class centroid)
    d2: float  # mean inter-class distance (between class centroids)

    @property
    def ratio(self):
        if self.d2 <= 0:
            raise SingleClass("d2 is zero; ratio undefined")
        return self.d1 / self.d2


def average_precision(result):
    """AP = (1/R) * sum over relevant ranks r of precision@r."""
    rel = result.relevance()
    if len(rel) == 0:
        raise NoRelevantItems("empty gallery")
    total_relevant = int(rel.sum())
    if total_relevant == 0:
        raise NoRelevantItems(f"query {result.query_sample_id} has no relevant gallery items")
    cum = np.cumsum(rel)
    ranks = np.arange(1, len(rel) + 1)
    return float((cum[rel == 1] / ranks[rel == 1]).sum() / total_relevant)


def mean_average_precision(results):
    return float(np.mean([average_precision(r) for r in results]))


def precision_at_k(result, k):
    """Fraction of the top min(k, N) items sharing the query class."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rel = result.relevance()
    top = rel[: min(k, len(rel))]
    return float(top.mean()) if len(top) else 0.0


def precision_recall_curve(result):
    """One (recall, precision) point per rank."""
    rel = result.relevance()
    total_relevant = int(rel.sum())
    if total_relevant == 0:
        raise NoRelevantItems(f"query {result.query_sample_id} has no relevant gallery items")
    cum = np.cumsum(rel)
    ranks = np.arange(1, len(rel) + 1)
    return list(zip((cum / total_relevant).tolist(), (cum / ranks).tolist()))


def aggregate_pr_curve(results):
    """Mean recall and precision at each rank across queries (equal lengths)."""
    curves = [precision_recall_curve(r) for r in results]
    n = min(len(c) for c in curves)
    rows = []
    for rank in range(n):
        rec = float(np.mean([c[rank][0] for c in curves]))
        prec = float(np.mean([c[rank][1] for c in curves]))
        rows.append((rank + 1, rec, prec))
    return rows


def distance_stats(features, labels):
    """Centroid-based intra/inter class distance statistics.

    d1: mean over samples of the Euclidean distance to their class
    centroid. d2: mean over unordered centroid pairs of the centroid
    distance.
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    class_ids = np.unique(labels)
    if len(class_ids) < 2:
        raise SingleClass("need >= 2 classes for inter-class distances")
    centroids = {int(c): features[labels == c].mean(axis=0) for c in class_ids}

    intra = [np.linalg.norm(f - centroids[int(y)]) for f, y in zip(features, labels)]
    inter = []
    ids = sorted(centroids)
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            inter.append(np.linalg.norm(centroids[ids[i]] - centroids[ids[j]]))
    return DistanceStats(d1=float(np.mean(intra)), d2=float(np.mean(inter)))


def hit_at_k(rankings, truths, k):
    """Fraction of samples whose true class appears in the ranking's top k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(rankings) != len(truths):
        raise LengthMismatch(f"{len(rankings)} rankings vs {len(truths)} truths")
    hits = 0
    for ranked, truth in zip(rankings, truths):
        top = [c[0] if isinstance(c, tuple) else c for c in ranked[:k]]
        hits += int(truth in top)
    return hits / len(rankings)


def classification_accuracy(predictions, truths):
    predictions = np.asarray(predictions)
    truths = np.asarray(truths)
    if predictions.shape != truths.shape or len(predictions) == 0:
        raise LengthMismatch(f"{predictions.shape} predictions vs {truths.shape} truths")
    return float((predictions == truths).mean())


def retrieval_results(query_store, gallery_store, k=None):
    """Rank every query code against the gallery store."""
    from .hashing.codes import retrieve_labeled

    results = []
    for i in range(len(query_store)):
        code = query_store[i]
        results.append(RetrievalResult(code.sample_id, code.class_id,
                                       retrieve_labeled(code, gallery_store, k)))
    return results
