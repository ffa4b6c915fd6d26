"""Quantization-encoding, Hamming retrieval, and the staged hashing trainer."""

from .codes import (
    CodeStore,
    HashCode,
    hamming_distance,
    load_store,
    pack_bits,
    quantize,
    quantize_batch,
    retrieve,
    retrieve_labeled,
    save_store,
    scan_distances,
)
from .train import TrainResult, TrainSchedule, encode_gallery, extract_features, train_hashing

__all__ = [
    "CodeStore",
    "HashCode",
    "TrainResult",
    "TrainSchedule",
    "encode_gallery",
    "extract_features",
    "hamming_distance",
    "load_store",
    "pack_bits",
    "quantize",
    "quantize_batch",
    "retrieve",
    "retrieve_labeled",
    "save_store",
    "scan_distances",
    "train_hashing",
]
