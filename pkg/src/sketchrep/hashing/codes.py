"""Packed binary hash codes, exact Hamming-distance retrieval, and the
codes file format (magic "SFHC").

Bit packing is little-endian bit-in-word: bit j lives in word j // 64 at
position j % 64. Retrieval is an exact linear scan using the hardware
population count, ranked ascending with stable ties (gallery insertion
order).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..errors import EmptyStore, LengthMismatch, OutOfRangeFeature

WORD_BITS = 64

if hasattr(np, "bitwise_count"):
    _popcount = np.bitwise_count
else:  # SWAR fallback for older numpy
    def _popcount(x):
        m1 = np.uint64(0x5555555555555555)
        m2 = np.uint64(0x3333333333333333)
        m4 = np.uint64(0x0F0F0F0F0F0F0F0F)
        h01 = np.uint64(0x0101010101010101)
        x = x - ((x >> np.uint64(1)) & m1)
        x = (x & m2) + ((x >> np.uint64(2)) & m2)
        x = (x + (x >> np.uint64(4))) & m4
        return (x * h01) >> np.uint64(56)


def _n_words(length):
    return (length + WORD_BITS - 1) // WORD_BITS


@dataclass
class HashCode:
    """D-bit packed binary code."""

    words: np.ndarray  # (ceil(D/64),) uint64
    length: int
    sample_id: int = -1
    class_id: int = -1

    def __post_init__(self):
        if not (8 <= self.length <= 256):
            raise ValueError(f"code length must be in [8, 256], got {self.length}")
        self.words = np.ascontiguousarray(self.words, dtype=np.uint64)
        if self.words.shape != (_n_words(self.length),):
            raise LengthMismatch(f"expected {_n_words(self.length)} words for {self.length} bits")

    def bits(self):
        """Unpacked {0,1} uint8 array of length D."""
        return np.unpackbits(self.words.view(np.uint8), bitorder="little")[: self.length]


def pack_bits(bits, length):
    bits = np.asarray(bits, dtype=np.uint8)
    padded = np.zeros(_n_words(length) * WORD_BITS, dtype=np.uint8)
    padded[:length] = bits
    return np.packbits(padded, bitorder="little").view(np.dtype("<u8")).astype(np.uint64)


def quantize(feature, sample_id=None, class_id=None):
    """Threshold a sigmoid fusion feature into bits: bit j = 1 iff f_j >= 0.5.

    This matches sgn-based rounding everywhere except the measure-zero tie
    f_j = 0.5, which maps to 1 so the output stays binary.
    """
    from ..encoder import FusionFeature  # local import to avoid a cycle

    if isinstance(feature, FusionFeature):
        vec = feature.vector
        sample_id = feature.sample_id if sample_id is None else sample_id
        class_id = feature.class_id if class_id is None else class_id
    else:
        vec = np.asarray(feature)
    if vec.min() < 0.0 or vec.max() > 1.0:
        raise OutOfRangeFeature("feature components must lie in [0, 1]")
    bits = (vec >= 0.5).astype(np.uint8)
    return HashCode(pack_bits(bits, vec.shape[0]), vec.shape[0],
                    -1 if sample_id is None else sample_id,
                    -1 if class_id is None else class_id)


def quantize_batch(features):
    """(B, D) features in [0, 1] -> (B, D) {0,1} float and packed words."""
    features = np.asarray(features)
    if features.min() < 0.0 or features.max() > 1.0:
        raise OutOfRangeFeature("feature components must lie in [0, 1]")
    bits = (features >= 0.5).astype(np.uint8)
    words = np.stack([pack_bits(row, features.shape[1]) for row in bits])
    return bits.astype(np.float64), words


def hamming_distance(a, b):
    if a.length != b.length:
        raise LengthMismatch(f"{a.length} vs {b.length} bits")
    return int(_popcount(a.words ^ b.words).sum())


class CodeStore:
    """Immutable column of uniform-length codes with aligned labels."""

    def __init__(self, length, words, sample_ids, class_ids):
        self.length = length
        self.words = np.ascontiguousarray(words, dtype=np.uint64)
        self.sample_ids = np.asarray(sample_ids, dtype=np.int64)
        self.class_ids = np.asarray(class_ids, dtype=np.int64)
        if self.words.ndim != 2 or self.words.shape[1] != _n_words(length):
            raise LengthMismatch("word matrix width does not match code length")
        if len(self.sample_ids) != len(self.words) or len(self.class_ids) != len(self.words):
            raise LengthMismatch("label arrays not aligned with codes")
        if len(np.unique(self.sample_ids)) != len(self.sample_ids):
            raise ValueError("sample_ids must be unique")

    def __len__(self):
        return len(self.words)

    def __getitem__(self, i):
        return HashCode(self.words[i].copy(), self.length,
                        int(self.sample_ids[i]), int(self.class_ids[i]))

    @classmethod
    def from_codes(cls, codes):
        if not codes:
            raise EmptyStore("no codes")
        length = codes[0].length
        if any(c.length != length for c in codes):
            raise LengthMismatch("codes have mixed lengths")
        return cls(length,
                   np.stack([c.words for c in codes]),
                   [c.sample_id for c in codes],
                   [c.class_id for c in codes])


def retrieve(query, store, k=None):
    """Exact linear-scan ranking: ascending Hamming distance, stable ties.

    Returns a list of (sample_id, distance); k truncates the ranking.
    """
    if len(store) == 0:
        raise EmptyStore("cannot retrieve from an empty store")
    if query.length != store.length:
        raise LengthMismatch(f"query {query.length} vs store {store.length} bits")
    distances = scan_distances(query.words, store.words)
    order = np.argsort(distances, kind="stable")
    if k is not None:
        order = order[:k]
    return [(int(store.sample_ids[i]), int(distances[i])) for i in order]


def scan_distances(query_words, word_matrix):
    """Hamming distances of one packed query against N packed codes."""
    return _popcount(word_matrix ^ query_words[None, :]).sum(axis=1, dtype=np.int64)


def retrieve_labeled(query, store, k=None):
    """Like retrieve but yields (sample_id, class_id, distance) rows."""
    if len(store) == 0:
        raise EmptyStore("cannot retrieve from an empty store")
    if query.length != store.length:
        raise LengthMismatch(f"query {query.length} vs store {store.length} bits")
    distances = scan_distances(query.words, store.words)
    order = np.argsort(distances, kind="stable")
    if k is not None:
        order = order[:k]
    return [(int(store.sample_ids[i]), int(store.class_ids[i]), int(distances[i]))
            for i in order]


# ---------------------------------------------------------------------------
# codes file (magic "SFHC")
# ---------------------------------------------------------------------------

_CODES_MAGIC = b"SFHC"
_CODES_VERSION = 1


def save_store(path, store):
    with open(path, "wb") as f:
        f.write(_CODES_MAGIC)
        f.write(struct.pack("<IIQ", _CODES_VERSION, store.length, len(store)))
        for i in range(len(store)):
            f.write(struct.pack("<QI", int(store.sample_ids[i]), int(store.class_ids[i])))
            f.write(store.words[i].astype("<u8").tobytes())


def load_store(path):
    with open(path, "rb") as f:
        if f.read(4) != _CODES_MAGIC:
            raise ValueError(f"{path}: not a codes file")
        version, length, count = struct.unpack("<IIQ", f.read(16))
        if version != _CODES_VERSION:
            raise ValueError(f"{path}: unsupported codes version {version}")
        nw = _n_words(length)
        words = np.empty((count, nw), dtype=np.uint64)
        sample_ids = np.empty(count, dtype=np.int64)
        class_ids = np.empty(count, dtype=np.int64)
        for i in range(count):
            sid, cid = struct.unpack("<QI", f.read(12))
            sample_ids[i] = sid
            class_ids[i] = cid
            words[i] = np.frombuffer(f.read(8 * nw), dtype="<u8")
    return CodeStore(length, words, sample_ids, class_ids)
