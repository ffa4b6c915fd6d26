"""Per-sketch image entropy, per-class entropy percentile bands, and the
keep/discard gating used when computing class feature centers.

Entropy here is the two-symbol Shannon entropy (base 2) of the ink /
background pixel proportions of a binary raster, so values live in [0, 1]
bits. Class bands keep the middle mass of each category's entropy
distribution; samples outside the band are treated as noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassMismatch, MixedClasses, TooFewSamples


@dataclass
class EntropyRecord:
    sample_id: int
    class_id: int
    entropy: float  # bits, in [0, 1] for binary rasters


@dataclass
class ClassEntropyBand:
    """Percentile band (h_lower, h_upper) for one class.

    phi and varphi are given in percent (e.g. 5 and 95); gamma is the kept
    fraction varphi% - phi%.
    """

    class_id: int
    h_lower: float
    h_upper: float
    phi: float
    varphi: float

    def __post_init__(self):
        if not (0.0 <= self.phi < self.varphi <= 100.0):
            raise ValueError(f"need 0 <= phi < varphi <= 100, got ({self.phi}, {self.varphi})")

    @property
    def gamma(self):
        return (self.varphi - self.phi) / 100.0


def image_entropy(raster):
    """Two-symbol entropy of a binary raster: -sum_i p_i log2 p_i, i in {0, 255}.

    Zero-probability terms contribute 0, so a blank raster scores 0.0 and a
    half-ink raster scores 1.0.
    """
    pixels = np.asarray(raster.pixels if hasattr(raster, "pixels") else raster)
    p_ink = float(np.count_nonzero(pixels == 0)) / pixels.size
    h = 0.0
    for p in (p_ink, 1.0 - p_ink):
        if p > 0.0:
            h -= p * np.log2(p)
    return float(h)


def entropy_records(samples):
    """EntropyRecord per sample, preserving order."""
    return [
        EntropyRecord(s.sample_id, s.class_id, image_entropy(s.raster))
        for s in samples
    ]


def class_entropy_band(records, phi=5.0, varphi=95.0):
    """Percentile band of one class's entropy values.

    Percentiles use linear interpolation between closest ranks
    (rank = q * (n - 1) over the 0-indexed sorted values).
    """
    if len(records) < 2:
        raise TooFewSamples(f"need >= 2 records, got {len(records)}")
    class_ids = {r.class_id for r in records}
    if len(class_ids) != 1:
        raise MixedClasses(f"records span classes {sorted(class_ids)}")
    values = np.array([r.entropy for r in records], dtype=np.float64)
    h_lower, h_upper = np.percentile(values, [phi, varphi], method="linear")
    return ClassEntropyBand(records[0].class_id, float(h_lower), float(h_upper), phi, varphi)


def gate(record, band):
    """1 iff the record's entropy falls inside the band.

    Inequalities are strict on both sides, except that a band edge sitting at
    an extreme percentile (phi = 0 lower, varphi = 100 upper) performs no
    filtering and is therefore inclusive; without that, the (0, 100) band
    would discard the min/max samples it is meant to keep.
    """
    if record.class_id != band.class_id:
        raise ClassMismatch(f"record class {record.class_id} vs band class {band.class_id}")
    h = record.entropy
    low_ok = h > band.h_lower or (band.phi == 0.0 and h == band.h_lower)
    high_ok = h < band.h_upper or (band.varphi == 100.0 and h == band.h_upper)
    return 1 if (low_ok and high_ok) else 0


def bands_by_class(records, phi=5.0, varphi=95.0):
    """Compute one band per class present in the records."""
    by_class = {}
    for r in records:
        by_class.setdefault(r.class_id, []).append(r)
    return {
        cid: class_entropy_band(rs, phi, varphi)
        for cid, rs in sorted(by_class.items())
    }


def entropy_histogram(records, bins=30, lo=0.0, hi=1.0):
    """Plot-ready histogram rows (bin_lo, bin_hi, count)."""
    values = [r.entropy for r in records]
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(len(counts))]
