"""Sketch data handling: stroke-file parsing, vector/raster conversion,
synthetic dataset generation, and split management.

A sketch exists in two views that always travel together: a binary raster
(CNN input) and a 4-component stroke sequence (RNN input). The canonical
on-disk interchange is line-delimited JSON records; splits are a small CSV.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    EmptyDrawing,
    MalformedRecord,
    MismatchedArrays,
    QuotaExceedsPerClass,
    TooFewClasses,
)

SPLIT_NAMES = ("train", "val", "gallery", "query")

# A "raw polyline stroke" is a pair (xs, ys) of equal-length coordinate
# lists, matching the QuickDraw simplified-drawing shape.
Strokes = list


@dataclass
class StrokeSequence:
    """Ordered stroke steps: per step (dx, dy, s_continue, s_newstroke).

    Exactly one of the two pen flags is 1 in every step. Offsets are deltas
    from the previous point after bounding-box normalization.
    """

    steps: np.ndarray  # (T, 4) float64
    class_id: int = -1
    sample_id: int = -1

    def __post_init__(self):
        self.steps = np.asarray(self.steps, dtype=np.float64)
        if self.steps.ndim != 2 or self.steps.shape[1] != 4 or len(self.steps) == 0:
            raise EmptyDrawing()

    def __len__(self):
        return len(self.steps)


@dataclass
class RasterSketch:
    """Binary H×W pixel grid: 0 = ink, 255 = background."""

    pixels: np.ndarray  # (H, W) uint8, values in {0, 255}
    class_id: int = -1
    sample_id: int = -1

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)

    @property
    def size(self):
        return self.pixels.shape[0]


@dataclass
class SketchSample:
    """One sketch in both views, sharing sample_id and class_id."""

    raster: RasterSketch
    sequence: StrokeSequence
    class_id: int
    sample_id: int


@dataclass
class SplitQuotas:
    """Per-category sample counts for each split."""

    train: int
    val: int
    gallery: int
    query: int

    def total(self):
        return self.train + self.val + self.gallery + self.query

    def as_dict(self):
        return {"train": self.train, "val": self.val, "gallery": self.gallery, "query": self.query}


@dataclass
class DatasetSplit:
    """Disjoint split assignment covering every sample exactly once."""

    quotas: SplitQuotas
    assignment: dict = field(default_factory=dict)  # sample_id -> split name

    def ids_for(self, split):
        return sorted(sid for sid, s in self.assignment.items() if s == split)

    def write_csv(self, path):
        lines = ["sample_id,split"]
        for sid in sorted(self.assignment):
            lines.append(f"{sid},{self.assignment[sid]}")
        with open(path, "w") as f:
            f.write("\n".join(lines) + "\n")

    @staticmethod
    def read_csv(path, quotas=None):
        assignment = {}
        with open(path) as f:
            header = f.readline().strip()
            if header != "sample_id,split":
                raise MalformedRecord(1, f"bad split header {header!r}")
            for line_no, line in enumerate(f, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 2 or parts[1] not in SPLIT_NAMES:
                    raise MalformedRecord(line_no, "bad split row")
                assignment[int(parts[0])] = parts[1]
        return DatasetSplit(quotas=quotas, assignment=assignment)


@dataclass
class CanonicalRecord:
    """One line of the canonical interchange format."""

    sample_id: int
    class_id: int
    strokes: Strokes


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _validate_strokes(strokes, line_no):
    if not isinstance(strokes, list):
        raise MalformedRecord(line_no, "strokes is not a list")
    if len(strokes) == 0:
        raise EmptyDrawing(line_no)
    for stroke in strokes:
        if not isinstance(stroke, list) or len(stroke) != 2:
            raise MalformedRecord(line_no, "stroke is not an [xs, ys] pair")
        xs, ys = stroke
        if not isinstance(xs, list) or not isinstance(ys, list):
            raise MalformedRecord(line_no, "stroke coordinates are not lists")
        if len(xs) != len(ys):
            raise MismatchedArrays(line_no)
        if len(xs) == 0:
            raise MalformedRecord(line_no, "stroke has zero points")
        for v in xs + ys:
            if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
                raise MalformedRecord(line_no, "non-finite or non-numeric coordinate")


def parse_stroke_file(path, format="quickdraw_simplified"):
    """Parse a line-delimited stroke file into (label, strokes) records.

    format "quickdraw_simplified" expects {"word": str, "drawing": [...]},
    label is the word; format "canonical" expects
    {"sample_id": int, "class_id": int, "strokes": [...]}, label is the
    class_id. Order is preserved; coordinates are kept as parsed.
    """
    if format not in ("quickdraw_simplified", "canonical"):
        raise ValueError(f"unknown format {format!r}")
    records = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                raise MalformedRecord(line_no, "blank line")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(line_no, str(e)) from None
            if not isinstance(obj, dict):
                raise MalformedRecord(line_no, "record is not an object")
            if format == "quickdraw_simplified":
                if "word" not in obj or "drawing" not in obj:
                    raise MalformedRecord(line_no, "missing 'word' or 'drawing'")
                label, strokes = obj["word"], obj["drawing"]
            else:
                if not {"sample_id", "class_id", "strokes"} <= obj.keys():
                    raise MalformedRecord(line_no, "missing canonical keys")
                label, strokes = obj["class_id"], obj["strokes"]
            _validate_strokes(strokes, line_no)
            records.append((label, strokes))
    return records


def read_canonical(path):
    """Read canonical records with their sample ids."""
    records = []
    with open(path) as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                raise MalformedRecord(line_no, "blank line")
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedRecord(line_no, str(e)) from None
            if not isinstance(obj, dict) or not {"sample_id", "class_id", "strokes"} <= obj.keys():
                raise MalformedRecord(line_no, "missing canonical keys")
            _validate_strokes(obj["strokes"], line_no)
            records.append(CanonicalRecord(obj["sample_id"], obj["class_id"], obj["strokes"]))
    return records


def canonical_line(record):
    """Serialize one record; read_canonical of this line round-trips bit-exactly."""
    obj = {"sample_id": record.sample_id, "class_id": record.class_id, "strokes": record.strokes}
    return json.dumps(obj, separators=(",", ":"))


def write_canonical(path, records):
    with open(path, "w") as f:
        for record in records:
            f.write(canonical_line(record) + "\n")


# ---------------------------------------------------------------------------
# vector / raster conversion
# ---------------------------------------------------------------------------

def _all_points(strokes):
    xs = np.concatenate([np.asarray(s[0], dtype=np.float64) for s in strokes])
    ys = np.concatenate([np.asarray(s[1], dtype=np.float64) for s in strokes])
    return xs, ys


def encode_sequence(strokes, class_id=-1, sample_id=-1):
    """Convert raw polyline strokes into a 4-component step sequence.

    Coordinates are translated to the bounding-box origin and divided by the
    longer bbox side (clamped to 1 for degenerate boxes) so the drawing fits
    [0, 1] on its long axis; steps are consecutive-point deltas, the first
    taken from the origin. The first step of every stroke after the first
    carries s_newstroke = 1, all others s_continue = 1.
    """
    if not strokes or all(len(s[0]) == 0 for s in strokes):
        raise EmptyDrawing()
    xs, ys = _all_points(strokes)
    min_x, min_y = xs.min(), ys.min()
    extent = max(xs.max() - min_x, ys.max() - min_y)
    div = extent if extent > 0 else 1.0

    steps = []
    prev = (0.0, 0.0)
    for k, (sx, sy) in enumerate(strokes):
        for i in range(len(sx)):
            px = (float(sx[i]) - min_x) / div
            py = (float(sy[i]) - min_y) / div
            new_stroke = 1.0 if (k > 0 and i == 0) else 0.0
            steps.append((px - prev[0], py - prev[1], 1.0 - new_stroke, new_stroke))
            prev = (px, py)
    return StrokeSequence(np.array(steps, dtype=np.float64), class_id=class_id, sample_id=sample_id)


def _draw_line(pixels, x0, y0, x1, y1):
    # integer midpoint stepping, all octants, no anti-aliasing
    dx = abs(x1 - x0)
    sx = 1 if x0 < x1 else -1
    dy = -abs(y1 - y0)
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        pixels[y0, x0] = 0
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def rasterize(strokes, size=64, class_id=-1, sample_id=-1):
    """Render strokes onto a size×size binary grid (ink 0, background 255).

    The drawing is scaled (aspect preserved) into a centered box occupying
    90% of the canvas; consecutive points are joined with 1-pixel discrete
    lines. Deterministic for fixed input.
    """
    if size < 8:
        raise ValueError("raster size must be >= 8")
    if not strokes or all(len(s[0]) == 0 for s in strokes):
        raise EmptyDrawing()
    xs, ys = _all_points(strokes)
    min_x, max_x = xs.min(), xs.max()
    min_y, max_y = ys.min(), ys.max()
    cx, cy = (min_x + max_x) / 2.0, (min_y + max_y) / 2.0
    extent = max(max_x - min_x, max_y - min_y)
    scale = (0.9 * size) / extent if extent > 0 else 1.0

    pixels = np.full((size, size), 255, dtype=np.uint8)
    last = size - 1
    for sx, sy in strokes:
        px = np.floor((np.asarray(sx, dtype=np.float64) - cx) * scale + size / 2.0 + 0.5)
        py = np.floor((np.asarray(sy, dtype=np.float64) - cy) * scale + size / 2.0 + 0.5)
        px = np.clip(px, 0, last).astype(np.int64)
        py = np.clip(py, 0, last).astype(np.int64)
        if len(px) == 1:
            pixels[py[0], px[0]] = 0
            continue
        for i in range(len(px) - 1):
            _draw_line(pixels, px[i], py[i], px[i + 1], py[i + 1])
    return RasterSketch(pixels, class_id=class_id, sample_id=sample_id)


def build_sample(record, raster_size):
    """Materialize both views of a canonical record."""
    return SketchSample(
        raster=rasterize(record.strokes, raster_size, record.class_id, record.sample_id),
        sequence=encode_sequence(record.strokes, record.class_id, record.sample_id),
        class_id=record.class_id,
        sample_id=record.sample_id,
    )


def build_samples(records, raster_size):
    return [build_sample(r, raster_size) for r in records]


# ---------------------------------------------------------------------------
# synthetic shape families
# ---------------------------------------------------------------------------

def _resample(points, per_edge):
    """Insert evenly spaced points along each segment of a sparse polyline."""
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        for t in np.linspace(0, 1, per_edge + 1)[1:]:
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
    return np.array(out)


def _circle(rng, jitter):
    phase = rng.uniform(0, 2 * np.pi) if jitter > 0 else 0.0
    t = phase + np.linspace(0, 2 * np.pi, 25)
    return [np.column_stack([0.5 + 0.42 * np.cos(t), 0.5 + 0.42 * np.sin(t)])]


def _square(rng, jitter):
    corners = [(0.08, 0.08), (0.92, 0.08), (0.92, 0.92), (0.08, 0.92), (0.08, 0.08)]
    return [_resample(corners, 5)]


def _triangle(rng, jitter):
    corners = [(0.5, 0.06), (0.94, 0.9), (0.06, 0.9), (0.5, 0.06)]
    return [_resample(corners, 6)]


def _star(rng, jitter):
    t = -np.pi / 2 + np.linspace(0, 2 * np.pi, 11)
    r = np.where(np.arange(11) % 2 == 0, 0.46, 0.19)
    pts = np.column_stack([0.5 + r * np.cos(t), 0.5 + r * np.sin(t)])
    return [_resample([tuple(p) for p in pts], 2)]


def _zigzag(rng, jitter):
    xs = np.linspace(0.04, 0.96, 9)
    ys = np.where(np.arange(9) % 2 == 0, 0.72, 0.28)
    return [_resample(list(zip(xs, ys)), 2)]


def _spiral(rng, jitter):
    phase = rng.uniform(0, 2 * np.pi) if jitter > 0 else 0.0
    t = np.linspace(0, 2.4 * 2 * np.pi, 42)
    r = 0.03 + (0.44 - 0.03) * t / t[-1]
    return [np.column_stack([0.5 + r * np.cos(t + phase), 0.5 + r * np.sin(t + phase)])]


def _cross(rng, jitter):
    return [
        _resample([(0.5, 0.05), (0.5, 0.95)], 8),
        _resample([(0.05, 0.5), (0.95, 0.5)], 8),
    ]


def _arrow(rng, jitter):
    return [
        _resample([(0.06, 0.5), (0.8, 0.5)], 8),
        _resample([(0.6, 0.26), (0.94, 0.5), (0.6, 0.74)], 4),
    ]


def _wave(rng, jitter):
    xs = np.linspace(0.04, 0.96, 24)
    ys = 0.5 + 0.2 * np.sin(np.linspace(0, 2 * 2 * np.pi, 24))
    return [np.column_stack([xs, ys])]


def _grid(rng, jitter):
    return [
        _resample([(1 / 3, 0.06), (1 / 3, 0.94)], 5),
        _resample([(2 / 3, 0.06), (2 / 3, 0.94)], 5),
        _resample([(0.06, 1 / 3), (0.94, 1 / 3)], 5),
        _resample([(0.06, 2 / 3), (0.94, 2 / 3)], 5),
    ]


SHAPE_FAMILIES = (
    ("circle", _circle),
    ("square", _square),
    ("triangle", _triangle),
    ("star", _star),
    ("zigzag", _zigzag),
    ("spiral", _spiral),
    ("cross", _cross),
    ("arrow", _arrow),
    ("wave", _wave),
    ("grid", _grid),
)


def _jitter_strokes(polylines, rng, jitter):
    """Rotation, anisotropic stretch, scale, point noise, stroke splitting."""
    angle = rng.uniform(-0.20, 0.20) * jitter
    stretch_x = 1.0 + rng.uniform(-0.15, 0.15) * jitter
    stretch_y = 1.0 + rng.uniform(-0.15, 0.15) * jitter
    scale = 1.0 - rng.uniform(0.0, 0.2) * jitter
    ca, sa = np.cos(angle), np.sin(angle)

    out = []
    for pts in polylines:
        pts = np.asarray(pts, dtype=np.float64) - 0.5
        pts = pts * [stretch_x, stretch_y] * scale
        pts = pts @ np.array([[ca, sa], [-sa, ca]]) + 0.5
        pts = pts + rng.normal(0.0, 0.012 * jitter, size=pts.shape)
        # split long polylines into 1-3 strokes: varies pen-state structure
        # without moving any ink
        n_cuts = int(rng.integers(0, 3)) if (jitter > 0 and len(pts) >= 8) else 0
        cuts = sorted(rng.choice(np.arange(2, len(pts) - 2), size=n_cuts, replace=False)) if n_cuts else []
        start = 0
        for cut in list(cuts) + [len(pts)]:
            seg = pts[start:cut]
            if len(seg) >= 2:
                out.append(seg)
            start = cut
    # coordinates in a QuickDraw-like [0, 256) range, rounded for compact files
    return [
        [list(np.round(seg[:, 0] * 255.0, 3)), list(np.round(seg[:, 1] * 255.0, 3))]
        for seg in out
    ]


def synth_strokes(class_id, index, seed, jitter=1.0):
    """Deterministic strokes for one synthetic sample (per-sample derived seed)."""
    rng = np.random.default_rng([seed, class_id, index])
    name, family = SHAPE_FAMILIES[class_id]
    return _jitter_strokes(family(rng, jitter), rng, jitter)


def default_quotas(per_class):
    """Largest-remainder split of per_class into 60/10/20/10 percent quotas."""
    ratios = (0.6, 0.1, 0.2, 0.1)
    base = [int(per_class * r) for r in ratios]
    rem = per_class - sum(base)
    order = sorted(range(4), key=lambda i: per_class * ratios[i] - base[i], reverse=True)
    for i in range(rem):
        base[order[i % 4]] += 1
    return SplitQuotas(*base)


def generate_synthetic(classes, per_class, seed, quotas=None, raster_size=64, jitter=1.0):
    """Generate a desk-scale labelled dataset from parametric shape families.

    Fixed (seed, classes, per_class) yields bit-identical output; each sample
    derives its own RNG stream so results do not depend on generation order.
    Returns (samples, split, records).
    """
    if classes < 2:
        raise TooFewClasses("need at least 2 classes")
    if classes > len(SHAPE_FAMILIES):
        raise ValueError(f"only {len(SHAPE_FAMILIES)} shape families available")
    if per_class < 4:
        raise ValueError("per_class must be >= 4")
    if quotas is None:
        quotas = default_quotas(per_class)
    if quotas.total() != per_class:
        raise QuotaExceedsPerClass(
            f"split quotas sum to {quotas.total()}, per_class is {per_class}"
        )

    samples, records, assignment = [], [], {}
    boundaries = np.cumsum([quotas.train, quotas.val, quotas.gallery, quotas.query])
    for class_id in range(classes):
        for index in range(per_class):
            sample_id = class_id * per_class + index
            strokes = synth_strokes(class_id, index, seed, jitter)
            record = CanonicalRecord(sample_id, class_id, strokes)
            records.append(record)
            samples.append(build_sample(record, raster_size))
            assignment[sample_id] = SPLIT_NAMES[int(np.searchsorted(boundaries, index, side="right"))]
    return samples, DatasetSplit(quotas=quotas, assignment=assignment), records
