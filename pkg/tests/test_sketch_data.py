import json

import numpy as np
import pytest

from oracles import line_pixels_reference

from sketchrep import sketch_data as sd
from sketchrep.errors import (
    EmptyDrawing,
    MalformedRecord,
    MismatchedArrays,
    QuotaExceedsPerClass,
    TooFewClasses,
)


class TestParseStrokeFile:
    def test_minimal_record(self, tmp_path):
        p = tmp_path / "one.ndjson"
        p.write_text('{"word":"star","drawing":[[[0,10],[0,10]]]}\n')
        records = sd.parse_stroke_file(p, "quickdraw_simplified")
        assert len(records) == 1
        label, strokes = records[0]
        assert label == "star"
        assert len(strokes) == 1 and len(strokes[0][0]) == 2

    def test_mismatched_arrays(self, tmp_path):
        p = tmp_path / "bad.ndjson"
        p.write_text('{"word":"x","drawing":[[[0],[0,1]]]}\n')
        with pytest.raises(MismatchedArrays) as e:
            sd.parse_stroke_file(p)
        assert e.value.line_no == 1

    def test_order_preserved(self, tmp_path):
        p = tmp_path / "three.ndjson"
        lines = [json.dumps({"word": w, "drawing": [[[0, 1], [0, 1]]]}) for w in "abc"]
        p.write_text("\n".join(lines) + "\n")
        records = sd.parse_stroke_file(p)
        assert [r[0] for r in records] == ["a", "b", "c"]

    def test_empty_drawing(self, tmp_path):
        p = tmp_path / "empty.ndjson"
        p.write_text('{"word":"x","drawing":[]}\n')
        with pytest.raises(EmptyDrawing):
            sd.parse_stroke_file(p)

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "junk.ndjson"
        p.write_text('{"word": "x", "drawing": [[[0,1],[0,\n')
        with pytest.raises(MalformedRecord):
            sd.parse_stroke_file(p)

    def test_canonical_roundtrip_bitexact(self, tmp_path):
        records = [
            sd.CanonicalRecord(0, 2, [[[0.5, 10.25], [1.0, 3.75]]]),
            sd.CanonicalRecord(1, 0, [[[0, 1, 2], [5, 6, 7]], [[9], [9]]]),
        ]
        p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        sd.write_canonical(p1, records)
        sd.write_canonical(p2, sd.read_canonical(p1))
        assert p1.read_bytes() == p2.read_bytes()


class TestEncodeSequence:
    def test_hand_computed_normalization(self):
        # one stroke (0,0)->(3,4): longer bbox side 4, normalized deltas
        # (0,0) then (0.75, 1)
        seq = sd.encode_sequence([[[0, 3], [0, 4]]])
        expected = np.array([[0.0, 0.0, 1.0, 0.0], [0.75, 1.0, 1.0, 0.0]])
        np.testing.assert_allclose(seq.steps, expected, atol=1e-12)

    def test_newstroke_flag(self):
        seq = sd.encode_sequence([[[0], [0]], [[1], [1]]])
        assert seq.steps[0][3] == 0 and seq.steps[0][2] == 1
        assert seq.steps[1][3] == 1 and seq.steps[1][2] == 0

    def test_single_point_degenerate_bbox(self):
        seq = sd.encode_sequence([[[7], [7]]])
        np.testing.assert_allclose(seq.steps, [[0.0, 0.0, 1.0, 0.0]])

    def test_flags_mutually_exclusive(self, tiny_dataset):
        samples, _, _ = tiny_dataset
        for s in samples:
            flags = s.sequence.steps[:, 2:]
            assert np.all(flags.sum(axis=1) == 1.0)
            assert np.all((flags == 0) | (flags == 1))

    def test_prefix_sum_reconstructs_normalized_points(self, tiny_dataset):
        _, _, records = tiny_dataset
        for rec in records[:8]:
            xs = np.concatenate([np.asarray(s[0], float) for s in rec.strokes])
            ys = np.concatenate([np.asarray(s[1], float) for s in rec.strokes])
            div = max(xs.max() - xs.min(), ys.max() - ys.min()) or 1.0
            normalized = np.column_stack([(xs - xs.min()) / div, (ys - ys.min()) / div])
            seq = sd.encode_sequence(rec.strokes)
            recon = np.cumsum(seq.steps[:, :2], axis=0)
            np.testing.assert_allclose(recon, normalized, atol=1e-9)

    def test_empty_raises(self):
        with pytest.raises(EmptyDrawing):
            sd.encode_sequence([])


class TestRasterize:
    def test_horizontal_run_matches_reference(self):
        r = sd.rasterize([[[0, 10], [5, 5]]], size=16)
        ys, xs = np.nonzero(r.pixels == 0)
        assert set(ys) == {8}
        ref = line_pixels_reference(int(xs.min()), 8, int(xs.max()), 8)
        assert {(x, y) for x, y in zip(xs, ys)} == ref

    def test_diagonal_matches_reference(self):
        r = sd.rasterize([[[0, 10], [0, 10]]], size=16)
        ys, xs = np.nonzero(r.pixels == 0)
        ref = line_pixels_reference(int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max()))
        assert {(x, y) for x, y in zip(xs, ys)} == ref

    def test_single_point_at_center(self):
        r = sd.rasterize([[[3], [3]]], size=16)
        assert np.count_nonzero(r.pixels == 0) == 1
        assert r.pixels[8, 8] == 0

    def test_deterministic(self):
        strokes = [[[0, 7, 3], [2, 9, 4]], [[1], [1]]]
        a = sd.rasterize(strokes, size=24)
        b = sd.rasterize(strokes, size=24)
        assert np.array_equal(a.pixels, b.pixels)

    def test_binary_values_and_ink_present(self, tiny_dataset):
        samples, _, _ = tiny_dataset
        for s in samples:
            assert set(np.unique(s.raster.pixels)) <= {0, 255}
            assert np.count_nonzero(s.raster.pixels == 0) > 0

    def test_size_validation(self):
        with pytest.raises(ValueError):
            sd.rasterize([[[0], [0]]], size=4)


class TestGenerateSynthetic:
    def test_deterministic(self):
        a = sd.generate_synthetic(2, 4, seed=7, quotas=sd.SplitQuotas(2, 1, 1, 0), raster_size=32)
        b = sd.generate_synthetic(2, 4, seed=7, quotas=sd.SplitQuotas(2, 1, 1, 0), raster_size=32)
        for sa, sb in zip(a[0], b[0]):
            assert np.array_equal(sa.raster.pixels, sb.raster.pixels)
            assert np.array_equal(sa.sequence.steps, sb.sequence.steps)

    def test_counts(self):
        samples, split, _ = sd.generate_synthetic(10, 100, seed=1, raster_size=32)
        assert len(samples) == 1000
        per_class = {}
        for s in samples:
            per_class[s.class_id] = per_class.get(s.class_id, 0) + 1
        assert all(v == 100 for v in per_class.values())

    def test_split_partition(self):
        quotas = sd.SplitQuotas(60, 20, 15, 5)
        samples, split, _ = sd.generate_synthetic(2, 100, seed=3, quotas=quotas, raster_size=32)
        assert len(split.assignment) == 200
        for name, want in quotas.as_dict().items():
            ids = split.ids_for(name)
            assert len(ids) == 2 * want
        all_ids = sum((split.ids_for(n) for n in sd.SPLIT_NAMES), [])
        assert sorted(all_ids) == sorted(s.sample_id for s in samples)

    def test_errors(self):
        with pytest.raises(TooFewClasses):
            sd.generate_synthetic(1, 10, seed=0)
        with pytest.raises(QuotaExceedsPerClass):
            sd.generate_synthetic(2, 4, seed=0, quotas=sd.SplitQuotas(4, 2, 1, 1))

    def test_split_csv_roundtrip(self, tmp_path, tiny_dataset):
        _, split, _ = tiny_dataset
        p = tmp_path / "split.csv"
        split.write_csv(p)
        loaded = sd.DatasetSplit.read_csv(p)
        assert loaded.assignment == split.assignment
        assert p.read_text().splitlines()[0] == "sample_id,split"
