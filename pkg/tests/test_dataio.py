import json
import struct

import numpy as np
import pytest

from cfdet import dataio
from cfdet.errors import DataValidationError, FormatError, VersionMismatchError


class TestTensorFile:
    def test_header_and_payload_size(self, tmp_path):
        path = tmp_path / "t.icfe"
        dataio.write_tensor_file(path, np.array([[1.0, 2.0]], dtype=np.float32))
        # magic(4) + version(4) + dim(4) + count(8) + 2 floats(8)
        assert path.stat().st_size == 28

    def test_round_trip_bit_exact_10k(self, tmp_path):
        rng = np.random.default_rng(0)
        path = tmp_path / "m.icfe"
        for i in range(10_000):
            m = rng.standard_normal((rng.integers(1, 7), rng.integers(1, 7))).astype(np.float32)
            dataio.write_tensor_file(path, m)
            back = dataio.read_tensor_file(path)
            assert back.dtype == np.float32
            assert np.array_equal(back, m)

    def test_round_trip_extreme_values(self, tmp_path):
        m = np.array(
            [[np.finfo(np.float32).max, np.finfo(np.float32).tiny, -0.0, 1e-45]],
            dtype=np.float32,
        )
        dataio.write_tensor_file(tmp_path / "x.icfe", m)
        back = dataio.read_tensor_file(tmp_path / "x.icfe")
        assert back.tobytes() == m.tobytes()

    def test_zero_rows_rejected(self, tmp_path):
        with pytest.raises(DataValidationError):
            dataio.write_tensor_file(tmp_path / "t.icfe", np.zeros((0, 3), dtype=np.float32))

    def test_nan_rejected(self, tmp_path):
        with pytest.raises(DataValidationError):
            dataio.write_tensor_file(tmp_path / "t.icfe", np.array([[np.nan, 1.0]]))

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "t.icfe"
        path.write_bytes(b"XXXX" + struct.pack("<IIQ", 1, 2, 1) + b"\x00" * 8)
        with pytest.raises(FormatError) as exc:
            dataio.read_tensor_file(path)
        assert exc.value.offset == 0

    def test_bad_version(self, tmp_path):
        path = tmp_path / "t.icfe"
        path.write_bytes(b"ICFE" + struct.pack("<IIQ", 9, 2, 1) + b"\x00" * 8)
        with pytest.raises(VersionMismatchError):
            dataio.read_tensor_file(path)

    def test_truncated_payload_names_lengths(self, tmp_path):
        path = tmp_path / "t.icfe"
        dataio.write_tensor_file(path, np.ones((2, 3), dtype=np.float32))
        raw = path.read_bytes()
        path.write_bytes(raw[:-4])
        with pytest.raises(FormatError) as exc:
            dataio.read_tensor_file(path)
        assert "expected 44 bytes" in str(exc.value)
        assert "found 40" in str(exc.value)

    def test_short_header(self, tmp_path):
        path = tmp_path / "t.icfe"
        path.write_bytes(b"ICF")
        with pytest.raises(FormatError):
            dataio.read_tensor_file(path)


def _write_corpus(tmp_path, rows, d_w=4, d_t=6, count=None):
    count = count if count is not None else len(rows)
    rng = np.random.default_rng(1)
    dataio.write_corpus(
        tmp_path,
        rows,
        rng.standard_normal((count, d_w)).astype(np.float32),
        rng.standard_normal((count, d_t)).astype(np.float32),
    )


class TestManifest:
    def test_round_trip(self, tmp_path):
        rows = [
            dataio.ManifestRow("a", "real", None, "lang-a", "train", 0),
            dataio.ManifestRow(f"a{dataio.FAKE_ID_SEP}c1", "fake", "c1", "lang-a", "train", 1),
        ]
        path = tmp_path / "manifest.jsonl"
        dataio.write_manifest(path, rows)
        assert dataio.read_manifest(path) == rows

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps({"id": "a", "label": "real"}) + "\n")
        with pytest.raises(FormatError):
            dataio.read_manifest(path)

    def test_bad_json_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text("{not json\n")
        with pytest.raises(FormatError):
            dataio.read_manifest(path)


class TestValidateCorpus:
    def _good_rows(self):
        sep = dataio.FAKE_ID_SEP
        return [
            dataio.ManifestRow("a-0", "real", None, "lang-a", "train", 0),
            dataio.ManifestRow(f"a-0{sep}c1", "fake", "c1", "lang-a", "train", 1),
            dataio.ManifestRow("a-1", "real", None, "lang-a", "test_unseen", 2),
            dataio.ManifestRow(f"a-1{sep}c2", "fake", "c2", "lang-a", "test_unseen", 3),
        ]

    def test_clean_corpus_passes(self, tmp_path):
        _write_corpus(tmp_path, self._good_rows())
        report = dataio.validate_corpus(tmp_path)
        assert report.ok, report.violations

    def test_row_index_out_of_range(self, tmp_path):
        rows = self._good_rows()
        rows[3] = dataio.ManifestRow(rows[3].id, "fake", "c2", "lang-a", "test_unseen", 9)
        _write_corpus(tmp_path, rows, count=4)
        report = dataio.validate_corpus(tmp_path)
        assert any("row_index out of range" in v for v in report.violations)

    def test_fake_without_codec(self, tmp_path):
        rows = self._good_rows()
        rows[1] = dataio.ManifestRow(rows[1].id, "fake", None, "lang-a", "train", 1)
        _write_corpus(tmp_path, rows)
        report = dataio.validate_corpus(tmp_path)
        assert any("without codec_id" in v for v in report.violations)

    def test_real_with_codec(self, tmp_path):
        rows = self._good_rows()
        rows[0] = dataio.ManifestRow("a-0", "real", "c1", "lang-a", "train", 0)
        _write_corpus(tmp_path, rows)
        report = dataio.validate_corpus(tmp_path)
        assert any("carries codec_id" in v for v in report.violations)

    def test_fake_without_real_counterpart(self, tmp_path):
        rows = self._good_rows()
        rows[1] = dataio.ManifestRow(
            f"zz{dataio.FAKE_ID_SEP}c1", "fake", "c1", "lang-a", "train", 1
        )
        _write_corpus(tmp_path, rows)
        report = dataio.validate_corpus(tmp_path)
        assert any("no real counterpart" in v for v in report.violations)

    def test_fake_split_mismatch(self, tmp_path):
        rows = self._good_rows()
        rows[1] = dataio.ManifestRow(rows[1].id, "fake", "c1", "lang-a", "valid", 1)
        _write_corpus(tmp_path, rows)
        report = dataio.validate_corpus(tmp_path)
        assert any("differs from its real counterpart's split" in v for v in report.violations)

    def test_codec_in_both_seen_and_unseen(self, tmp_path):
        sep = dataio.FAKE_ID_SEP
        rows = self._good_rows() + [
            dataio.ManifestRow("a-2", "real", None, "lang-a", "test_unseen", 4),
            dataio.ManifestRow(f"a-2{sep}c1", "fake", "c1", "lang-a", "test_unseen", 5),
        ]
        _write_corpus(tmp_path, rows)
        report = dataio.validate_corpus(tmp_path)
        assert any("both test_unseen and other splits" in v for v in report.violations)

    def test_duplicate_id(self, tmp_path):
        rows = self._good_rows()
        rows[2] = dataio.ManifestRow("a-0", "real", None, "lang-a", "test_unseen", 2)
        _write_corpus(tmp_path, rows)
        report = dataio.validate_corpus(tmp_path)
        assert any("duplicate id" in v for v in report.violations)

    def test_missing_files_reported(self, tmp_path):
        report = dataio.validate_corpus(tmp_path)
        assert not report.ok


class TestCorpusLoading:
    def test_records_stream_in_manifest_order(self, tmp_path):
        rows = [
            dataio.ManifestRow("b-0", "real", None, "lang-b", "train", 0),
            dataio.ManifestRow("a-0", "real", None, "lang-a", "train", 1),
        ]
        _write_corpus(tmp_path, rows)
        corpus = dataio.load_corpus(tmp_path)
        ids = [r.id for r in corpus.iter_records()]
        assert ids == ["b-0", "a-0"]
        assert corpus.dims == (4, 6)

    def test_record_embeddings_align_with_rows(self, tmp_path):
        rows = [
            dataio.ManifestRow("x", "real", None, "lang-a", "train", 0),
            dataio.ManifestRow("y", "real", None, "lang-a", "valid", 1),
        ]
        sem = np.arange(8, dtype=np.float32).reshape(2, 4)
        par = np.arange(12, dtype=np.float32).reshape(2, 6)
        dataio.write_corpus(tmp_path, rows, sem, par)
        corpus = dataio.load_corpus(tmp_path)
        rec = corpus.split_records("valid")[0]
        assert rec.id == "y"
        assert np.array_equal(rec.e_w, sem[1])
        assert np.array_equal(rec.e_t, par[1])
