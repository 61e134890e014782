"""On-disk corpus model shared by the codec simulator, trainer and tools.

A corpus directory holds exactly three data files:

    manifest.jsonl        one JSON record per line, ordered by row_index
    semantic.icfe         float32 tensor, one row per record (dim d_w)
    paralinguistic.icfe   float32 tensor, one row per record (dim d_t)

Tensor files use a fixed little-endian layout: magic "ICFE", uint32
version (=1), uint32 dim, uint64 count, then count*dim float32 values
in row-major order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataValidationError, FormatError, InvalidInputError, VersionMismatchError

MAGIC = b"ICFE"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIQ")

MANIFEST_NAME = "manifest.jsonl"
SEMANTIC_NAME = "semantic.icfe"
PARALINGUISTIC_NAME = "paralinguistic.icfe"

LABELS = ("real", "fake")
SPLITS = ("train", "valid", "test_seen", "test_unseen")

#: Separator between a fake record's real-counterpart stem and its codec id.
FAKE_ID_SEP = "__"


def write_tensor_file(path, matrix) -> None:
    """Write a count x dim float32 matrix in the ICFE layout."""
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DataValidationError(f"matrix must be 2-D with positive shape, got {m.shape}")
    if not np.isfinite(m).all():
        raise DataValidationError("matrix contains non-finite entries")
    m = np.ascontiguousarray(m, dtype="<f4")
    count, dim = m.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, dim, count))
        fh.write(m.tobytes())


def read_tensor_file(path) -> np.ndarray:
    """Read an ICFE tensor file back into a float32 (count, dim) array."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"file too short for header ({len(raw)} bytes)", offset=len(raw))
    magic, version, dim, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"unsupported format version {version}", offset=4)
    if dim == 0 or count == 0:
        raise FormatError(f"degenerate shape ({count}, {dim})", offset=8)
    expected = _HEADER.size + count * dim * 4
    if len(raw) != expected:
        raise FormatError(
            f"payload length mismatch: expected {expected} bytes, found {len(raw)}",
            offset=min(len(raw), expected),
        )
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return flat.reshape(count, dim).copy()


@dataclass
class ManifestRow:
    id: str
    label: str
    codec_id: str | None
    language: str
    split: str
    row_index: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "label": self.label,
                "codec_id": self.codec_id,
                "language": self.language,
                "split": self.split,
                "row_index": self.row_index,
            },
            sort_keys=True,
        )

    @property
    def stem(self) -> str:
        """Real-counterpart id for fakes; the id itself for reals."""
        return self.id.split(FAKE_ID_SEP, 1)[0]


@dataclass
class EmbeddingRecord:
    """One utterance's paired semantic / paralinguistic embeddings."""

    id: str
    e_w: np.ndarray
    e_t: np.ndarray
    label: str
    codec_id: str | None
    language: str
    split: str


@dataclass
class CorpusManifest:
    records: list[ManifestRow]
    emb_files: tuple[str, str] = (SEMANTIC_NAME, PARALINGUISTIC_NAME)
    dims: tuple[int, int] = (0, 0)


@dataclass
class Corpus:
    """A fully loaded corpus: manifest plus both embedding matrices."""

    root: Path
    manifest: CorpusManifest
    semantic: np.ndarray
    paralinguistic: np.ndarray

    @property
    def dims(self) -> tuple[int, int]:
        return self.semantic.shape[1], self.paralinguistic.shape[1]

    def record(self, row: ManifestRow) -> EmbeddingRecord:
        return EmbeddingRecord(
            id=row.id,
            e_w=self.semantic[row.row_index],
            e_t=self.paralinguistic[row.row_index],
            label=row.label,
            codec_id=row.codec_id,
            language=row.language,
            split=row.split,
        )

    def iter_records(self, split: str | None = None):
        """Yield records in manifest order, optionally filtered by split."""
        for row in self.manifest.records:
            if split is None or row.split == split:
                yield self.record(row)

    def split_records(self, split: str) -> list[EmbeddingRecord]:
        return list(self.iter_records(split))


def write_manifest(path, rows: list[ManifestRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(row.to_json())
            fh.write("\n")


def read_manifest(path) -> list[ManifestRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"manifest line {lineno} is not valid JSON: {exc}") from exc
            missing = {"id", "label", "codec_id", "language", "split", "row_index"} - obj.keys()
            if missing:
                raise FormatError(f"manifest line {lineno} missing fields {sorted(missing)}")
            rows.append(
                ManifestRow(
                    id=str(obj["id"]),
                    label=str(obj["label"]),
                    codec_id=None if obj["codec_id"] is None else str(obj["codec_id"]),
                    language=str(obj["language"]),
                    split=str(obj["split"]),
                    row_index=int(obj["row_index"]),
                )
            )
    return rows


def write_corpus(out_dir, rows: list[ManifestRow], semantic, paralinguistic) -> None:
    """Write the three corpus files. Row order defines row_index order."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    semantic = np.asarray(semantic)
    paralinguistic = np.asarray(paralinguistic)
    if len(rows) != semantic.shape[0] or len(rows) != paralinguistic.shape[0]:
        raise InvalidInputError(
            f"row count mismatch: manifest {len(rows)}, tensors "
            f"{semantic.shape[0]}/{paralinguistic.shape[0]}"
        )
    write_tensor_file(out / SEMANTIC_NAME, semantic)
    write_tensor_file(out / PARALINGUISTIC_NAME, paralinguistic)
    write_manifest(out / MANIFEST_NAME, rows)


def load_corpus(corpus_dir) -> Corpus:
    root = Path(corpus_dir)
    rows = read_manifest(root / MANIFEST_NAME)
    semantic = read_tensor_file(root / SEMANTIC_NAME)
    paralinguistic = read_tensor_file(root / PARALINGUISTIC_NAME)
    manifest = CorpusManifest(
        records=rows, dims=(semantic.shape[1], paralinguistic.shape[1])
    )
    return Corpus(root=root, manifest=manifest, semantic=semantic, paralinguistic=paralinguistic)


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, message: str) -> None:
        self.violations.append(message)


def validate_corpus(corpus_dir) -> ValidationReport:
    """Check every corpus invariant; returns violations, never raises on content.

    I/O or structural failures (missing/corrupt files) are reported as
    violations too, so callers get a single answer for "is this corpus
    usable".
    """
    report = ValidationReport()
    root = Path(corpus_dir)
    try:
        rows = read_manifest(root / MANIFEST_NAME)
    except (OSError, FormatError) as exc:
        report.add(f"manifest unreadable: {exc}")
        return report
    matrices = {}
    for name in (SEMANTIC_NAME, PARALINGUISTIC_NAME):
        try:
            matrices[name] = read_tensor_file(root / name)
        except (OSError, FormatError) as exc:
            report.add(f"{name} unreadable: {exc}")
    if len(matrices) != 2:
        return report

    sem, par = matrices[SEMANTIC_NAME], matrices[PARALINGUISTIC_NAME]
    if sem.shape[0] != par.shape[0]:
        report.add(
            f"tensor counts differ: {SEMANTIC_NAME} has {sem.shape[0]} rows, "
            f"{PARALINGUISTIC_NAME} has {par.shape[0]}"
        )
    count = sem.shape[0]
    if len(rows) != count:
        report.add(f"manifest has {len(rows)} rows but tensors have {count}")

    seen_ids: dict[str, ManifestRow] = {}
    indices = set()
    for row in rows:
        if row.label not in LABELS:
            report.add(f"record {row.id}: unknown label {row.label!r}")
        if row.split not in SPLITS:
            report.add(f"record {row.id}: unknown split {row.split!r}")
        if not (0 <= row.row_index < count):
            report.add(f"record {row.id}: row_index out of range ({row.row_index} >= {count})")
        if row.row_index in indices:
            report.add(f"record {row.id}: duplicate row_index {row.row_index}")
        indices.add(row.row_index)
        if row.id in seen_ids:
            report.add(f"record {row.id}: duplicate id")
        seen_ids[row.id] = row
        if row.label == "fake" and row.codec_id is None:
            report.add(f"record {row.id}: fake record without codec_id")
        if row.label == "real" and row.codec_id is not None:
            report.add(f"record {row.id}: real record carries codec_id {row.codec_id!r}")

    reals = {row.id: row for row in rows if row.label == "real"}
    for row in rows:
        if row.label != "fake":
            continue
        counterpart = reals.get(row.stem)
        if counterpart is None:
            report.add(f"record {row.id}: no real counterpart with id {row.stem!r}")
            continue
        if counterpart.split != row.split:
            report.add(
                f"record {row.id}: split {row.split!r} differs from its real "
                f"counterpart's split {counterpart.split!r}"
            )
        if counterpart.language != row.language:
            report.add(
                f"record {row.id}: language {row.language!r} differs from its real "
                f"counterpart's language {counterpart.language!r}"
            )

    unseen_codecs = {row.codec_id for row in rows if row.label == "fake" and row.split == "test_unseen"}
    seen_codecs = {
        row.codec_id for row in rows if row.label == "fake" and row.split != "test_unseen"
    }
    overlap = unseen_codecs & seen_codecs
    if overlap:
        report.add(f"codec ids appear in both test_unseen and other splits: {sorted(overlap)}")
    return report
