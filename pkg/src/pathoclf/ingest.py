"""Corpus manifests, EMB1 embedding files and mean pooling.

EMB1 layout (little-endian)::

    bytes 0-3    magic b"EMB1"
    bytes 4-7    uint32 T (frames)
    bytes 8-11   uint32 D (dimension)
    bytes 12-    T*D float32, frame-major
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import DataError, Dataset, Vocabulary, check_layer

MAGIC = b"EMB1"
HEADER = struct.Struct("<4sII")
FRAME_STEP = 0.02
MANIFEST_COLUMNS = ("id", "label", "corpus", "emb_template")


class ManifestError(DataError):
    pass


class EmbeddingFormatError(DataError):
    pass


class BadMagicError(EmbeddingFormatError):
    pass


class TruncatedError(EmbeddingFormatError):
    pass


class ZeroFramesError(EmbeddingFormatError):
    pass


class NonFiniteError(EmbeddingFormatError):
    pass


@dataclass(frozen=True)
class UtteranceRecord:
    id: str
    label: str
    corpus: str
    emb_template: str
    # optional extra columns (e.g. ``audio``, ``speaker``), in file order
    extra: tuple[tuple[str, str], ...] = field(default=())

    def get(self, key: str, default: str | None = None) -> str | None:
        return dict(self.extra).get(key, default)

    def embedding_path(self, layer: int, base: Path | None = None) -> Path:
        path = Path(self.emb_template.replace("{layer}", str(check_layer(layer))))
        if base is not None and not path.is_absolute():
            path = base / path
        return path


@dataclass(frozen=True, eq=False)
class EmbeddingSequence:
    frames: np.ndarray
    frame_step: float = FRAME_STEP

    def __post_init__(self):
        f = np.asarray(self.frames)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ZeroFramesError(f"embedding sequence needs shape (T>=1, D>=1), got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise NonFiniteError("embedding sequence contains non-finite values")
        object.__setattr__(self, "frames", f)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


def parse_manifest(path) -> list[UtteranceRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ManifestError(f"{path}: manifest not found") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ManifestError(f"{path}:1: empty manifest")
    header = [h.strip() for h in rows[0]]
    for col in MANIFEST_COLUMNS:
        if col not in header:
            raise ManifestError(f"{path}:1: missing column {col!r}")
    if len(set(header)) != len(header):
        raise ManifestError(f"{path}:1: duplicate column names")
    extra_cols = [h for h in header if h not in MANIFEST_COLUMNS]
    records: list[UtteranceRecord] = []
    seen: dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ManifestError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        values = dict(zip(header, row))
        rid = values["id"]
        if not rid:
            raise ManifestError(f"{path}:{lineno}: empty id")
        if rid in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate id {rid!r} (first seen on line {seen[rid]})")
        seen[rid] = lineno
        if not values["label"]:
            raise ManifestError(f"{path}:{lineno}: empty label for {rid!r}")
        records.append(
            UtteranceRecord(
                id=rid,
                label=values["label"],
                corpus=values["corpus"],
                emb_template=values["emb_template"],
                extra=tuple((c, values[c]) for c in extra_cols),
            )
        )
    if not records:
        raise ManifestError(f"{path}:2: manifest has a header but no data rows")
    return records


def write_manifest(records: Sequence[UtteranceRecord], path) -> None:
    extra_cols: list[str] = []
    for r in records:
        for k, _ in r.extra:
            if k not in extra_cols:
                extra_cols.append(k)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*MANIFEST_COLUMNS, *extra_cols])
        for r in records:
            ex = dict(r.extra)
            w.writerow([r.id, r.label, r.corpus, r.emb_template, *(ex.get(c, "") for c in extra_cols)])


def write_embedding_file(seq, path) -> None:
    if not isinstance(seq, EmbeddingSequence):
        seq = EmbeddingSequence(np.asarray(seq))
    frames = np.ascontiguousarray(seq.frames, dtype="<f4")
    if not np.all(np.isfinite(frames)):
        raise NonFiniteError("values overflow float32")
    t, d = frames.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(HEADER.pack(MAGIC, t, d))
        fh.write(frames.tobytes(order="C"))


def read_embedding_file(path) -> EmbeddingSequence:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise DataError(f"{path}: embedding file not found") from None
    if len(data) < HEADER.size:
        if data[:4] != MAGIC[: len(data[:4])]:
            raise BadMagicError(f"{path}: bad magic")
        raise TruncatedError(f"{path}: truncated header ({len(data)} bytes)")
    magic, t, d = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if t == 0 or d == 0:
        raise ZeroFramesError(f"{path}: zero frames or zero dimension (T={t}, D={d})")
    expected = HEADER.size + 4 * t * d
    if len(data) < expected:
        raise TruncatedError(f"{path}: truncated payload, expected {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise EmbeddingFormatError(f"{path}: {len(data) - expected} trailing bytes after payload")
    frames = np.frombuffer(data, dtype="<f4", count=t * d, offset=HEADER.size).reshape(t, d)
    if not np.all(np.isfinite(frames)):
        raise NonFiniteError(f"{path}: non-finite values in payload")
    return EmbeddingSequence(frames.astype(np.float32))


def mean_pool(seq: EmbeddingSequence) -> np.ndarray:
    """Average frames over time in float64."""
    frames = np.asarray(seq.frames, dtype=np.float64)
    return frames.sum(axis=0) / frames.shape[0]


def assemble_dataset(records: Sequence[UtteranceRecord], layer: int, vocab: Vocabulary,
                     base: Path | None = None) -> Dataset:
    """Pool every record's layer-``layer`` embedding into one row.

    Relative paths in the manifest templates resolve against ``base``.
    """
    layer = check_layer(layer)
    if not records:
        raise DataError("no records to assemble")
    labels = []
    for r in records:
        if r.label not in vocab:
            raise DataError(f"record {r.id!r}: unknown label {r.label!r}")
        labels.append(vocab.index(r.label))
    rows = []
    first_path = None
    for r in records:
        path = r.embedding_path(layer, base)
        if not path.exists():
            raise DataError(f"layer {layer}: embedding file missing for {r.id!r}: {path}")
        v = mean_pool(read_embedding_file(path))
        if rows and v.shape[0] != rows[0].shape[0]:
            raise DataError(
                f"dimension mismatch: {first_path} has D={rows[0].shape[0]}, {path} has D={v.shape[0]}"
            )
        if first_path is None:
            first_path = path
        rows.append(v)
    return Dataset(np.vstack(rows), np.array(labels), vocab, layer, tuple(r.id for r in records))


def vocab_from_records(records: Sequence[UtteranceRecord]) -> Vocabulary:
    """Default vocabulary if it covers the labels, else labels in first-seen order."""
    default = Vocabulary.default()
    labels = list(dict.fromkeys(r.label for r in records))
    if all(lab in default for lab in labels):
        return default
    return Vocabulary(labels)
