"""Dataset ingestion and corpus statistics.

Labeled text datasets arrive as delimited (CSV/TSV) or JSON-lines files
listed in a manifest. Each record is reduced to a binary offensive flag:
it is offensive iff any of its raw labels belongs to the dataset's
configured offensive-label set. Vocabulary statistics (token count, type
count, type-token ratio) are computed over the train split only, with a
deterministic tokenizer, so that downstream size/TTR/overlap features are
reproducible bit for bit.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

logger = logging.getLogger(__name__)


class DatasetLoadError(Exception):
    """Raised when a dataset or manifest file cannot be read at all."""


# Word runs: any stretch of word characters, underscore excluded so that
# it acts as a separator like other punctuation.
_WORD_RE = re.compile(r"[^\W_]+")

# Codepoint blocks tokenized one character at a time (scripts without
# reliable whitespace word boundaries).
_CJK_BLOCKS = (
    (0x3040, 0x30FF),  # hiragana, katakana
    (0x3400, 0x4DBF),  # CJK unified ideographs extension A
    (0x4E00, 0x9FFF),  # CJK unified ideographs
    (0xAC00, 0xD7AF),  # hangul syllables
    (0xF900, 0xFAFF),  # CJK compatibility ideographs
)

_LANG_RE = re.compile(r"^[a-z]{3}$")
_COUNTRY_RE = re.compile(r"^[A-Z]{2}$")


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_BLOCKS)


def tokenize(text: str) -> list[str]:
    """Lowercase and split text into tokens.

    Splitting happens at whitespace and punctuation boundaries; within a
    word run, CJK codepoints are emitted as single-character tokens so
    that scripts without spaced word boundaries still produce usable
    counts. Deterministic; empty input yields an empty list.
    """
    tokens: list[str] = []
    for run in _WORD_RE.findall(text.lower()):
        buf: list[str] = []
        for ch in run:
            if _is_cjk(ch):
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(ch)
            else:
                buf.append(ch)
        if buf:
            tokens.append("".join(buf))
    return tokens


@dataclass(frozen=True)
class DatasetDescriptor:
    """Identity and bookkeeping for one registered dataset."""

    id: str
    language: str
    country: str | None
    train_size: int
    dev_size: int = 0
    test_size: int = 0
    source_path: str = ""

    @property
    def size(self) -> int:
        """Number of records available for training; the size feature."""
        return self.train_size


@dataclass(frozen=True)
class LabeledRecord:
    text: str
    raw_labels: frozenset[str]
    offensive: bool


def make_record(text: str, raw_labels: frozenset[str] | set[str],
                offensive_labels: frozenset[str]) -> LabeledRecord:
    """Binarize a record: offensive iff any raw label is in the offensive set."""
    labels = frozenset(raw_labels)
    return LabeledRecord(text=text, raw_labels=labels,
                         offensive=not labels.isdisjoint(offensive_labels))


@dataclass(frozen=True)
class VocabStats:
    """Token/type counts over a record collection.

    ``ttr`` is None (not zero) when no tokens were seen, so that
    downstream features can distinguish "empty corpus" from "ratio 0".
    """

    token_count: int
    type_count: int
    ttr: float | None
    vocabulary: frozenset[str]


def vocab_stats(records: list[LabeledRecord]) -> VocabStats:
    token_count = 0
    vocab: set[str] = set()
    for rec in records:
        toks = tokenize(rec.text)
        token_count += len(toks)
        vocab.update(toks)
    ttr = len(vocab) / token_count if token_count > 0 else None
    return VocabStats(token_count=token_count, type_count=len(vocab),
                      ttr=ttr, vocabulary=frozenset(vocab))


@dataclass(frozen=True)
class ManifestEntry:
    """One manifest row: where a dataset lives and how to binarize it."""

    id: str
    language: str
    country: str | None
    offensive_labels: frozenset[str]
    format: str  # csv | tsv | jsonl
    train_path: str
    dev_path: str | None = None
    test_path: str | None = None


_MANIFEST_COLUMNS = {"id", "language", "country", "offensive_labels",
                     "format", "train_path", "dev_path", "test_path"}
_REQUIRED_MANIFEST_COLUMNS = {"id", "language", "offensive_labels",
                              "format", "train_path"}
_FORMATS = {"csv", "tsv", "jsonl"}


def load_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read the dataset manifest (CSV; offensive labels pipe-separated)."""
    path = Path(path)
    if not path.is_file():
        raise DatasetLoadError(f"manifest not found: {path}")
    entries: list[ManifestEntry] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = set(reader.fieldnames or ())
        missing = _REQUIRED_MANIFEST_COLUMNS - header
        if missing:
            raise DatasetLoadError(
                f"manifest {path} lacks columns: {', '.join(sorted(missing))}")
        unknown = header - _MANIFEST_COLUMNS
        if unknown:
            raise DatasetLoadError(
                f"manifest {path} has unknown columns: {', '.join(sorted(unknown))}")
        for line_no, row in enumerate(reader, start=2):
            fmt = (row.get("format") or "").strip().lower()
            if fmt not in _FORMATS:
                raise DatasetLoadError(
                    f"{path}:{line_no}: unsupported format {fmt!r}")
            labels = frozenset(
                lab.strip() for lab in (row.get("offensive_labels") or "").split("|")
                if lab.strip())
            entries.append(ManifestEntry(
                id=(row.get("id") or "").strip(),
                language=(row.get("language") or "").strip(),
                country=(row.get("country") or "").strip() or None,
                offensive_labels=labels,
                format=fmt,
                train_path=(row.get("train_path") or "").strip(),
                dev_path=(row.get("dev_path") or "").strip() or None,
                test_path=(row.get("test_path") or "").strip() or None,
            ))
    return entries


@dataclass
class LoadedDataset:
    descriptor: DatasetDescriptor
    records: list[LabeledRecord]  # train split only
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _read_delimited(path: Path, delimiter: str):
    """Yield (line_no, text, labels_or_None) pairs from a CSV/TSV file."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        for line_no, row in enumerate(reader, start=2):
            text = row.get("text")
            raw = row.get("labels")
            labels = None
            if raw is not None:
                labels = {lab.strip() for lab in raw.split("|") if lab.strip()}
            yield line_no, text, labels


def _read_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                yield line_no, None, None, f"invalid JSON: {exc.msg}"
                continue
            text = obj.get("text")
            if "labels" in obj:
                raw = obj["labels"]
                if isinstance(raw, str):
                    raw = [raw]
                labels = {str(lab) for lab in raw}
            else:
                labels = None
            yield line_no, text, labels, None


def _parse_records(path: Path, fmt: str, offensive: frozenset[str],
                   errors: list[str]) -> list[LabeledRecord]:
    records: list[LabeledRecord] = []
    if fmt in ("csv", "tsv"):
        delim = "," if fmt == "csv" else "\t"
        rows = ((ln, tx, lb, None) for ln, tx, lb in _read_delimited(path, delim))
    else:
        rows = _read_jsonl(path)
    for line_no, text, labels, problem in rows:
        if problem is not None:
            errors.append(f"{path.name}:{line_no}: {problem}")
            continue
        if text is None:
            errors.append(f"{path.name}:{line_no}: record has no text field")
            continue
        if labels is None:
            errors.append(f"{path.name}:{line_no}: record has no label field")
            continue
        records.append(make_record(str(text), labels, offensive))
    return records


def _count_records(path: Path, fmt: str, errors: list[str]) -> int:
    scratch: list[str] = []
    n = len(_parse_records(path, fmt, frozenset(), scratch))
    errors.extend(scratch)
    return n


def load_dataset(entry: ManifestEntry,
                 base_dir: str | Path | None = None) -> LoadedDataset:
    """Materialize one dataset's train records and split counts.

    Raises DatasetLoadError when the train file is missing; record-level
    problems (no label field, bad JSON) are collected per line in the
    returned ``errors`` list, and unknown-looking language/country codes
    become warnings with the metadata kept verbatim.
    """
    base = Path(base_dir) if base_dir is not None else Path(".")
    errors: list[str] = []
    warnings: list[str] = []

    if not _LANG_RE.match(entry.language):
        warnings.append(
            f"{entry.id}: language code {entry.language!r} does not look like ISO 639-3")
    if entry.country is not None and not _COUNTRY_RE.match(entry.country):
        warnings.append(
            f"{entry.id}: country code {entry.country!r} does not look like ISO 3166-1 alpha-2")

    train_path = base / entry.train_path
    if not train_path.is_file():
        raise DatasetLoadError(f"{entry.id}: dataset file not found: {train_path}")
    records = _parse_records(train_path, entry.format, entry.offensive_labels, errors)
    if not records:
        errors.append(f"{entry.id}: dataset empty")

    dev_size = test_size = 0
    if entry.dev_path:
        dev_size = _count_records(base / entry.dev_path, entry.format, errors)
    if entry.test_path:
        test_size = _count_records(base / entry.test_path, entry.format, errors)

    descriptor = DatasetDescriptor(
        id=entry.id, language=entry.language, country=entry.country,
        train_size=len(records), dev_size=dev_size, test_size=test_size,
        source_path=str(train_path))
    return LoadedDataset(descriptor=descriptor, records=records,
                         errors=errors, warnings=warnings)


@dataclass(frozen=True)
class RegisteredDataset:
    descriptor: DatasetDescriptor
    stats: VocabStats


def build_registry(entries: list[ManifestEntry],
                   base_dir: str | Path | None = None,
                   ) -> tuple[dict[str, RegisteredDataset], list[str], list[str]]:
    """Load every manifest entry and compute its train-split statistics.

    Returns (registry, errors, warnings). Duplicate ids and unreadable
    files become errors; the offending dataset is left out of the registry.
    """
    registry: dict[str, RegisteredDataset] = {}
    errors: list[str] = []
    warnings: list[str] = []
    for entry in entries:
        if entry.id in registry:
            errors.append(f"duplicate dataset id {entry.id!r} in manifest")
            continue
        try:
            loaded = load_dataset(entry, base_dir)
        except DatasetLoadError as exc:
            errors.append(str(exc))
            continue
        errors.extend(loaded.errors)
        warnings.extend(loaded.warnings)
        registry[entry.id] = RegisteredDataset(
            descriptor=loaded.descriptor, stats=vocab_stats(loaded.records))
    return registry, errors, warnings
