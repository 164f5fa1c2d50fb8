"""Loaders for the delimited resource files backing feature extraction.

File formats (all UTF-8, comma-delimited unless stated):

* cultural values: columns country,pdi,idv,mas,uai,lto,ivr; a value of -1
  or an empty cell marks a missing score
* official languages: columns language,country; one row per country where
  the language is the sole official language
* lexicon: columns concept_id,language,lemma
* embeddings: word-vector text format, one file per language named
  ``<lang>.vec``; an optional first line "count dim" precedes
  "word v1 ... vd" lines
* distance tables: optional first line ``# symmetric=true|false`` (default
  false), then columns lang_a,lang_b,kind,value
* language vectors: word-vector text format keyed by language code
* transfer matrix: columns target_id,transfer_id,macro_f1 with intra rows
  using target_id == transfer_id
* areas: columns id,area tagging languages or countries with a cultural area
"""

from __future__ import annotations

import csv
import logging
import math
from pathlib import Path

import numpy as np

from .features import (
    CULTURAL_DIMENSIONS,
    AlignedLexicon,
    CulturalProfile,
    EmbeddingTable,
    ExternalDistanceTable,
    LanguageVectorTable,
    EXTERNAL_KINDS,
)
from .evaluation import TransferMatrix

logger = logging.getLogger(__name__)


class ResourceError(Exception):
    """Raised for unreadable or malformed resource files."""


def _open_rows(path: Path, expected: tuple[str, ...]):
    if not path.is_file():
        raise ResourceError(f"resource file not found: {path}")
    fh = open(path, encoding="utf-8", newline="")
    reader = csv.DictReader(fh)
    header = tuple(reader.fieldnames or ())
    if set(header) != set(expected):
        fh.close()
        raise ResourceError(
            f"{path}: expected columns {', '.join(expected)}, found "
            f"{', '.join(header)}")
    return fh, reader


def load_cultural_table(path: str | Path) -> dict[str, CulturalProfile]:
    """Country (or other id) -> CulturalProfile; -1 and blank mean missing."""
    path = Path(path)
    fh, reader = _open_rows(path, ("country",) + CULTURAL_DIMENSIONS)
    profiles: dict[str, CulturalProfile] = {}
    with fh:
        for line_no, row in enumerate(reader, start=2):
            country = (row["country"] or "").strip()
            if not country:
                raise ResourceError(f"{path}:{line_no}: empty country id")
            if country in profiles:
                raise ResourceError(f"{path}:{line_no}: duplicate country {country}")
            values: dict[str, float | None] = {}
            for dim in CULTURAL_DIMENSIONS:
                cell = (row[dim] or "").strip()
                if cell == "" or cell == "-1":
                    values[dim] = None
                    continue
                try:
                    value = float(cell)
                except ValueError as exc:
                    raise ResourceError(
                        f"{path}:{line_no}: bad value {cell!r} for {dim}") from exc
                if not 0.0 <= value <= 100.0:
                    raise ResourceError(
                        f"{path}:{line_no}: {dim}={value} outside [0, 100]")
                values[dim] = value
            profiles[country] = CulturalProfile(**values)
    return profiles


def load_official_languages(path: str | Path) -> dict[str, tuple[str, ...]]:
    """language -> sorted tuple of sole-official countries."""
    path = Path(path)
    fh, reader = _open_rows(path, ("language", "country"))
    mapping: dict[str, set[str]] = {}
    with fh:
        for line_no, row in enumerate(reader, start=2):
            lang = (row["language"] or "").strip()
            country = (row["country"] or "").strip()
            if not lang or not country:
                raise ResourceError(f"{path}:{line_no}: empty language or country")
            mapping.setdefault(lang, set()).add(country)
    return {lang: tuple(sorted(countries)) for lang, countries in mapping.items()}


def load_lexicon(path: str | Path) -> AlignedLexicon:
    path = Path(path)
    fh, reader = _open_rows(path, ("concept_id", "language", "lemma"))
    concepts: dict[str, dict[str, str]] = {}
    with fh:
        for line_no, row in enumerate(reader, start=2):
            concept = (row["concept_id"] or "").strip()
            lang = (row["language"] or "").strip()
            lemma = (row["lemma"] or "").strip()
            if not concept or not lang or not lemma:
                raise ResourceError(f"{path}:{line_no}: incomplete lexicon row")
            per_lang = concepts.setdefault(concept, {})
            if lang in per_lang:
                raise ResourceError(
                    f"{path}:{line_no}: duplicate lemma for ({concept}, {lang})")
            per_lang[lang] = lemma
    return AlignedLexicon(concepts=concepts)


def load_embeddings(path: str | Path, language: str) -> EmbeddingTable:
    """Read one word-vector text file; validates consistent finite vectors."""
    path = Path(path)
    if not path.is_file():
        raise ResourceError(f"embedding file not found: {path}")
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            parts = [p for p in parts if p]
            if not parts:
                continue
            if line_no == 1 and len(parts) == 2:
                try:
                    dim = int(parts[1])
                    continue  # header "count dim"
                except ValueError:
                    pass
            word = parts[0]
            try:
                vec = np.array([float(p) for p in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise ResourceError(
                    f"{path}:{line_no}: non-numeric vector component") from exc
            if dim is None:
                dim = len(vec)
            if len(vec) != dim:
                raise ResourceError(
                    f"{path}:{line_no}: vector length {len(vec)} != {dim}")
            if not np.isfinite(vec).all():
                raise ResourceError(f"{path}:{line_no}: non-finite component")
            vectors[word] = vec
    if dim is None:
        raise ResourceError(f"{path}: no vectors found")
    return EmbeddingTable(language=language, dim=dim, vectors=vectors)


def load_embeddings_dir(directory: str | Path) -> dict[str, EmbeddingTable]:
    """Load every ``<lang>.vec`` file in a directory."""
    directory = Path(directory)
    if not directory.is_dir():
        raise ResourceError(f"embeddings directory not found: {directory}")
    tables: dict[str, EmbeddingTable] = {}
    for path in sorted(directory.glob("*.vec")):
        lang = path.stem
        tables[lang] = load_embeddings(path, lang)
    if not tables:
        logger.warning("no .vec files found under %s", directory)
    return tables


def load_distance_tables(paths: list[str | Path],
                         ) -> dict[str, ExternalDistanceTable]:
    """Merge distance files into one table per kind.

    The per-file symmetry flag applies to the kinds it contains; a kind
    appearing in several files must carry the same flag everywhere.
    """
    entries: dict[str, dict[tuple[str, str], float]] = {}
    symmetric: dict[str, bool] = {}
    for raw_path in paths:
        path = Path(raw_path)
        if not path.is_file():
            raise ResourceError(f"distance table not found: {path}")
        with open(path, encoding="utf-8", newline="") as fh:
            first = fh.readline()
            sym = False
            if first.startswith("#"):
                flag = first.strip().lstrip("#").strip()
                if flag not in ("symmetric=true", "symmetric=false"):
                    raise ResourceError(
                        f"{path}:1: bad header {first.strip()!r}; expected "
                        f"'# symmetric=true|false'")
                sym = flag == "symmetric=true"
                offset = 2
            else:
                fh.seek(0)
                offset = 1
            reader = csv.DictReader(fh)
            header = set(reader.fieldnames or ())
            if header != {"lang_a", "lang_b", "kind", "value"}:
                raise ResourceError(
                    f"{path}: expected columns lang_a,lang_b,kind,value")
            for line_no, row in enumerate(reader, start=offset + 1):
                kind = (row["kind"] or "").strip()
                if kind not in EXTERNAL_KINDS:
                    raise ResourceError(
                        f"{path}:{line_no}: unknown distance kind {kind!r}")
                a = (row["lang_a"] or "").strip()
                b = (row["lang_b"] or "").strip()
                if not a or not b:
                    raise ResourceError(f"{path}:{line_no}: empty language code")
                try:
                    value = float((row["value"] or "").strip())
                except ValueError as exc:
                    raise ResourceError(
                        f"{path}:{line_no}: bad value {row['value']!r}") from exc
                if not math.isfinite(value):
                    raise ResourceError(f"{path}:{line_no}: non-finite value")
                if kind in symmetric and symmetric[kind] != sym:
                    raise ResourceError(
                        f"{path}:{line_no}: kind {kind} carries conflicting "
                        f"symmetry flags across files")
                symmetric[kind] = sym
                per_kind = entries.setdefault(kind, {})
                if (a, b) in per_kind:
                    raise ResourceError(
                        f"{path}:{line_no}: duplicate entry ({a}, {b}) for {kind}")
                per_kind[(a, b)] = value
    return {kind: ExternalDistanceTable(kind=kind, entries=per_kind,
                                        symmetric=symmetric[kind])
            for kind, per_kind in entries.items()}


def load_language_vectors(path: str | Path, source: str) -> LanguageVectorTable:
    table = load_embeddings(path, language=source)
    return LanguageVectorTable(source=source, vectors=table.vectors)


def load_transfer_matrix(path: str | Path) -> TransferMatrix:
    path = Path(path)
    fh, reader = _open_rows(path, ("target_id", "transfer_id", "macro_f1"))
    scores: dict[tuple[str, str], float] = {}
    with fh:
        for line_no, row in enumerate(reader, start=2):
            target = (row["target_id"] or "").strip()
            transfer = (row["transfer_id"] or "").strip()
            if not target or not transfer:
                raise ResourceError(f"{path}:{line_no}: empty dataset id")
            try:
                value = float((row["macro_f1"] or "").strip())
            except ValueError as exc:
                raise ResourceError(
                    f"{path}:{line_no}: bad macro_f1 {row['macro_f1']!r}") from exc
            if (target, transfer) in scores:
                raise ResourceError(
                    f"{path}:{line_no}: duplicate cell ({target}, {transfer})")
            scores[(target, transfer)] = value
    return TransferMatrix(scores=scores)


def load_areas(path: str | Path) -> dict[str, str]:
    path = Path(path)
    fh, reader = _open_rows(path, ("id", "area"))
    areas: dict[str, str] = {}
    with fh:
        for line_no, row in enumerate(reader, start=2):
            key = (row["id"] or "").strip()
            area = (row["area"] or "").strip()
            if not key or not area:
                raise ResourceError(f"{path}:{line_no}: incomplete area row")
            areas[key] = area
    return areas
