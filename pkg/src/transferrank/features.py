"""Pairwise feature extraction for directed (target, transfer) dataset pairs.

Feature values may be missing; a missing value is represented as ``None``
and is never silently replaced by a number. The catalog below fixes the
set of feature names and their order, and named groups/baselines select
subsets of it:

* size features: transfer_size, target_size and their ratio
* lexical features: per-side type-token ratios, their squared ratio
  distance ``(1 - ttr_tsf / ttr_tgt)^2``, and vocabulary overlap
  ``|V1 & V2| / (|V1| + |V2|)``
* cultural ratio features ``rc_<dim> = dim_tsf / dim_tgt`` over the six
  Hofstede survey dimensions (pdi, idv, mas, uai, lto, ivr)
* offensive-lexicon distance: mean cosine between aligned embeddings of
  lemmas that share a concept across the two languages (higher = closer)
* externally sourced language distances (typological, geographic,
  pragmatics-inspired), ingested from tables rather than computed
* rep_diff: cosine distance between learned language representation
  vectors, one scalar per vector source
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import DatasetDescriptor, VocabStats

logger = logging.getLogger(__name__)


class FeatureError(Exception):
    """Raised for unusable feature inputs (as opposed to missing values)."""


CULTURAL_DIMENSIONS = ("pdi", "idv", "mas", "uai", "lto", "ivr")

EXTERNAL_KINDS = ("genetic", "syntactic", "featural", "phonological",
                  "inventory", "geographic", "lcr_noun", "lcr_verb",
                  "ltq", "esd")

#: Canonical feature order; every assembled vector lists its features in
#: this order regardless of how groups were combined.
FEATURE_ORDER = (
    "transfer_size", "target_size", "ratio_size",
    "transfer_ttr", "target_ttr", "distance_ttr",
    "word_overlap",
    "genetic", "syntactic", "featural", "phonological",
    "inventory", "geographic",
    "lcr_noun", "lcr_verb", "esd", "ltq",
    "off_dist",
    "rc_pdi", "rc_idv", "rc_mas", "rc_uai", "rc_lto", "rc_ivr",
    "rep_diff_mtvec", "rep_diff_colex2lang",
)

FEATURE_GROUPS: dict[str, tuple[str, ...]] = {
    "Data-specific": ("transfer_size", "target_size", "ratio_size"),
    "Typology": ("genetic", "syntactic", "featural", "phonological"),
    "Geography": ("inventory", "geographic"),
    "Orthography": ("word_overlap",),
    "Pragmatic": ("transfer_ttr", "target_ttr", "distance_ttr",
                  "lcr_noun", "lcr_verb", "esd", "ltq"),
    "PRAG": ("lcr_noun", "lcr_verb", "esd", "ltq"),
    "OFF": ("off_dist",),
    "Cultural": ("rc_pdi", "rc_idv", "rc_mas", "rc_uai", "rc_lto", "rc_ivr"),
}

BASELINES: dict[str, tuple[str, ...]] = {
    "LangRank": ("transfer_size", "target_size", "ratio_size",
                 "transfer_ttr", "target_ttr", "distance_ttr", "word_overlap",
                 "genetic", "syntactic", "featural", "phonological",
                 "inventory", "geographic"),
    "MTVEC": ("rep_diff_mtvec",),
    "Colex2Lang": ("rep_diff_colex2lang",),
}

#: Language-vector sources for which a rep_diff feature exists.
VECTOR_SOURCES = ("mtvec", "colex2lang")


def resolve_catalog(groups: tuple[str, ...] = (),
                    baselines: tuple[str, ...] = ()) -> tuple[str, ...]:
    """Union the named groups/baselines into a catalog in canonical order."""
    selected: set[str] = set()
    for name in groups:
        if name not in FEATURE_GROUPS:
            raise FeatureError(f"unknown feature group {name!r}")
        selected.update(FEATURE_GROUPS[name])
    for name in baselines:
        if name not in BASELINES:
            raise FeatureError(f"unknown baseline {name!r}")
        selected.update(BASELINES[name])
    return tuple(f for f in FEATURE_ORDER if f in selected)


@dataclass(frozen=True)
class CulturalProfile:
    """The six survey dimension values for a country or language.

    Values are in [0, 100]; a missing score is None, never a sentinel.
    """

    pdi: float | None = None
    idv: float | None = None
    mas: float | None = None
    uai: float | None = None
    lto: float | None = None
    ivr: float | None = None

    def dimension(self, name: str) -> float | None:
        if name not in CULTURAL_DIMENSIONS:
            raise FeatureError(f"unknown cultural dimension {name!r}")
        return getattr(self, name)

    @property
    def complete(self) -> bool:
        return all(self.dimension(d) is not None for d in CULTURAL_DIMENSIONS)


EMPTY_PROFILE = CulturalProfile()


@dataclass(frozen=True)
class AlignedLexicon:
    """concept id -> {language -> lemma} for concept-aligned offensive words."""

    concepts: dict[str, dict[str, str]]

    def languages(self) -> tuple[str, ...]:
        langs: set[str] = set()
        for per_lang in self.concepts.values():
            langs.update(per_lang)
        return tuple(sorted(langs))


@dataclass(frozen=True)
class EmbeddingTable:
    """Aligned word vectors for one language; all vectors share ``dim``."""

    language: str
    dim: int
    vectors: dict[str, np.ndarray]


@dataclass(frozen=True)
class ExternalDistanceTable:
    """Pairwise language values of one kind, ingested from a file.

    Lookups are direction-sensitive unless the table declares symmetry.
    """

    kind: str
    entries: dict[tuple[str, str], float]
    symmetric: bool = False

    def lookup(self, lang_a: str, lang_b: str) -> float | None:
        value = self.entries.get((lang_a, lang_b))
        if value is None and self.symmetric:
            value = self.entries.get((lang_b, lang_a))
        return value


@dataclass(frozen=True)
class LanguageVectorTable:
    source: str
    vectors: dict[str, np.ndarray]


@dataclass(frozen=True)
class PairFeatureVector:
    """Named feature values for one directed (target, transfer) pair."""

    target_id: str
    transfer_id: str
    values: dict[str, float | None]

    def names(self) -> tuple[str, ...]:
        return tuple(self.values)


def subset(vector: PairFeatureVector, names: tuple[str, ...]) -> PairFeatureVector:
    """Restrict a vector to the given feature names (order preserved)."""
    missing = [n for n in names if n not in vector.values]
    if missing:
        raise FeatureError(
            f"features {missing} not present in vector "
            f"({vector.target_id}, {vector.transfer_id})")
    return PairFeatureVector(
        target_id=vector.target_id, transfer_id=vector.transfer_id,
        values={n: vector.values[n] for n in names})


def drop_feature(vector: PairFeatureVector, name: str) -> PairFeatureVector:
    if name not in vector.values:
        raise FeatureError(f"feature {name!r} not present in vector")
    return PairFeatureVector(
        target_id=vector.target_id, transfer_id=vector.transfer_id,
        values={n: v for n, v in vector.values.items() if n != name})


def _cosine(u: np.ndarray, v: np.ndarray) -> float | None:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return None
    return float(np.dot(u, v) / (nu * nv))


def data_features(target: tuple[DatasetDescriptor, VocabStats],
                  transfer: tuple[DatasetDescriptor, VocabStats],
                  ) -> dict[str, float | None]:
    """Size and lexical-variation features for one directed pair."""
    tgt_desc, tgt_stats = target
    tsf_desc, tsf_stats = transfer
    s1 = float(tsf_desc.size)
    s2 = float(tgt_desc.size)
    ratio = s1 / s2 if s2 > 0 else None

    ttr1 = tsf_stats.ttr
    ttr2 = tgt_stats.ttr
    if ttr1 is None or ttr2 is None or ttr2 == 0:
        ttr_dist = None
    else:
        ttr_dist = (1.0 - ttr1 / ttr2) ** 2

    v1 = tsf_stats.vocabulary
    v2 = tgt_stats.vocabulary
    denom = len(v1) + len(v2)
    overlap = len(v1 & v2) / denom if denom > 0 else None

    return {
        "transfer_size": s1,
        "target_size": s2,
        "ratio_size": ratio,
        "transfer_ttr": ttr1,
        "target_ttr": ttr2,
        "distance_ttr": ttr_dist,
        "word_overlap": overlap,
    }


def cultural_ratio_features(target_profile: CulturalProfile,
                            transfer_profile: CulturalProfile,
                            ) -> dict[str, float | None]:
    """Per-dimension ratios transfer/target; missing propagates."""
    out: dict[str, float | None] = {}
    for dim in CULTURAL_DIMENSIONS:
        tgt = target_profile.dimension(dim)
        tsf = transfer_profile.dimension(dim)
        if tgt is None or tsf is None:
            out[f"rc_{dim}"] = None
        elif tgt == 0:
            logger.warning("cultural ratio %s undefined: target value is 0", dim)
            out[f"rc_{dim}"] = None
        else:
            out[f"rc_{dim}"] = tsf / tgt
    return out


def language_culture_from_countries(
        language: str,
        country_profiles: dict[str, CulturalProfile],
        official_language_map: dict[str, tuple[str, ...]],
        ) -> CulturalProfile:
    """Average the profiles of countries where ``language`` is the sole
    official language.

    A dimension is averaged over the countries where it is present and is
    missing only if it is missing in all of them. A language absent from
    the map yields a fully missing profile.
    """
    countries = official_language_map.get(language)
    if not countries:
        logger.warning("language %s has no sole-official countries on record",
                       language)
        return EMPTY_PROFILE
    values: dict[str, float | None] = {}
    for dim in CULTURAL_DIMENSIONS:
        present = [country_profiles[c].dimension(dim)
                   for c in countries if c in country_profiles]
        present = [v for v in present if v is not None]
        values[dim] = sum(present) / len(present) if present else None
    return CulturalProfile(**values)


def offensive_distance(lexicon: AlignedLexicon,
                       emb_tsf: EmbeddingTable,
                       emb_tgt: EmbeddingTable,
                       ) -> tuple[float | None, int]:
    """Mean cosine between aligned offensive lemma vectors, plus coverage.

    Only concepts whose lemmas have vectors in both tables contribute;
    lemma pairs involving a zero vector are skipped (cosine undefined).
    Returns (None, 0) when no concept is covered on both sides. The value
    is a similarity despite the name: higher means lexically closer.
    """
    if emb_tsf.dim != emb_tgt.dim:
        raise FeatureError(
            f"embedding dimensions differ: {emb_tsf.language} has {emb_tsf.dim}, "
            f"{emb_tgt.language} has {emb_tgt.dim}")
    total = 0.0
    used = 0
    skipped_zero = 0
    for concept in sorted(lexicon.concepts):
        per_lang = lexicon.concepts[concept]
        lemma_tsf = per_lang.get(emb_tsf.language)
        lemma_tgt = per_lang.get(emb_tgt.language)
        if lemma_tsf is None or lemma_tgt is None:
            continue
        v_tsf = emb_tsf.vectors.get(lemma_tsf)
        v_tgt = emb_tgt.vectors.get(lemma_tgt)
        if v_tsf is None or v_tgt is None:
            continue
        cos = _cosine(v_tsf, v_tgt)
        if cos is None:
            skipped_zero += 1
            continue
        total += cos
        used += 1
    if skipped_zero:
        logger.debug("offensive distance %s-%s: skipped %d zero-vector lemma pairs",
                     emb_tsf.language, emb_tgt.language, skipped_zero)
    if used == 0:
        logger.warning("offensive distance %s-%s: no aligned coverage",
                       emb_tsf.language, emb_tgt.language)
        return None, 0
    return total / used, used


def external_pair_features(tables: dict[str, ExternalDistanceTable],
                           pair: tuple[str, str],
                           ) -> dict[str, float | None]:
    """Look up one feature per table kind for (target, transfer) languages."""
    target_lang, transfer_lang = pair
    out: dict[str, float | None] = {}
    for kind in EXTERNAL_KINDS:
        table = tables.get(kind)
        out[kind] = table.lookup(target_lang, transfer_lang) if table else None
    return out


def rep_diff(vectors: LanguageVectorTable,
             pair: tuple[str, str]) -> float | None:
    """Cosine distance (1 - cosine) between two language vectors."""
    target_lang, transfer_lang = pair
    v_tgt = vectors.vectors.get(target_lang)
    v_tsf = vectors.vectors.get(transfer_lang)
    if v_tgt is None or v_tsf is None:
        return None
    cos = _cosine(v_tgt, v_tsf)
    if cos is None:
        return None
    return 1.0 - cos


@dataclass(frozen=True)
class FeatureSelection:
    """Named choice of feature groups and baselines."""

    groups: tuple[str, ...] = ()
    baselines: tuple[str, ...] = ()

    @property
    def catalog(self) -> tuple[str, ...]:
        return resolve_catalog(self.groups, self.baselines)


ALL_GROUPS = tuple(FEATURE_GROUPS)


@dataclass
class FeatureExtractor:
    """Assembles pair feature vectors from loaded corpora and tables.

    All inputs are read-only after construction; pairs can therefore be
    featurized concurrently. Offensive-distance values are cached per
    unordered language pair (the measure is symmetric).

    ``off_dist_min_coverage`` suppresses the offensive-distance feature
    when fewer aligned concepts are covered, since tiny overlaps produce
    noise; set it to 1 to disable the threshold.
    """

    datasets: dict[str, tuple[DatasetDescriptor, VocabStats]]
    selection: FeatureSelection
    profiles: dict[str, CulturalProfile] = field(default_factory=dict)
    official_languages: dict[str, tuple[str, ...]] = field(default_factory=dict)
    lexicon: AlignedLexicon | None = None
    embeddings: dict[str, EmbeddingTable] = field(default_factory=dict)
    distance_tables: dict[str, ExternalDistanceTable] = field(default_factory=dict)
    language_vectors: dict[str, LanguageVectorTable] = field(default_factory=dict)
    off_dist_min_coverage: int = 10
    rep_diff_full_vector: bool = False

    def __post_init__(self) -> None:
        self._catalog = self.selection.catalog
        if self.rep_diff_full_vector:
            extra: list[str] = []
            for source in VECTOR_SOURCES:
                table = self.language_vectors.get(source)
                if table is None or f"rep_diff_{source}" not in self._catalog:
                    continue
                dim = len(next(iter(table.vectors.values())))
                extra.extend(f"rep_absdiff_{source}_{i}" for i in range(dim))
            self._catalog = self._catalog + tuple(extra)
        self._off_cache: dict[tuple[str, str], tuple[float | None, int]] = {}
        self._profile_cache: dict[str, CulturalProfile] = {}

    @property
    def catalog(self) -> tuple[str, ...]:
        return self._catalog

    def dataset_profile(self, dataset_id: str) -> CulturalProfile:
        """Cultural profile for a dataset: by country when the manifest
        names one, otherwise averaged over the language's sole-official
        countries."""
        cached = self._profile_cache.get(dataset_id)
        if cached is not None:
            return cached
        descriptor, _ = self.datasets[dataset_id]
        if descriptor.country is not None:
            profile = self.profiles.get(descriptor.country)
            if profile is None:
                logger.warning("no cultural profile for country %s (dataset %s)",
                               descriptor.country, dataset_id)
                profile = EMPTY_PROFILE
        else:
            profile = language_culture_from_countries(
                descriptor.language, self.profiles, self.official_languages)
        self._profile_cache[dataset_id] = profile
        return profile

    def _off_dist(self, lang_a: str, lang_b: str) -> float | None:
        key = (lang_a, lang_b) if lang_a <= lang_b else (lang_b, lang_a)
        if key not in self._off_cache:
            self._off_cache[key] = self._compute_off_dist(*key)
        value, coverage = self._off_cache[key]
        if value is not None and coverage < self.off_dist_min_coverage:
            logger.warning(
                "offensive distance %s-%s: coverage %d below threshold %d, "
                "feature withheld", lang_a, lang_b, coverage,
                self.off_dist_min_coverage)
            return None
        return value

    def _compute_off_dist(self, lang_a: str, lang_b: str) -> tuple[float | None, int]:
        if self.lexicon is None:
            return None, 0
        emb_a = self.embeddings.get(lang_a)
        emb_b = self.embeddings.get(lang_b)
        if emb_a is None or emb_b is None:
            missing = [l for l, e in ((lang_a, emb_a), (lang_b, emb_b)) if e is None]
            logger.warning("no embeddings for %s; offensive distance unavailable",
                           ", ".join(missing))
            return None, 0
        return offensive_distance(self.lexicon, emb_a, emb_b)

    def vector(self, target_id: str, transfer_id: str) -> PairFeatureVector:
        """Assemble the configured catalog for one directed pair."""
        if target_id == transfer_id:
            raise FeatureError("target and transfer must differ")
        for ds in (target_id, transfer_id):
            if ds not in self.datasets:
                raise FeatureError(f"unknown dataset id {ds!r}")
        catalog = self._catalog
        wanted = set(catalog)
        tgt = self.datasets[target_id]
        tsf = self.datasets[transfer_id]
        values: dict[str, float | None] = {}

        data_names = {"transfer_size", "target_size", "ratio_size",
                      "transfer_ttr", "target_ttr", "distance_ttr", "word_overlap"}
        if wanted & data_names:
            values.update(data_features(tgt, tsf))
        if wanted & set(EXTERNAL_KINDS):
            values.update(external_pair_features(
                self.distance_tables, (tgt[0].language, tsf[0].language)))
        if "off_dist" in wanted:
            values["off_dist"] = self._off_dist(tgt[0].language, tsf[0].language)
        if any(f"rc_{d}" in wanted for d in CULTURAL_DIMENSIONS):
            values.update(cultural_ratio_features(
                self.dataset_profile(target_id), self.dataset_profile(transfer_id)))
        for source in VECTOR_SOURCES:
            name = f"rep_diff_{source}"
            if name in wanted:
                table = self.language_vectors.get(source)
                values[name] = (rep_diff(table, (tgt[0].language, tsf[0].language))
                                if table else None)
                if self.rep_diff_full_vector and table is not None:
                    values.update(self._full_vector_diff(
                        source, table, tgt[0].language, tsf[0].language))

        return PairFeatureVector(
            target_id=target_id, transfer_id=transfer_id,
            values={name: values.get(name) for name in catalog})

    def _full_vector_diff(self, source: str, table: LanguageVectorTable,
                          lang_tgt: str, lang_tsf: str) -> dict[str, float | None]:
        v_tgt = table.vectors.get(lang_tgt)
        v_tsf = table.vectors.get(lang_tsf)
        dim = len(next(iter(table.vectors.values())))
        if v_tgt is None or v_tsf is None:
            return {f"rep_absdiff_{source}_{i}": None for i in range(dim)}
        diff = np.abs(v_tgt - v_tsf)
        return {f"rep_absdiff_{source}_{i}": float(diff[i]) for i in range(dim)}

    def all_pairs(self) -> list[PairFeatureVector]:
        """Feature vectors for every directed pair, ordered by (target, transfer)."""
        ids = sorted(self.datasets)
        return [self.vector(t, c) for t in ids for c in ids if c != t]
