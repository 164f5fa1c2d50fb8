"""Declarative experiment configuration.

One YAML file drives the whole pipeline so that feature-set grids stay
scriptable and auditable. Unknown keys are rejected; every referenced
input path is resolved and checked at load time. Relative paths resolve
against, in order of precedence, an explicit resource root argument, the
``TRANSFERRANK_RESOURCE_ROOT`` environment variable, or the directory of
the config file itself.

A short hash of the raw configuration is embedded in every output file so
that mismatched downstream consumption is detectable.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .features import BASELINES, FEATURE_GROUPS, FEATURE_ORDER, FeatureSelection
from .ranker import TrainConfig

ENV_RESOURCE_ROOT = "TRANSFERRANK_RESOURCE_ROOT"


class ConfigError(Exception):
    pass


_TOP_KEYS = {"manifest", "resources", "features", "train", "k",
             "network_top_m", "output_dir", "seed", "correlation_features"}
_RESOURCE_KEYS = {"cultural_values", "official_languages", "lexicon",
                  "embeddings_dir", "distance_tables", "language_vectors",
                  "transfer_matrix", "areas"}
_FEATURE_KEYS = {"groups", "baselines", "off_dist_min_coverage",
                 "rep_diff_full_vector"}
_TRAIN_KEYS = {"num_trees", "max_leaves", "min_samples_per_leaf",
               "learning_rate", "ndcg_truncation", "sigmoid_scale", "seed"}


@dataclass(frozen=True)
class ResourcePaths:
    cultural_values: Path | None = None
    official_languages: Path | None = None
    lexicon: Path | None = None
    embeddings_dir: Path | None = None
    distance_tables: tuple[Path, ...] = ()
    language_vectors: dict[str, Path] = field(default_factory=dict)
    transfer_matrix: Path | None = None
    areas: Path | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    manifest: Path
    resources: ResourcePaths
    selection: FeatureSelection
    train: TrainConfig
    k: int
    network_top_m: int
    off_dist_min_coverage: int
    rep_diff_full_vector: bool
    output_dir: Path
    seed: int
    correlation_features: tuple[str, ...]
    config_hash: str


def config_hash(raw: dict) -> str:
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def _reject_unknown(mapping: dict, allowed: set[str], where: str) -> None:
    unknown = set(mapping) - allowed
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(sorted(unknown))}")


def _as_path(root: Path, value, where: str) -> Path:
    if not isinstance(value, str) or not value:
        raise ConfigError(f"{where} must be a non-empty path string")
    p = Path(value)
    return p if p.is_absolute() else root / p


def _checked_file(root: Path, value, where: str, missing: list[str]) -> Path:
    p = _as_path(root, value, where)
    if not p.is_file():
        missing.append(f"{where}: {p}")
    return p


def load_config(path: str | Path, resource_root: str | Path | None = None,
                output_dir: str | Path | None = None) -> ExperimentConfig:
    """Parse, validate, and resolve an experiment config file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    _reject_unknown(raw, _TOP_KEYS, "config")

    if resource_root is not None:
        root = Path(resource_root)
    elif os.environ.get(ENV_RESOURCE_ROOT):
        root = Path(os.environ[ENV_RESOURCE_ROOT])
    else:
        root = path.parent

    missing: list[str] = []
    if "manifest" not in raw:
        raise ConfigError("config lacks required key 'manifest'")
    manifest = _checked_file(root, raw["manifest"], "manifest", missing)

    res_raw = raw.get("resources") or {}
    if not isinstance(res_raw, dict):
        raise ConfigError("'resources' must be a mapping")
    _reject_unknown(res_raw, _RESOURCE_KEYS, "resources")
    simple: dict[str, Path | None] = {}
    for key in ("cultural_values", "official_languages", "lexicon",
                "transfer_matrix", "areas"):
        simple[key] = (_checked_file(root, res_raw[key], f"resources.{key}", missing)
                       if key in res_raw else None)
    embeddings_dir = None
    if "embeddings_dir" in res_raw:
        embeddings_dir = _as_path(root, res_raw["embeddings_dir"],
                                  "resources.embeddings_dir")
        if not embeddings_dir.is_dir():
            missing.append(f"resources.embeddings_dir: {embeddings_dir}")
    tables_raw = res_raw.get("distance_tables", [])
    if not isinstance(tables_raw, list):
        raise ConfigError("'resources.distance_tables' must be a list of paths")
    distance_tables = tuple(
        _checked_file(root, p, "resources.distance_tables", missing)
        for p in tables_raw)
    vectors_raw = res_raw.get("language_vectors", {})
    if not isinstance(vectors_raw, dict):
        raise ConfigError("'resources.language_vectors' must map source -> path")
    language_vectors = {
        str(source): _checked_file(root, p, f"resources.language_vectors.{source}",
                                   missing)
        for source, p in vectors_raw.items()}

    feat_raw = raw.get("features") or {}
    if not isinstance(feat_raw, dict):
        raise ConfigError("'features' must be a mapping")
    _reject_unknown(feat_raw, _FEATURE_KEYS, "features")
    groups = tuple(feat_raw.get("groups", ()) or ())
    baselines = tuple(feat_raw.get("baselines", ()) or ())
    for g in groups:
        if g not in FEATURE_GROUPS:
            raise ConfigError(f"unknown feature group {g!r}; valid: "
                              f"{', '.join(FEATURE_GROUPS)}")
    for b in baselines:
        if b not in BASELINES:
            raise ConfigError(f"unknown baseline {b!r}; valid: "
                              f"{', '.join(BASELINES)}")
    if not groups and not baselines:
        groups = tuple(FEATURE_GROUPS)
    selection = FeatureSelection(groups=groups, baselines=baselines)

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError("'seed' must be an integer")

    train_raw = raw.get("train") or {}
    if not isinstance(train_raw, dict):
        raise ConfigError("'train' must be a mapping")
    _reject_unknown(train_raw, _TRAIN_KEYS, "train")
    train_raw = dict(train_raw)
    train_raw.setdefault("seed", seed)
    try:
        train = TrainConfig(**train_raw)
    except TypeError as exc:
        raise ConfigError(f"bad train settings: {exc}") from exc

    k = raw.get("k", 3)
    if not isinstance(k, int) or k < 1:
        raise ConfigError("'k' must be a positive integer")
    top_m = raw.get("network_top_m", 2)
    if not isinstance(top_m, int) or top_m < 1:
        raise ConfigError("'network_top_m' must be a positive integer")

    corr_raw = raw.get("correlation_features", [])
    if not isinstance(corr_raw, list):
        raise ConfigError("'correlation_features' must be a list of feature names")
    for name in corr_raw:
        if name not in FEATURE_ORDER:
            raise ConfigError(f"unknown correlation feature {name!r}")
    correlation_features = tuple(corr_raw)

    if "output_dir" not in raw and output_dir is None:
        raise ConfigError("config lacks required key 'output_dir'")
    out = Path(output_dir) if output_dir is not None else Path(raw["output_dir"])

    coverage = feat_raw.get("off_dist_min_coverage", 10)
    if not isinstance(coverage, int) or coverage < 1:
        raise ConfigError("'features.off_dist_min_coverage' must be >= 1")
    full_vector = bool(feat_raw.get("rep_diff_full_vector", False))

    if missing:
        raise ConfigError("missing input files:\n  " + "\n  ".join(missing))

    return ExperimentConfig(
        manifest=manifest,
        resources=ResourcePaths(
            cultural_values=simple["cultural_values"],
            official_languages=simple["official_languages"],
            lexicon=simple["lexicon"],
            embeddings_dir=embeddings_dir,
            distance_tables=distance_tables,
            language_vectors=language_vectors,
            transfer_matrix=simple["transfer_matrix"],
            areas=simple["areas"],
        ),
        selection=selection,
        train=train,
        k=k,
        network_top_m=top_m,
        off_dist_min_coverage=coverage,
        rep_diff_full_vector=full_vector,
        output_dir=out,
        seed=seed,
        correlation_features=correlation_features,
        config_hash=config_hash(raw),
    )
