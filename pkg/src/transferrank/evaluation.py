"""Gold rankings, ranking metrics, and experiment protocols.

The ground truth is a transfer matrix of zero-shot macro-F1 scores for
every directed (target, transfer) dataset pair, plus intra-dataset cells.
Per target, candidates sorted by descending F1 define the gold ranking;
graded relevance is ``max(0, k+1 - rank)`` so that with the default k=3
the top three candidates carry relevance 3, 2, 1 and everything below is
irrelevant to both metrics.

Protocols are evaluated leave-one-target-out: for each target, a ranker
is trained on the query groups of all other targets and scored on the
held-out target's candidates with MAP@k and NDCG@k (reported x100).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Callable, Mapping, Sequence

from . import ranker as _ranker
from .features import PairFeatureVector, drop_feature, CULTURAL_DIMENSIONS
from .ranker import QueryGroup, TrainConfig, TrainingError

logger = logging.getLogger(__name__)


class ProtocolError(Exception):
    """Raised when ground-truth data is incomplete or a protocol misused."""


@dataclass(frozen=True)
class TransferMatrix:
    """Macro-F1 of zero-shot transfer for directed pairs, intra cells included."""

    scores: dict[tuple[str, str], float]

    def __post_init__(self) -> None:
        for (t, c), value in self.scores.items():
            if not math.isfinite(value):
                raise ProtocolError(f"non-finite matrix cell ({t}, {c})")
            if not 0.0 <= value <= 1.0:
                raise ProtocolError(
                    f"matrix cell ({t}, {c}) = {value} outside [0, 1]")

    def ids(self) -> tuple[str, ...]:
        found: set[str] = set()
        for t, c in self.scores:
            found.add(t)
            found.add(c)
        return tuple(sorted(found))

    def require_complete(self) -> None:
        """Every directed cross cell must be present."""
        for t in self.ids():
            for c in self.ids():
                if t != c and (t, c) not in self.scores:
                    raise ProtocolError(f"missing transfer matrix cell ({t}, {c})")

    def intra(self, target: str) -> float | None:
        return self.scores.get((target, target))


@dataclass(frozen=True)
class GoldRanking:
    target_id: str
    order: tuple[str, ...]  # best first
    relevance: dict[str, int]


def gold_rankings(matrix: TransferMatrix, k: int = 3) -> list[GoldRanking]:
    """Per-target gold orders with graded relevance max(0, k+1 - rank)."""
    matrix.require_complete()
    out: list[GoldRanking] = []
    for target in matrix.ids():
        candidates = [c for c in matrix.ids() if c != target]
        if len(candidates) < 2:
            raise ProtocolError(
                f"target {target} has fewer than 2 transfer candidates")
        order = sorted(candidates,
                       key=lambda c: (-matrix.scores[(target, c)], c))
        relevance = {c: max(0, k + 1 - rank)
                     for rank, c in enumerate(order, start=1)}
        out.append(GoldRanking(target_id=target, order=tuple(order),
                               relevance=relevance))
    return out


def ndcg_at_k(predicted: Sequence[str], relevance: Mapping[str, int],
              k: int) -> float:
    """NDCG@k with exponential gains (2^rel - 1) and log2 position discounts.

    An all-zero relevance assignment has IDCG 0 and scores 0 by convention.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    dcg = 0.0
    for p, cid in enumerate(predicted[:k], start=1):
        gain = (1 << relevance.get(cid, 0)) - 1
        dcg += gain / math.log2(p + 1)
    ideal = sorted(relevance.values(), reverse=True)[:k]
    idcg = sum(((1 << r) - 1) / math.log2(p + 1)
               for p, r in enumerate(ideal, start=1))
    if idcg == 0.0:
        return 0.0
    return dcg / idcg


def map_at_k(predicted: Sequence[str], relevant_set: set[str], k: int) -> float:
    """Average precision at k against a binary relevant set."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not relevant_set:
        logger.warning("map_at_k called with an empty relevant set")
        return 0.0
    hits = 0
    total = 0.0
    for p, cid in enumerate(predicted[:k], start=1):
        if cid in relevant_set:
            hits += 1
            total += hits / p
    return total / min(k, len(relevant_set))


def evaluate_ranking(gold: GoldRanking, predicted: Sequence[str],
                     k: int) -> tuple[float, float]:
    """(MAP@k, NDCG@k) of a predicted order against a gold ranking."""
    relevant = {cid for cid, rel in gold.relevance.items() if rel > 0}
    return (map_at_k(predicted, relevant, k),
            ndcg_at_k(predicted, gold.relevance, k))


@dataclass
class MetricReport:
    """Per-target and macro-averaged MAP@k / NDCG@k, reported x100."""

    label: str
    k: int
    per_target: dict[str, tuple[float, float]]  # target -> (map, ndcg)
    mean_map: float
    mean_ndcg: float
    skipped: list[str] = field(default_factory=list)
    config_hash: str = ""
    feature_catalog: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "k": self.k,
            "per_target": {t: {"map": m, "ndcg": n}
                           for t, (m, n) in sorted(self.per_target.items())},
            "mean_map": self.mean_map,
            "mean_ndcg": self.mean_ndcg,
            "skipped": list(self.skipped),
            "config_hash": self.config_hash,
            "feature_catalog": list(self.feature_catalog),
        }


def _make_report(label: str, k: int, per_target: dict[str, tuple[float, float]],
                 skipped: list[str], config_hash: str,
                 catalog: tuple[str, ...]) -> MetricReport:
    if per_target:
        mean_map = sum(m for m, _ in per_target.values()) / len(per_target)
        mean_ndcg = sum(n for _, n in per_target.values()) / len(per_target)
    else:
        mean_map = mean_ndcg = 0.0
    return MetricReport(label=label, k=k, per_target=per_target,
                        mean_map=mean_map, mean_ndcg=mean_ndcg,
                        skipped=skipped, config_hash=config_hash,
                        feature_catalog=catalog)


PairVectors = Mapping[tuple[str, str], PairFeatureVector]


def _require_vector(vectors: PairVectors, target: str,
                    transfer: str) -> PairFeatureVector:
    vec = vectors.get((target, transfer))
    if vec is None:
        raise ProtocolError(f"no feature vector for pair ({target}, {transfer})")
    return vec


def build_group(vectors: PairVectors, gold: GoldRanking) -> QueryGroup:
    """Assemble one target's query group (candidates sorted by id)."""
    candidates = [(_require_vector(vectors, gold.target_id, c),
                   gold.relevance[c])
                  for c in sorted(gold.relevance)]
    return QueryGroup(target_id=gold.target_id, candidates=candidates)


def build_query_groups(vectors: PairVectors, matrix: TransferMatrix,
                       k: int = 3) -> list[QueryGroup]:
    """Query groups for every target, labeled from the gold rankings."""
    return [build_group(vectors, gold) for gold in gold_rankings(matrix, k)]


def loo_predictions(vectors: PairVectors, matrix: TransferMatrix,
                    config: TrainConfig, k: int = 3,
                    ) -> tuple[dict[str, list[str]], list[str]]:
    """Leave-one-target-out predicted orders; returns (predictions, skipped).

    Each fold trains on the query groups of every other target; the
    held-out target's vectors and relevance labels never enter training.
    """
    ids = matrix.ids()
    if len(ids) < 3:
        raise ProtocolError("leave-one-out needs at least 3 targets")
    golds = {g.target_id: g for g in gold_rankings(matrix, k)}
    predictions: dict[str, list[str]] = {}
    skipped: list[str] = []
    for held in ids:
        train_groups = [_build_group(vectors, golds[other])
                        for other in ids if other != held]
        try:
            model = _ranker.train(train_groups, config)
        except TrainingError as exc:
            skipped.append(f"{held}: {exc}")
            logger.warning("fold %s skipped: %s", held, exc)
            continue
        predictions[held] = model.rank(_build_group(vectors, golds[held]))
    return predictions, skipped


def leave_one_out(vectors: PairVectors, matrix: TransferMatrix,
                  config: TrainConfig, k: int = 3, label: str = "loo",
                  config_hash: str = "") -> MetricReport:
    """Run the leave-one-target-out protocol and score each held-out fold."""
    golds = {g.target_id: g for g in gold_rankings(matrix, k)}
    predictions, skipped = loo_predictions(vectors, matrix, config, k)
    catalog = next(iter(vectors.values())).names() if vectors else ()
    per_target = {}
    for target, predicted in predictions.items():
        m, n = evaluate_ranking(golds[target], predicted, k)
        per_target[target] = (m * 100.0, n * 100.0)
    return _make_report(label, k, per_target, skipped, config_hash, catalog)


def ablate_dimension(vectors: PairVectors, matrix: TransferMatrix,
                     config: TrainConfig, dim: str, k: int = 3,
                     config_hash: str = "") -> MetricReport:
    """Leave-one-out with one cultural ratio feature removed; same folds."""
    if dim not in CULTURAL_DIMENSIONS:
        raise ValueError(f"unknown cultural dimension {dim!r}")
    feature = f"rc_{dim}"
    sample = next(iter(vectors.values()), None)
    if sample is None or feature not in sample.values:
        raise ValueError(
            f"feature {feature!r} is not part of the configured catalog")
    reduced = {pair: drop_feature(vec, feature) for pair, vec in vectors.items()}
    return leave_one_out(reduced, matrix, config, k, label=f"-{dim}",
                         config_hash=config_hash)


def feature_group_sweep(vectors_for: Callable[[str], PairVectors],
                        groups: Sequence[str], matrix: TransferMatrix,
                        config: TrainConfig, k: int = 3,
                        config_hash: str = "") -> dict[str, MetricReport]:
    """Leave-one-out once per feature group; insertion order follows input."""
    out: dict[str, MetricReport] = {}
    for group in groups:
        vectors = vectors_for(group)
        _warn_all_missing(vectors, group)
        out[group] = leave_one_out(vectors, matrix, config, k, label=group,
                                   config_hash=config_hash)
    return out


def _warn_all_missing(vectors: PairVectors, group: str) -> None:
    for (target, transfer), vec in vectors.items():
        if vec.values and all(v is None for v in vec.values.values()):
            logger.warning("group %s: pair (%s, %s) has no available features",
                           group, target, transfer)


def relative_loss(matrix: TransferMatrix) -> dict[tuple[str, str], float | None]:
    """Percent loss of each transfer cell against the target's intra cell.

    Computed in decimal arithmetic over the shortest-repr of the stored
    floats, so that values entered as decimals produce artifact-free
    percentages (0.8 vs 0.6 gives exactly 25.0). A zero intra score makes
    the loss undefined (None); transfers beating the intra model yield
    negative losses.
    """
    ids = matrix.ids()
    for target in ids:
        if matrix.intra(target) is None:
            raise ProtocolError(f"missing intra cell for target {target}")
    out: dict[tuple[str, str], float | None] = {}
    for (target, transfer), value in sorted(matrix.scores.items()):
        intra = matrix.intra(target)
        if intra == 0.0:
            out[(target, transfer)] = None
            continue
        d_intra = Decimal(repr(intra))
        d_value = Decimal(repr(value))
        out[(target, transfer)] = float(
            (d_intra - d_value) / d_intra * Decimal(100))
    return out


@dataclass(frozen=True)
class Top3Comparison:
    """Position-exact and set-membership agreement of two top-3 lists."""

    target_id: str
    gold_top3: tuple[str, ...]
    predicted_top3: tuple[str, ...]
    exact: tuple[bool, ...]
    in_set: tuple[bool, ...]

    @property
    def exact_matches(self) -> int:
        return sum(self.exact)

    @property
    def set_matches(self) -> int:
        return sum(self.in_set)


def top3_comparison(gold: GoldRanking,
                    predicted: Sequence[str]) -> Top3Comparison:
    if set(predicted) != set(gold.order):
        raise ProtocolError(
            f"predicted ranking for {gold.target_id} covers different candidates")
    depth = min(3, len(gold.order))
    gold_top = gold.order[:depth]
    pred_top = tuple(predicted[:depth])
    exact = tuple(pred_top[i] == gold_top[i] for i in range(depth))
    gold_set = set(gold_top)
    in_set = tuple(cid in gold_set for cid in pred_top)
    return Top3Comparison(target_id=gold.target_id, gold_top3=gold_top,
                          predicted_top3=pred_top, exact=exact, in_set=in_set)
