"""Gradient-boosted regression trees trained with listwise ranking gradients.

Each boosting round computes a pseudo-gradient (lambda) per candidate:
for every in-group pair whose relevance labels differ, the logistic
pairwise gradient is weighted by the absolute change in NDCG@k that
swapping the pair would cause, pushing the more relevant candidate up and
the less relevant one down. A regression tree is then fit to the lambdas
with exact greedy variance-reduction splits, and scores advance by
``learning_rate * tree(x)``.

Design points, fixed for reproducibility:

* splits consider raw feature values as thresholds; a value equal to the
  threshold goes left
* candidates with a missing value at a split follow the node's
  missing-direction, chosen during training as the side that maximizes
  gain (ties keep left)
* training is exact and sequential; there is no subsampling, so the seed
  recorded in the config is provenance only
* first-order boosting: leaf values are plain lambda means
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .features import PairFeatureVector

_GAIN_EPS = 1e-12


class TrainingError(Exception):
    """Raised when training inputs are unusable (e.g. degenerate labels)."""


class ScoringError(Exception):
    """Raised when a vector does not cover the model's feature catalog."""


class ModelFormatError(Exception):
    """Raised when a model document cannot be parsed into a full model."""


@dataclass(frozen=True)
class TrainConfig:
    num_trees: int = 100
    max_leaves: int = 8
    min_samples_per_leaf: int = 1
    learning_rate: float = 0.1
    ndcg_truncation: int = 3
    sigmoid_scale: float = 1.0
    seed: int = 0

    def validate(self) -> None:
        if self.num_trees < 0:
            raise TrainingError("num_trees must be >= 0")
        if self.max_leaves < 2:
            raise TrainingError("max_leaves must be >= 2")
        if self.min_samples_per_leaf < 1:
            raise TrainingError("min_samples_per_leaf must be >= 1")
        if not self.learning_rate > 0:
            raise TrainingError("learning_rate must be positive")
        if self.ndcg_truncation < 1:
            raise TrainingError("ndcg_truncation must be >= 1")
        if not self.sigmoid_scale > 0:
            raise TrainingError("sigmoid_scale must be positive")


@dataclass
class QueryGroup:
    """One target dataset's candidates with graded relevance labels."""

    target_id: str
    candidates: list[tuple[PairFeatureVector, int]]

    def __post_init__(self) -> None:
        if len(self.candidates) < 2:
            raise TrainingError(
                f"query group {self.target_id!r} needs at least 2 candidates")
        for vec, rel in self.candidates:
            if rel < 0 or not math.isfinite(rel):
                raise TrainingError(
                    f"query group {self.target_id!r}: bad relevance {rel!r}")

    @property
    def catalog(self) -> tuple[str, ...]:
        return self.candidates[0][0].names()


@dataclass
class TreeNode:
    """Binary regression tree node; leaves have ``feature is None``."""

    value: float = 0.0
    feature: int | None = None
    threshold: float = 0.0
    missing_right: bool = False
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def predict_row(self, row: np.ndarray) -> float:
        node = self
        while not node.is_leaf:
            x = row[node.feature]
            if math.isnan(x):
                node = node.right if node.missing_right else node.left
            elif x <= node.threshold:
                node = node.left
            else:
                node = node.right
        return node.value

    def leaf_count(self) -> int:
        if self.is_leaf:
            return 1
        return self.left.leaf_count() + self.right.leaf_count()


@dataclass
class RankerModel:
    """Trained tree ensemble: score(x) = sum(learning_rate * tree(x))."""

    trees: list[TreeNode]
    learning_rate: float
    feature_catalog: tuple[str, ...]
    train_config: TrainConfig
    training_curve: list[float] = field(default_factory=list)

    def _row(self, x: PairFeatureVector) -> np.ndarray:
        row = np.empty(len(self.feature_catalog), dtype=np.float64)
        for i, name in enumerate(self.feature_catalog):
            if name not in x.values:
                raise ScoringError(
                    f"feature {name!r} missing from vector "
                    f"({x.target_id}, {x.transfer_id})")
            value = x.values[name]
            row[i] = np.nan if value is None else value
        return row

    def score(self, x: PairFeatureVector) -> float:
        row = self._row(x)
        return self.learning_rate * sum(t.predict_row(row) for t in self.trees)

    def rank(self, group: QueryGroup) -> list[str]:
        scored = [(vec.transfer_id, self.score(vec)) for vec, _ in group.candidates]
        scored.sort(key=lambda item: (-item[1], item[0]))
        return [cid for cid, _ in scored]


def score(model: RankerModel, x: PairFeatureVector) -> float:
    return model.score(x)


def rank(model: RankerModel, group: QueryGroup) -> list[str]:
    return model.rank(group)


# ---------------------------------------------------------------------------
# metric helpers used for lambda weights and the training curve


def _discounts(n: int, k: int) -> np.ndarray:
    """Per-position DCG discounts, zero beyond the truncation depth."""
    disc = np.zeros(n, dtype=np.float64)
    for p in range(min(n, k)):
        disc[p] = 1.0 / math.log2(p + 2)
    return disc


def _ideal_dcg(gains: np.ndarray, k: int) -> float:
    top = np.sort(gains)[::-1][:k]
    return float(sum(g / math.log2(p + 2) for p, g in enumerate(top)))


def _ranked_order(scores: np.ndarray, ids: list[str]) -> list[int]:
    return sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))


def _group_ndcg(scores: np.ndarray, gains: np.ndarray, ids: list[str],
                k: int) -> float:
    idcg = _ideal_dcg(gains, k)
    if idcg == 0.0:
        return 0.0
    order = _ranked_order(scores, ids)
    dcg = sum(gains[i] / math.log2(p + 2) for p, i in enumerate(order[:k]))
    return dcg / idcg


def _stable_logistic(x: float) -> float:
    """1 / (1 + exp(x)) without overflow."""
    if x >= 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


def _accumulate_lambdas(scores: np.ndarray, rel: np.ndarray, gains: np.ndarray,
                        ids: list[str], k: int, sigma: float,
                        lambdas: np.ndarray) -> None:
    """Add this group's pairwise gradients into ``lambdas`` (positive = up)."""
    idcg = _ideal_dcg(gains, k)
    if idcg == 0.0:
        return
    n = len(ids)
    order = _ranked_order(scores, ids)
    disc = _discounts(n, k)
    pos = np.empty(n, dtype=np.int64)
    for p, i in enumerate(order):
        pos[i] = p
    for i in range(n):
        for j in range(i + 1, n):
            if rel[i] == rel[j]:
                continue
            hi, lo = (i, j) if rel[i] > rel[j] else (j, i)
            swap = abs(gains[hi] - gains[lo]) * abs(disc[pos[hi]] - disc[pos[lo]])
            if swap == 0.0:
                continue
            weight = swap / idcg
            rho = _stable_logistic(sigma * (scores[hi] - scores[lo]))
            step = sigma * rho * weight
            lambdas[hi] += step
            lambdas[lo] -= step


# ---------------------------------------------------------------------------
# exact greedy tree construction


@dataclass
class _SplitPlan:
    gain: float
    feature: int
    threshold: float
    missing_right: bool
    left_idx: np.ndarray
    right_idx: np.ndarray


def _sse_parts(total: float, sq_total: float, n: int) -> float:
    return sq_total - total * total / n


def _best_split(X: np.ndarray, y: np.ndarray, indices: np.ndarray,
                min_leaf: int) -> _SplitPlan | None:
    n = len(indices)
    if n < 2 * min_leaf:
        return None
    y_node = y[indices]
    parent_sse = _sse_parts(float(y_node.sum()), float((y_node ** 2).sum()), n)
    best: _SplitPlan | None = None
    for f in range(X.shape[1]):
        col = X[indices, f]
        present = ~np.isnan(col)
        pres_idx = indices[present]
        miss_idx = indices[~present]
        if len(pres_idx) < 2:
            continue
        vals = col[present]
        order = np.argsort(vals, kind="stable")
        vals_sorted = vals[order]
        y_sorted = y[pres_idx][order]
        pres_sorted = pres_idx[order]
        csum = np.cumsum(y_sorted)
        csq = np.cumsum(y_sorted ** 2)
        total = float(csum[-1])
        sq_total = float(csq[-1])
        y_miss = y[miss_idx]
        miss_sum = float(y_miss.sum())
        miss_sq = float((y_miss ** 2).sum())
        n_miss = len(miss_idx)
        n_pres = len(pres_idx)
        for b in range(n_pres - 1):
            if vals_sorted[b] == vals_sorted[b + 1]:
                continue
            nl = b + 1
            sum_l = float(csum[b])
            sq_l = float(csq[b])
            for missing_right in (False, True):
                if n_miss == 0 and missing_right:
                    continue
                if missing_right:
                    n_left, s_left, q_left = nl, sum_l, sq_l
                    n_right = n_pres - nl + n_miss
                    s_right = total - sum_l + miss_sum
                    q_right = sq_total - sq_l + miss_sq
                else:
                    n_left = nl + n_miss
                    s_left = sum_l + miss_sum
                    q_left = sq_l + miss_sq
                    n_right = n_pres - nl
                    s_right = total - sum_l
                    q_right = sq_total - sq_l
                if n_left < min_leaf or n_right < min_leaf:
                    continue
                gain = (parent_sse
                        - _sse_parts(s_left, q_left, n_left)
                        - _sse_parts(s_right, q_right, n_right))
                if best is None or gain > best.gain:
                    threshold = float(vals_sorted[b])
                    left_mask = pres_sorted[:nl]
                    right_mask = pres_sorted[nl:]
                    if missing_right:
                        left_idx = left_mask
                        right_idx = np.concatenate([right_mask, miss_idx])
                    else:
                        left_idx = np.concatenate([left_mask, miss_idx])
                        right_idx = right_mask
                    best = _SplitPlan(gain=gain, feature=f, threshold=threshold,
                                      missing_right=missing_right,
                                      left_idx=np.sort(left_idx),
                                      right_idx=np.sort(right_idx))
    if best is None or best.gain <= _GAIN_EPS:
        return None
    return best


def _fit_tree(X: np.ndarray, y: np.ndarray, config: TrainConfig) -> TreeNode:
    """Grow a tree best-first until max_leaves or no split strictly helps."""
    all_idx = np.arange(len(y))
    root = TreeNode(value=float(y.mean()) if len(y) else 0.0)
    heap: list[tuple[float, int, TreeNode, _SplitPlan]] = []
    seq = 0
    plan = _best_split(X, y, all_idx, config.min_samples_per_leaf)
    if plan is not None:
        heapq.heappush(heap, (-plan.gain, seq, root, plan))
        seq += 1
    leaves = 1
    while heap and leaves < config.max_leaves:
        _, _, node, plan = heapq.heappop(heap)
        node.feature = plan.feature
        node.threshold = plan.threshold
        node.missing_right = plan.missing_right
        node.left = TreeNode(value=float(y[plan.left_idx].mean()))
        node.right = TreeNode(value=float(y[plan.right_idx].mean()))
        node.value = 0.0
        leaves += 1
        for child, idx in ((node.left, plan.left_idx), (node.right, plan.right_idx)):
            child_plan = _best_split(X, y, idx, config.min_samples_per_leaf)
            if child_plan is not None:
                heapq.heappush(heap, (-child_plan.gain, seq, child, child_plan))
                seq += 1
    return root


# ---------------------------------------------------------------------------
# training


def _design_matrix(groups: list[QueryGroup],
                   ) -> tuple[np.ndarray, np.ndarray, list[str],
                              list[tuple[int, int]], tuple[str, ...]]:
    catalog = groups[0].catalog
    for g in groups:
        for vec, _ in g.candidates:
            if vec.names() != catalog:
                raise TrainingError(
                    f"feature catalog differs within training groups: "
                    f"({vec.target_id}, {vec.transfer_id})")
    n = sum(len(g.candidates) for g in groups)
    X = np.empty((n, len(catalog)), dtype=np.float64)
    rel = np.empty(n, dtype=np.float64)
    ids: list[str] = []
    slices: list[tuple[int, int]] = []
    row = 0
    for g in groups:
        start = row
        for vec, r in g.candidates:
            for col, name in enumerate(catalog):
                value = vec.values[name]
                X[row, col] = np.nan if value is None else value
            rel[row] = r
            ids.append(vec.transfer_id)
            row += 1
        slices.append((start, row))
    present = ~np.isnan(X)
    if not np.isfinite(X[present]).all():
        raise TrainingError("non-finite feature value after missing-handling")
    return X, rel, ids, slices, catalog


def train(groups: list[QueryGroup], config: TrainConfig) -> RankerModel:
    """Fit the boosted ensemble; deterministic for fixed (groups, config)."""
    config.validate()
    if not groups:
        raise TrainingError("no query groups to train on")
    X, rel, ids, slices, catalog = _design_matrix(groups)
    if all(len(set(rel[a:b])) == 1 for a, b in slices):
        raise TrainingError("degenerate labels: every group has all-equal relevance")

    gains = np.power(2.0, rel) - 1.0
    k = config.ndcg_truncation
    sigma = config.sigmoid_scale
    scores = np.zeros(len(rel), dtype=np.float64)
    trees: list[TreeNode] = []
    curve: list[float] = []

    for _ in range(config.num_trees):
        lambdas = np.zeros(len(rel), dtype=np.float64)
        for a, b in slices:
            _accumulate_lambdas(scores[a:b], rel[a:b], gains[a:b], ids[a:b],
                                k, sigma, lambdas[a:b])
        tree = _fit_tree(X, lambdas, config)
        preds = np.fromiter((tree.predict_row(X[i]) for i in range(len(rel))),
                            dtype=np.float64, count=len(rel))
        scores += config.learning_rate * preds
        trees.append(tree)
        curve.append(float(np.mean([
            _group_ndcg(scores[a:b], gains[a:b], ids[a:b], k)
            for a, b in slices])))

    return RankerModel(trees=trees, learning_rate=config.learning_rate,
                       feature_catalog=catalog, train_config=config,
                       training_curve=curve)


# ---------------------------------------------------------------------------
# persistence

_FORMAT_TAG = "transferrank.ranker"
_FORMAT_VERSION = 1


def _flatten_tree(root: TreeNode) -> list[dict]:
    nodes: list[dict] = []

    def visit(node: TreeNode) -> int:
        slot = len(nodes)
        nodes.append({})
        if node.is_leaf:
            nodes[slot] = {"value": node.value}
        else:
            left = visit(node.left)
            right = visit(node.right)
            nodes[slot] = {
                "feature": node.feature,
                "threshold": node.threshold,
                "missing": "right" if node.missing_right else "left",
                "left": left,
                "right": right,
            }
        return slot

    visit(root)
    return nodes


def _rebuild_tree(nodes: list[dict], slot: int = 0) -> TreeNode:
    try:
        raw = nodes[slot]
    except (IndexError, TypeError) as exc:
        raise ModelFormatError(f"bad node reference {slot}") from exc
    if not isinstance(raw, dict):
        raise ModelFormatError(f"node {slot} is not an object")
    if "value" in raw:
        value = raw["value"]
        if not isinstance(value, (int, float)):
            raise ModelFormatError(f"leaf {slot} has non-numeric value")
        return TreeNode(value=float(value))
    try:
        feature = raw["feature"]
        threshold = raw["threshold"]
        missing = raw["missing"]
        left = _rebuild_tree(nodes, raw["left"])
        right = _rebuild_tree(nodes, raw["right"])
    except KeyError as exc:
        raise ModelFormatError(f"node {slot} lacks field {exc}") from exc
    if missing not in ("left", "right"):
        raise ModelFormatError(f"node {slot} has bad missing-direction {missing!r}")
    if not isinstance(feature, int) or not isinstance(threshold, (int, float)):
        raise ModelFormatError(f"node {slot} has malformed split")
    return TreeNode(feature=feature, threshold=float(threshold),
                    missing_right=(missing == "right"), left=left, right=right)


def save(model: RankerModel) -> str:
    """Serialize to a self-describing JSON document (round-trip precision)."""
    doc = {
        "format": _FORMAT_TAG,
        "version": _FORMAT_VERSION,
        "learning_rate": model.learning_rate,
        "train_config": asdict(model.train_config),
        "feature_catalog": list(model.feature_catalog),
        "trees": [_flatten_tree(t) for t in model.trees],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load(document: str) -> RankerModel:
    """Parse a model document; raises ModelFormatError rather than
    returning a partial model."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != _FORMAT_TAG:
        raise ModelFormatError("not a ranker model document")
    if doc.get("version") != _FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    try:
        catalog = tuple(str(n) for n in doc["feature_catalog"])
        config = TrainConfig(**doc["train_config"])
        learning_rate = float(doc["learning_rate"])
        raw_trees = doc["trees"]
    except (KeyError, TypeError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    trees = []
    for raw in raw_trees:
        if not isinstance(raw, list) or not raw:
            raise ModelFormatError("malformed tree node array")
        tree = _rebuild_tree(raw)
        _check_features(tree, len(catalog))
        trees.append(tree)
    return RankerModel(trees=trees, learning_rate=learning_rate,
                       feature_catalog=catalog, train_config=config)


def _check_features(node: TreeNode, n_features: int) -> None:
    if node.is_leaf:
        return
    if not 0 <= node.feature < n_features:
        raise ModelFormatError(
            f"split references feature index {node.feature} outside the catalog")
    _check_features(node.left, n_features)
    _check_features(node.right, n_features)


def save_file(model: RankerModel, path: str | Path) -> None:
    Path(path).write_text(save(model), encoding="utf-8")


def load_file(path: str | Path) -> RankerModel:
    return load(Path(path).read_text(encoding="utf-8"))
