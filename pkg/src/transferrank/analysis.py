"""Exploratory analyses exported as data, not plots.

* a nearest-neighbor language network over offensive-lexicon closeness
  (an edge connects languages that rank in each other's top-m; mutual
  edges are rendered solid in DOT, one-directional ones dashed)
* the fraction of network edges whose endpoints share a cultural area
* pairwise Pearson correlations over pairwise-complete feature samples
* a deterministic 2D principal-component projection of cultural profiles

"Closest" under the offensive-lexicon measure means highest cosine value;
the name says distance but the formula is a similarity, and the network
keeps that orientation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .features import PairFeatureVector

logger = logging.getLogger(__name__)


class AnalysisError(Exception):
    pass


@dataclass(frozen=True)
class NetworkGraph:
    """Nodes tagged with a cultural area; edges classified mutual/exclusive."""

    nodes: tuple[tuple[str, str | None], ...]  # (language, area)
    edges: tuple[tuple[str, str, str], ...]    # (a, b, "mutual" | "exclusive"), a < b


def knn_network(distances: Mapping[tuple[str, str], float | None],
                m: int, areas: Mapping[str, str]) -> NetworkGraph:
    """Build the top-m closeness network.

    Per node, other languages are sorted by descending value (ties broken
    by language code) and the top m are its neighbors; an edge exists iff
    at least one endpoint selected the other, and is mutual iff both did.
    Nodes with no usable value toward any other node are excluded with a
    diagnostic. The result depends only on per-node rank order, so any
    strictly monotone transformation of the values leaves it unchanged.
    """
    langs: set[str] = set()
    for a, b in distances:
        langs.add(a)
        langs.add(b)
    nodes = sorted(langs)
    if m < 1:
        raise AnalysisError("m must be >= 1")
    if m >= len(nodes):
        raise AnalysisError(f"m={m} must be smaller than the node count {len(nodes)}")

    def value(a: str, b: str) -> float | None:
        v = distances.get((a, b))
        if v is None:
            v = distances.get((b, a))
        return v

    top: dict[str, tuple[str, ...]] = {}
    included: list[str] = []
    for a in nodes:
        ranked = sorted(
            ((value(a, b), b) for b in nodes if b != a and value(a, b) is not None),
            key=lambda item: (-item[0], item[1]))
        if not ranked:
            logger.warning("language %s excluded: no usable closeness values", a)
            continue
        included.append(a)
        top[a] = tuple(b for _, b in ranked[:m])

    chosen: dict[tuple[str, str], set[str]] = {}
    for a in included:
        for b in top[a]:
            if b not in top:
                continue
            key = (a, b) if a < b else (b, a)
            chosen.setdefault(key, set()).add(a)
    edges = tuple(
        (a, b, "mutual" if len(voters) == 2 else "exclusive")
        for (a, b), voters in sorted(chosen.items()))
    node_tuples = tuple((lang, areas.get(lang)) for lang in included)
    return NetworkGraph(nodes=node_tuples, edges=edges)


def edge_area_agreement(graph: NetworkGraph) -> float:
    """Fraction of edges whose endpoints share a cultural area."""
    area_of = {}
    for lang, area in graph.nodes:
        if area is None:
            raise AnalysisError(f"node {lang} has no cultural area tag")
        area_of[lang] = area
    if not graph.edges:
        logger.warning("edge_area_agreement on an empty edge set")
        return 0.0
    same = sum(1 for a, b, _ in graph.edges if area_of[a] == area_of[b])
    return same / len(graph.edges)


def _dot_id(name: str) -> str:
    if name.isidentifier():
        return name
    return '"' + name.replace('"', '\\"') + '"'


def to_dot(graph: NetworkGraph, comment: str | None = None) -> str:
    """Render the network in DOT: solid mutual edges, dashed exclusive
    ones, nodes clustered by area."""
    lines: list[str] = []
    if comment:
        lines.append(f"// {comment}")
    lines.append("graph closeness_network {")
    by_area: dict[str, list[str]] = {}
    untagged: list[str] = []
    for lang, area in graph.nodes:
        if area is None:
            untagged.append(lang)
        else:
            by_area.setdefault(area, []).append(lang)
    for i, area in enumerate(sorted(by_area)):
        lines.append(f"  subgraph cluster_{i} {{")
        lines.append(f'    label="{area}";')
        for lang in sorted(by_area[area]):
            lines.append(f'    {_dot_id(lang)} [area="{area}"];')
        lines.append("  }")
    for lang in sorted(untagged):
        lines.append(f"  {_dot_id(lang)};")
    for a, b, kind in graph.edges:
        style = "solid" if kind == "mutual" else "dashed"
        lines.append(f"  {_dot_id(a)} -- {_dot_id(b)} [style={style}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def pearson(xs: Sequence[float | None], ys: Sequence[float | None],
            ) -> float | None:
    """Pearson product-moment correlation; pairs with a missing side are
    dropped first, and zero variance on either side yields None."""
    if len(xs) != len(ys):
        raise AnalysisError("sequences must have equal length")
    pairs = [(float(x), float(y)) for x, y in zip(xs, ys)
             if x is not None and y is not None
             and not (isinstance(x, float) and math.isnan(x))
             and not (isinstance(y, float) and math.isnan(y))]
    if len(pairs) < 2:
        return None
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(np.sqrt((xc ** 2).sum()))
    sy = float(np.sqrt((yc ** 2).sum()))
    if sx == 0.0 or sy == 0.0:
        return None
    return float((xc * yc).sum() / (sx * sy))


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric pairwise correlations with per-pair sample counts."""

    features: tuple[str, ...]
    r: dict[tuple[str, str], float | None]
    n: dict[tuple[str, str], int]

    def get(self, a: str, b: str) -> float | None:
        key = (a, b) if a <= b else (b, a)
        return self.r[key]

    def count(self, a: str, b: str) -> int:
        key = (a, b) if a <= b else (b, a)
        return self.n[key]


def correlation_matrix(samples: Sequence[PairFeatureVector],
                       features: Sequence[str]) -> CorrelationMatrix:
    """Pairwise-complete Pearson over the given features.

    Each unordered feature pair is computed once from the samples where
    both values are present; the per-pair sample count is recorded so
    coverage gaps stay visible.
    """
    columns: dict[str, list[float | None]] = {
        f: [vec.values.get(f) for vec in samples] for f in features}
    for f in features:
        if all(v is None for v in columns[f]):
            logger.warning("feature %s missing from every sample", f)
    r: dict[tuple[str, str], float | None] = {}
    n: dict[tuple[str, str], int] = {}
    for i, a in enumerate(features):
        for b in features[i:]:
            key = (a, b) if a <= b else (b, a)
            xs = columns[a]
            ys = columns[b]
            n[key] = sum(1 for x, y in zip(xs, ys)
                         if x is not None and y is not None)
            r[key] = pearson(xs, ys)
    return CorrelationMatrix(features=tuple(features), r=r, n=n)


def pca_2d(profiles: Mapping[str, Sequence[float | None]],
           ) -> dict[str, tuple[float, float]]:
    """Project complete profile vectors onto their top two principal
    components.

    Deterministic: components are eigenvectors of the covariance matrix
    ordered by descending eigenvalue, with the sign convention that each
    component's largest-magnitude loading is positive. Profiles with any
    missing dimension are excluded with a diagnostic; rank-1 data keeps a
    zero second coordinate.
    """
    ids: list[str] = []
    rows: list[list[float]] = []
    for pid in sorted(profiles):
        vec = profiles[pid]
        if any(v is None or (isinstance(v, float) and math.isnan(v)) for v in vec):
            logger.warning("profile %s excluded from projection: missing values", pid)
            continue
        ids.append(pid)
        rows.append([float(v) for v in vec])
    if len(rows) < 3:
        raise AnalysisError("projection needs at least 3 complete profiles")
    X = np.array(rows, dtype=np.float64)
    X = X - X.mean(axis=0)
    cov = (X.T @ X) / (len(rows) - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]

    components = []
    scale = float(eigvals[0]) if eigvals.size else 0.0
    for ci in range(2):
        comp = eigvecs[:, ci].copy()
        if ci == 1 and (eigvals.size < 2 or eigvals[1] <= max(scale, 1.0) * 1e-12):
            logger.warning("projection input has rank < 2; second coordinate is 0")
            comp = np.zeros_like(comp)
        else:
            pivot = int(np.argmax(np.abs(comp)))
            if comp[pivot] < 0:
                comp = -comp
        components.append(comp)
    coords = X @ np.column_stack(components)
    return {pid: (float(coords[i, 0]), float(coords[i, 1]))
            for i, pid in enumerate(ids)}
