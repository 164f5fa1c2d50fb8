"""Command-line pipeline: extract, evaluate, analyze, train, rank.

All commands are driven by one experiment config file (see config.py).
Warnings (coverage gaps, unknown-looking codes) never abort a run; errors
(missing files, malformed rows, missing ground-truth cells) always do,
and the exit code is nonzero iff at least one error occurred.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path

import click

from . import analysis, evaluation, features, ranker, reporting, resources
from .config import ConfigError, ExperimentConfig, load_config
from .corpus import DatasetLoadError, build_registry, load_manifest
from .evaluation import ProtocolError, TransferMatrix
from .features import FeatureError, FeatureExtractor, FeatureSelection
from .ranker import ModelFormatError, ScoringError, TrainingError

logger = logging.getLogger(__name__)

_ERRORS = (ConfigError, DatasetLoadError, FeatureError, ModelFormatError,
           ProtocolError, ScoringError, TrainingError, ValueError,
           analysis.AnalysisError, resources.ResourceError)


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except _ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)
    return wrapper


def _config_options(fn):
    fn = click.option("--output", type=click.Path(), default=None,
                      help="Override the config's output directory.")(fn)
    fn = click.option("--resource-root", type=click.Path(), default=None,
                      help="Root for relative resource paths (overrides "
                           "TRANSFERRANK_RESOURCE_ROOT).")(fn)
    fn = click.option("-c", "--config", "config_path", required=True,
                      type=click.Path(), help="Experiment config file.")(fn)
    return fn


class Pipeline:
    """Loads whatever the configured resources provide, once per command."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        entries = load_manifest(cfg.manifest)
        self.registry, self.errors, self.warnings = build_registry(
            entries, base_dir=cfg.manifest.parent)
        res = cfg.resources
        self.profiles = (resources.load_cultural_table(res.cultural_values)
                         if res.cultural_values else {})
        self.official_languages = (
            resources.load_official_languages(res.official_languages)
            if res.official_languages else {})
        self.lexicon = (resources.load_lexicon(res.lexicon)
                        if res.lexicon else None)
        self.embeddings = (resources.load_embeddings_dir(res.embeddings_dir)
                           if res.embeddings_dir else {})
        self.distance_tables = (
            resources.load_distance_tables(list(res.distance_tables))
            if res.distance_tables else {})
        self.language_vectors = {
            source: resources.load_language_vectors(path, source)
            for source, path in sorted(res.language_vectors.items())}
        self.areas = resources.load_areas(res.areas) if res.areas else {}
        self._matrix: TransferMatrix | None = None

    def fail_on_errors(self) -> None:
        for warning in self.warnings:
            logger.warning("%s", warning)
        if self.errors:
            for err in self.errors:
                click.echo(f"error: {err}", err=True)
            click.echo(f"error: {len(self.errors)} dataset problem(s); aborting",
                       err=True)
            sys.exit(1)

    def extractor(self, selection: FeatureSelection | None = None,
                  ) -> FeatureExtractor:
        cfg = self.cfg
        return FeatureExtractor(
            datasets={ds_id: (reg.descriptor, reg.stats)
                      for ds_id, reg in self.registry.items()},
            selection=selection or cfg.selection,
            profiles=self.profiles,
            official_languages=self.official_languages,
            lexicon=self.lexicon,
            embeddings=self.embeddings,
            distance_tables=self.distance_tables,
            language_vectors=self.language_vectors,
            off_dist_min_coverage=cfg.off_dist_min_coverage,
            rep_diff_full_vector=cfg.rep_diff_full_vector,
        )

    def matrix(self) -> TransferMatrix:
        if self._matrix is None:
            path = self.cfg.resources.transfer_matrix
            if path is None:
                raise ConfigError(
                    "this command needs resources.transfer_matrix in the config")
            self._matrix = resources.load_transfer_matrix(path)
        return self._matrix

    def pair_vectors(self, selection: FeatureSelection | None = None,
                     ) -> dict[tuple[str, str], features.PairFeatureVector]:
        extractor = self.extractor(selection)
        return {(v.target_id, v.transfer_id): v for v in extractor.all_pairs()}

    def outdir(self) -> Path:
        out = self.cfg.output_dir
        out.mkdir(parents=True, exist_ok=True)
        return out


def _prepare(config_path, resource_root, output) -> Pipeline:
    cfg = load_config(config_path, resource_root=resource_root,
                      output_dir=output)
    pipeline = Pipeline(cfg)
    pipeline.fail_on_errors()
    return pipeline


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log at INFO level.")
def main(verbose: bool) -> None:
    """Predict and evaluate transfer-dataset rankings."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


@main.command()
@_config_options
@_guard
def extract(config_path, resource_root, output) -> None:
    """Write the pair-feature table for every directed dataset pair."""
    pipeline = _prepare(config_path, resource_root, output)
    extractor = pipeline.extractor()
    vectors = extractor.all_pairs()
    out = pipeline.outdir()
    header = ["target_id", "transfer_id", *extractor.catalog]
    rows = [[v.target_id, v.transfer_id,
             *(v.values[name] for name in extractor.catalog)] for v in vectors]
    reporting.write_delimited(out / "features.csv", header, rows,
                              pipeline.cfg.config_hash)
    text_rows = [[v.target_id, v.transfer_id,
                  *(reporting.fmt_round(v.values[name], 4)
                    for name in extractor.catalog)] for v in vectors]
    reporting.write_text(out / "features.txt",
                         reporting.render_table(header, text_rows),
                         pipeline.cfg.config_hash)
    click.echo(f"wrote {len(rows)} pair vectors to {out / 'features.csv'}")


def _report_files(out: Path, stem: str, reports: dict[str, evaluation.MetricReport],
                  config_hash: str) -> None:
    """One report set -> .json, .csv, .txt with per-target rows + means."""
    payload = {label: rep.to_dict() for label, rep in reports.items()}
    reporting.write_json(out / f"{stem}.json", {"reports": payload}, config_hash)

    header = ["label", "target", "map", "ndcg"]
    rows = []
    for label, rep in reports.items():
        for target in sorted(rep.per_target):
            m, n = rep.per_target[target]
            rows.append([label, target, m, n])
        rows.append([label, "MEAN", rep.mean_map, rep.mean_ndcg])
    reporting.write_delimited(out / f"{stem}.csv", header, rows, config_hash)

    lines: list[str] = []
    for label, rep in reports.items():
        lines.append(f"[{label}]  k={rep.k}")
        table_rows = [[t, reporting.fmt_round(m), reporting.fmt_round(n)]
                      for t, (m, n) in sorted(rep.per_target.items())]
        table_rows.append(["MEAN", reporting.fmt_round(rep.mean_map),
                           reporting.fmt_round(rep.mean_ndcg)])
        lines += reporting.render_table(["target", "MAP", "NDCG"], table_rows)
        for note in rep.skipped:
            lines.append(f"skipped fold: {note}")
        lines.append("")
    reporting.write_text(out / f"{stem}.txt", lines, config_hash)


@main.command()
@_config_options
@click.option("--mode", type=click.Choice(["loo", "ablate", "groups"]),
              default="loo", show_default=True)
@_guard
def evaluate(config_path, resource_root, output, mode) -> None:
    """Run the leave-one-target-out protocol (plain, ablations, or groups)."""
    pipeline = _prepare(config_path, resource_root, output)
    cfg = pipeline.cfg
    matrix = pipeline.matrix()
    out = pipeline.outdir()

    if mode == "loo":
        vectors = pipeline.pair_vectors()
        report = evaluation.leave_one_out(vectors, matrix, cfg.train, cfg.k,
                                          label="loo",
                                          config_hash=cfg.config_hash)
        _report_files(out, "loo_report", {"loo": report}, cfg.config_hash)
        click.echo(f"loo: MAP {report.mean_map:.2f}  NDCG {report.mean_ndcg:.2f}")
        return

    if mode == "ablate":
        if "Cultural" not in cfg.selection.groups:
            raise ConfigError(
                "ablation requires the Cultural group in features.groups")
        vectors = pipeline.pair_vectors()
        reports = {"BEST": evaluation.leave_one_out(
            vectors, matrix, cfg.train, cfg.k, label="BEST",
            config_hash=cfg.config_hash)}
        for dim in features.CULTURAL_DIMENSIONS:
            rep = evaluation.ablate_dimension(vectors, matrix, cfg.train, dim,
                                              cfg.k, config_hash=cfg.config_hash)
            reports[rep.label] = rep
        _report_files(out, "ablation_report", reports, cfg.config_hash)
        click.echo(f"wrote ablation reports for {len(reports) - 1} dimensions")
        return

    # mode == "groups": sweep the full canonical group set
    group_names = list(features.FEATURE_GROUPS)
    full = pipeline.pair_vectors(
        FeatureSelection(groups=tuple(group_names)))

    def vectors_for(group: str):
        names = features.resolve_catalog(groups=(group,))
        return {pair: features.subset(vec, names) for pair, vec in full.items()}

    reports = evaluation.feature_group_sweep(vectors_for, group_names, matrix,
                                             cfg.train, cfg.k,
                                             config_hash=cfg.config_hash)
    _report_files(out, "groups_report", reports, cfg.config_hash)

    # Table-style summary: one row per target plus the AVG row.
    targets = matrix.ids()
    header = ["target"]
    for group in group_names:
        header += [f"{group}_map", f"{group}_ndcg"]
    rows = []
    for target in targets:
        row: list = [target]
        for group in group_names:
            cell = reports[group].per_target.get(target)
            row += [cell[0] if cell else None, cell[1] if cell else None]
        rows.append(row)
    avg: list = ["AVG"]
    for group in group_names:
        avg += [reports[group].mean_map, reports[group].mean_ndcg]
    rows.append(avg)
    reporting.write_delimited(out / "groups_table.csv", header, rows,
                              cfg.config_hash)
    text_rows = [[row[0], *(reporting.fmt_round(c) for c in row[1:])]
                 for row in rows]
    reporting.write_text(out / "groups_table.txt",
                         reporting.render_table(header, text_rows),
                         cfg.config_hash)
    click.echo(f"wrote group sweep over {len(group_names)} groups")


@main.command()
@_config_options
@click.option("--which",
              type=click.Choice(["network", "correlate", "project", "loss",
                                 "top3"]),
              required=True)
@_guard
def analyze(config_path, resource_root, output, which) -> None:
    """Export one of the data analyses."""
    pipeline = _prepare(config_path, resource_root, output)
    out = pipeline.outdir()
    handler = {
        "network": _analyze_network,
        "correlate": _analyze_correlate,
        "project": _analyze_project,
        "loss": _analyze_loss,
        "top3": _analyze_top3,
    }[which]
    handler(pipeline, out)


def _analyze_network(pipeline: Pipeline, out: Path) -> None:
    cfg = pipeline.cfg
    if pipeline.lexicon is None:
        raise ConfigError("network analysis needs resources.lexicon")
    if not pipeline.embeddings:
        raise ConfigError("network analysis needs resources.embeddings_dir")
    if cfg.resources.areas is None:
        raise ConfigError("network analysis needs resources.areas")
    langs = sorted(set(pipeline.embeddings) & set(pipeline.lexicon.languages()))
    excluded = sorted(set(pipeline.lexicon.languages()) - set(langs))
    if excluded:
        logger.warning("languages without embeddings excluded from network: %s",
                       ", ".join(excluded))
    distances: dict[tuple[str, str], float | None] = {}
    for i, a in enumerate(langs):
        for b in langs[i + 1:]:
            value, _ = features.offensive_distance(
                pipeline.lexicon, pipeline.embeddings[a], pipeline.embeddings[b])
            distances[(a, b)] = value
    graph = analysis.knn_network(distances, cfg.network_top_m, pipeline.areas)
    untagged = sorted(lang for lang, area in graph.nodes if area is None)
    if untagged:
        raise ConfigError(
            f"areas file lacks tags for network nodes: {', '.join(untagged)}")
    agreement = analysis.edge_area_agreement(graph)
    (out / "network.dot").write_text(
        analysis.to_dot(graph, comment=f"config_hash={cfg.config_hash}"),
        encoding="utf-8")
    area_of = dict(graph.nodes)
    reporting.write_delimited(
        out / "network_edges.csv",
        ["lang_a", "lang_b", "kind", "same_area"],
        [[a, b, kind, int(area_of[a] == area_of[b])] for a, b, kind in graph.edges],
        cfg.config_hash)
    mutual = sum(1 for _, _, kind in graph.edges if kind == "mutual")
    reporting.write_text(out / "network.txt", [
        f"nodes: {len(graph.nodes)}",
        f"edges: {len(graph.edges)} ({mutual} mutual, "
        f"{len(graph.edges) - mutual} exclusive)",
        f"top_m: {cfg.network_top_m}",
        f"edge_area_agreement: {agreement:.4f}",
    ], cfg.config_hash)
    click.echo(f"network: {len(graph.nodes)} nodes, {len(graph.edges)} edges, "
               f"area agreement {agreement:.1%}")


def _analyze_correlate(pipeline: Pipeline, out: Path) -> None:
    cfg = pipeline.cfg
    extractor = pipeline.extractor()
    samples = extractor.all_pairs()
    names = cfg.correlation_features or extractor.catalog
    matrix = analysis.correlation_matrix(samples, names)
    header = ["feature", *names]
    rows = [[a, *(matrix.get(a, b) for b in names)] for a in names]
    reporting.write_delimited(out / "correlations.csv", header, rows,
                              cfg.config_hash)
    long_rows = [[a, b, matrix.get(a, b), matrix.count(a, b)]
                 for i, a in enumerate(names) for b in names[i:]]
    reporting.write_delimited(out / "correlations_long.csv",
                              ["feature_a", "feature_b", "r", "n"], long_rows,
                              cfg.config_hash)
    text_rows = [[a, *(reporting.fmt_round(matrix.get(a, b), 3) for b in names)]
                 for a in names]
    reporting.write_text(out / "correlations.txt",
                         reporting.render_table(header, text_rows),
                         cfg.config_hash)
    click.echo(f"wrote correlations over {len(names)} features "
               f"({len(samples)} pair samples)")


def _analyze_project(pipeline: Pipeline, out: Path) -> None:
    cfg = pipeline.cfg
    if not pipeline.profiles:
        raise ConfigError("projection needs resources.cultural_values")
    profiles = {
        country: [profile.dimension(d) for d in features.CULTURAL_DIMENSIONS]
        for country, profile in pipeline.profiles.items()}
    coords = analysis.pca_2d(profiles)
    rows = [[cid, x, y, pipeline.areas.get(cid)]
            for cid, (x, y) in sorted(coords.items())]
    reporting.write_delimited(out / "projection.csv", ["id", "x", "y", "area"],
                              rows, cfg.config_hash)
    text_rows = [[cid, reporting.fmt_round(x, 4), reporting.fmt_round(y, 4),
                  area or "-"] for cid, x, y, area in rows]
    reporting.write_text(out / "projection.txt",
                         reporting.render_table(["id", "x", "y", "area"],
                                                text_rows),
                         cfg.config_hash)
    click.echo(f"projected {len(rows)} cultural profiles")


def _analyze_loss(pipeline: Pipeline, out: Path) -> None:
    cfg = pipeline.cfg
    matrix = pipeline.matrix()
    losses = evaluation.relative_loss(matrix)
    rows = [[t, c, losses[(t, c)]] for t, c in sorted(losses)]
    reporting.write_delimited(out / "relative_loss.csv",
                              ["target_id", "transfer_id", "loss_percent"],
                              rows, cfg.config_hash)
    ids = matrix.ids()
    header = ["target \\ transfer", *ids]
    grid = [[t, *(reporting.fmt_round(losses.get((t, c)), 1) for c in ids)]
            for t in ids]
    reporting.write_text(out / "relative_loss.txt",
                         reporting.render_table(header, grid), cfg.config_hash)
    click.echo(f"wrote relative losses for {len(rows)} cells")


def _analyze_top3(pipeline: Pipeline, out: Path) -> None:
    cfg = pipeline.cfg
    matrix = pipeline.matrix()
    vectors = pipeline.pair_vectors()
    golds = {g.target_id: g
             for g in evaluation.gold_rankings(matrix, cfg.k)}
    predictions, skipped = evaluation.loo_predictions(vectors, matrix,
                                                      cfg.train, cfg.k)
    comparisons = [evaluation.top3_comparison(golds[t], predictions[t])
                   for t in sorted(predictions)]
    rows = [[c.target_id, "|".join(c.gold_top3), "|".join(c.predicted_top3),
             c.exact_matches, c.set_matches] for c in comparisons]
    header = ["target", "gold_top3", "predicted_top3", "exact_matches",
              "set_matches"]
    reporting.write_delimited(out / "top3.csv", header, rows, cfg.config_hash)
    lines = reporting.render_table(header,
                                   [[str(c) for c in row] for row in rows])
    lines += [f"skipped fold: {note}" for note in skipped]
    reporting.write_text(out / "top3.txt", lines, cfg.config_hash)
    reporting.write_json(out / "top3.json", {
        "comparisons": [{
            "target": c.target_id,
            "gold_top3": list(c.gold_top3),
            "predicted_top3": list(c.predicted_top3),
            "exact": list(c.exact),
            "in_set": list(c.in_set),
        } for c in comparisons],
        "skipped": skipped,
    }, cfg.config_hash)
    click.echo(f"wrote top-3 comparisons for {len(comparisons)} targets")


@main.command()
@_config_options
@click.option("--model-out", type=click.Path(), default=None,
              help="Model file path (default: <output_dir>/model.json).")
@_guard
def train(config_path, resource_root, output, model_out) -> None:
    """Train a ranking model on every target's query group and save it."""
    pipeline = _prepare(config_path, resource_root, output)
    cfg = pipeline.cfg
    matrix = pipeline.matrix()
    vectors = pipeline.pair_vectors()
    golds = evaluation.gold_rankings(matrix, cfg.k)
    groups = [evaluation._build_group(vectors, gold) for gold in golds]
    model = ranker.train(groups, cfg.train)
    doc = json.loads(ranker.save(model))
    doc["config_hash"] = cfg.config_hash
    path = Path(model_out) if model_out else pipeline.outdir() / "model.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    click.echo(f"trained {len(model.trees)} trees on {len(groups)} groups "
               f"-> {path}")


@main.command("rank")
@_config_options
@click.option("--model", "model_path", required=True, type=click.Path(),
              help="A model file produced by the train command.")
@click.option("--target", "target_id", required=True,
              help="Dataset id to rank transfer candidates for.")
@click.option("--candidates", default=None,
              help="Comma-separated candidate ids (default: all others).")
@_guard
def rank_cmd(config_path, resource_root, output, model_path, target_id,
             candidates) -> None:
    """Score candidate transfer datasets for one target with a saved model."""
    pipeline = _prepare(config_path, resource_root, output)
    cfg = pipeline.cfg
    model = ranker.load_file(model_path)
    if target_id not in pipeline.registry:
        raise ConfigError(f"unknown target dataset {target_id!r}")
    if candidates:
        cand_ids = [c.strip() for c in candidates.split(",") if c.strip()]
    else:
        cand_ids = [c for c in sorted(pipeline.registry) if c != target_id]
    if not cand_ids:
        raise ConfigError("no candidates to rank")
    extractor = pipeline.extractor()
    scored = []
    for cid in cand_ids:
        if cid not in pipeline.registry:
            raise ConfigError(f"unknown candidate dataset {cid!r}")
        vec = extractor.vector(target_id, cid)
        scored.append((cid, model.score(vec)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    out = pipeline.outdir()
    rows = [[pos, cid, value] for pos, (cid, value) in enumerate(scored, 1)]
    reporting.write_delimited(out / "ranking.csv",
                              ["rank", "transfer_id", "score"], rows,
                              cfg.config_hash)
    text_rows = [[str(pos), cid, reporting.fmt_round(value, 6)]
                 for pos, cid, value in rows]
    reporting.write_text(out / "ranking.txt",
                         reporting.render_table(["rank", "transfer_id", "score"],
                                                text_rows),
                         cfg.config_hash)
    for pos, cid, value in rows:
        click.echo(f"{pos}. {cid}  ({value:.6f})")


if __name__ == "__main__":
    main()
