"""Cross-validated experiment orchestration and report assembly.

Runs every configured (method, template) cell over article-grouped folds,
always scoring textual similarity and optionally scoring live/mocked
search results, then assembles a JSON report plus aligned plain-text
tables: per-cell aggregates, per-sample detail, prompt-sensitivity
summaries, similarity-vs-search correlations, pairwise method overlaps,
Borda ensembles, and human error-label tallies.
"""

from __future__ import annotations

import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

from . import rulegen
from .corpus import ClaimRecord, load_dataset, split_folds
from .ensemble import combined_outcomes
from .promptgen import (
    GenerationBackend,
    GenerationParams,
    HTTPBackend,
    StubBackend,
    generate,
    postprocess,
    render_few_shot,
    render_zero_shot,
    select_few_shot_examples,
    template_by_id,
)
from .rulegen import GENERATION_METHODS, GeneratedQuery, LinguisticAnnotation
from .searcheval import (
    BingSearchEngine,
    MockSearchEngine,
    SampleSearchOutcome,
    SearchEngine,
    SnapshotStore,
    evaluate_sample,
    execute_repeated,
    search_metrics,
)
from .textmetrics import compare, pearson

log = logging.getLogger(__name__)

ERROR_CATEGORIES = (
    "missing_key_term",
    "needs_external_context",
    "wrong_entity",
    "hallucination",
    "recreated_claim",
    "query_looks_good",
)

RULE_METHODS = ("verbatim", "named_entities", "noun_phrases")
PROMPT_METHODS = ("zero_shot", "few_shot_1", "few_shot_2", "few_shot_3", "fine_tuned")

_SIM_KEYS = ("rouge1_f1", "rouge2_f1", "rougeL_f1", "levenshtein_ratio")
_SEARCH_KEYS = ("fa_pct", "fm_pct", "fo_pct", "mrr")


@dataclass
class ErrorLabel:
    """A manually assigned failure category for one generated query."""

    claim_id: str
    category: str
    note: str = ""

    def __post_init__(self) -> None:
        if self.category not in ERROR_CATEGORIES:
            raise ValueError(
                f"unknown error category {self.category!r} (known: {', '.join(ERROR_CATEGORIES)})"
            )


def load_error_labels(path: str | Path) -> list[ErrorLabel]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            try:
                out.append(
                    ErrorLabel(obj["claim_id"], obj["category"], obj.get("note", ""))
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return out


def tally_error_labels(labels: list[ErrorLabel]) -> dict:
    tallies = {category: 0 for category in ERROR_CATEGORIES}
    for label in labels:
        tallies[label.category] += 1
    tallies["total"] = len(labels)
    return tallies


@dataclass
class ExperimentConfig:
    """Everything one experiment run needs, loadable from a JSON file."""

    dataset_path: str
    methods: list[dict]
    annotations_path: str | None = None
    folds: int = 4
    seed: int = 0
    engine: dict | None = None
    executions: int = 3
    top_k: int = 10
    backend: dict | None = None
    generation: GenerationParams = field(default_factory=GenerationParams)
    ensembles: list[dict] = field(default_factory=list)
    snapshot_dir: str | None = None
    error_labels_path: str | None = None
    trainer_config: dict | None = None
    strict_url_match: bool = False
    raw: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        config = cls(
            dataset_path=obj["dataset"],
            methods=[dict(m) for m in obj["methods"]],
            annotations_path=obj.get("annotations"),
            folds=obj.get("folds", 4),
            seed=obj.get("seed", 0),
            engine=obj.get("engine"),
            executions=obj.get("executions", 3),
            top_k=obj.get("top_k", 10),
            backend=obj.get("backend"),
            generation=GenerationParams(**obj.get("generation", {})),
            ensembles=[dict(e) for e in obj.get("ensembles", [])],
            snapshot_dir=obj.get("snapshots"),
            error_labels_path=obj.get("error_labels"),
            trainer_config=obj.get("trainer_config"),
            strict_url_match=obj.get("strict_url_match", False),
            raw=obj,
        )
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        """Load a config file, resolving relative paths against its directory.

        The report embeds the file's original (unresolved) content so that
        re-runs from any working directory stay byte-identical.
        """
        with open(path, encoding="utf-8") as fh:
            original = json.load(fh)
        base = Path(path).resolve().parent

        def resolve(p: str | None) -> str | None:
            if not p:
                return p
            return p if Path(p).is_absolute() else str(base / p)

        resolved = json.loads(json.dumps(original))
        for key in ("dataset", "annotations", "snapshots", "error_labels"):
            if resolved.get(key):
                resolved[key] = resolve(resolved[key])
        if resolved.get("engine", {}) and resolved["engine"].get("script"):
            resolved["engine"]["script"] = resolve(resolved["engine"]["script"])
        if resolved.get("backend", {}) and resolved["backend"].get("map"):
            resolved["backend"]["map"] = resolve(resolved["backend"]["map"])
        config = cls.from_dict(resolved)
        config.raw = original
        return config

    def validate(self) -> None:
        if not self.methods:
            raise ValueError("no methods configured")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        configured: list[tuple[str, str | None]] = []
        for spec in self.methods:
            method = spec.get("method")
            if method not in GENERATION_METHODS:
                raise ValueError(f"unknown method {method!r}")
            templates = spec.get("templates")
            if method in RULE_METHODS:
                if templates:
                    raise ValueError(f"method {method!r} takes no templates")
                configured.append((method, None))
                continue
            if not templates:
                raise ValueError(f"method {method!r} needs at least one template")
            for template_id in templates:
                template_by_id(template_id)  # raises on unknown ids
                configured.append((method, template_id))
            if self.backend is None:
                raise ValueError(f"method {method!r} needs a generation backend")
        if any(m in ("named_entities", "noun_phrases") for m, _ in configured):
            if not self.annotations_path:
                raise ValueError("named_entities/noun_phrases need an annotations file")
        methods_used = {m for m, _ in configured}
        for ens in self.ensembles:
            members = ens.get("methods", [])
            priorities = ens.get("priorities", [])
            if len(members) < 1:
                raise ValueError("an ensemble needs at least one method")
            if len(priorities) != len(members):
                raise ValueError("ensemble priorities must parallel its methods")
            if len(set(priorities)) != len(priorities):
                raise ValueError("ensemble priorities must be unique")
            missing = [m for m in members if m not in methods_used]
            if missing:
                raise ValueError(f"ensemble references unconfigured methods: {missing}")
        if self.executions < 1:
            raise ValueError("executions must be >= 1")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")

    def cell_keys(self) -> list[tuple[str, str | None]]:
        out: list[tuple[str, str | None]] = []
        for spec in self.methods:
            method = spec["method"]
            if method in RULE_METHODS:
                out.append((method, None))
            else:
                out.extend((method, t) for t in spec["templates"])
        return out

    def first_template(self, method: str) -> str | None:
        for spec in self.methods:
            if spec["method"] == method:
                templates = spec.get("templates")
                return templates[0] if templates else None
        raise KeyError(f"method {method!r} is not configured")


def build_engine(config: ExperimentConfig) -> SearchEngine | None:
    """Fresh engine per cell so scripted call order and dropout draws treat
    every method identically."""
    if config.engine is None:
        return None
    kind = config.engine.get("kind")
    if kind == "mock":
        script = config.engine.get("script")
        if script:
            return MockSearchEngine.from_file(script)
        return MockSearchEngine(
            results=config.engine.get("results", {}),
            dropout=config.engine.get("dropout", 0.0),
            seed=config.engine.get("seed", 0),
        )
    if kind == "bing":
        return BingSearchEngine(
            requests_per_second=config.engine.get("requests_per_second", 1.0),
            retries=config.engine.get("retries", 2),
        )
    raise ValueError(f"unknown engine kind {kind!r}")


def build_backend(config: ExperimentConfig) -> GenerationBackend | None:
    if config.backend is None:
        return None
    kind = config.backend.get("kind")
    if kind == "stub":
        mapping_path = config.backend.get("map")
        if mapping_path:
            return StubBackend.from_file(mapping_path)
        return StubBackend(config.backend.get("mapping", {}))
    if kind == "http":
        return HTTPBackend(
            config.backend["url"],
            timeout=config.backend.get("timeout", 30.0),
            retries=config.backend.get("retries", 2),
        )
    raise ValueError(f"unknown backend kind {kind!r}")


def _generate_queries(
    method: str,
    template_id: str | None,
    fold: int,
    test: list[ClaimRecord],
    train: list[ClaimRecord],
    annotations: dict[str, LinguisticAnnotation] | None,
    backend: GenerationBackend | None,
    config: ExperimentConfig,
    selection_cache: dict,
) -> list[GeneratedQuery]:
    if method == "verbatim":
        return [rulegen.verbatim(r) for r in test]
    if method in ("named_entities", "noun_phrases"):
        if annotations is None:
            raise ValueError(f"method {method!r} needs annotations")
        op = rulegen.named_entities if method == "named_entities" else rulegen.noun_phrases
        out = []
        for r in test:
            if r.claim_id not in annotations:
                raise ValueError(f"no annotation for claim {r.claim_id!r}")
            out.append(op(r, annotations[r.claim_id]))
        return out
    if backend is None:
        raise ValueError(f"method {method!r} needs a generation backend")
    tpl = template_by_id(template_id)
    if method in ("zero_shot", "fine_tuned"):
        out = []
        for r in test:
            raw = generate(backend, render_zero_shot(tpl, r.claim_text), config.generation)
            out.append(GeneratedQuery(r.claim_id, method, postprocess(raw, tpl), template_id))
        return out
    if method.startswith("few_shot_"):
        shots = int(method.rsplit("_", 1)[1])
        cache_key = (fold, template_id)
        if cache_key not in selection_cache:
            selection_cache[cache_key] = select_few_shot_examples(
                train, backend, tpl, config.generation
            )
        examples = selection_cache[cache_key][:shots]
        out = []
        for r in test:
            raw = generate(backend, render_few_shot(tpl, examples, r.claim_text), config.generation)
            out.append(GeneratedQuery(r.claim_id, method, postprocess(raw, tpl), template_id))
        return out
    raise ValueError(f"unknown method {method!r}")


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _fold_aggregate(fold, test, sims, outcomes, top_k) -> dict:
    row = {
        "fold": fold,
        "n_samples": len(test),
        "rouge1_f1": _mean([s.rouge1.f1 for s in sims]),
        "rouge2_f1": _mean([s.rouge2.f1 for s in sims]),
        "rougeL_f1": _mean([s.rougeL.f1 for s in sims]),
        "levenshtein_ratio": _mean([s.levenshtein_ratio for s in sims]),
        "fa_pct": None,
        "fm_pct": None,
        "fo_pct": None,
        "mrr": None,
    }
    if outcomes is not None:
        metrics = search_metrics(outcomes, k=top_k)
        row.update(metrics.to_dict())
    return row


def _mean_over_folds(per_fold: list[dict]) -> dict:
    agg: dict = {"n_samples": sum(f["n_samples"] for f in per_fold)}
    for key in _SIM_KEYS + _SEARCH_KEYS:
        values = [f[key] for f in per_fold if f.get(key) is not None]
        agg[key] = _mean(values) if values else None
    return agg


def _sample_rows(fold, method, template_id, test, queries, sims, outcomes) -> list[dict]:
    rows = []
    for i, (record, query, sim) in enumerate(zip(test, queries, sims)):
        row = {
            "claim_id": record.claim_id,
            "fold": fold,
            "method": method,
            "template": template_id,
            "generated": query.text,
            "empty": query.empty,
            "rouge1_f1": sim.rouge1.f1,
            "rouge2_f1": sim.rouge2.f1,
            "rougeL_f1": sim.rougeL.f1,
            "levenshtein_distance": sim.levenshtein_distance,
            "levenshtein_ratio": sim.levenshtein_ratio,
            "found_per_list": None,
            "best_rank_per_list": None,
        }
        if outcomes is not None:
            row["found_per_list"] = list(outcomes[i].target_found_per_list)
            row["best_rank_per_list"] = list(outcomes[i].best_rank_per_list)
        rows.append(row)
    return rows


def overlap_table(
    outcomes_a: list[SampleSearchOutcome], outcomes_b: list[SampleSearchOutcome]
) -> dict:
    """2x2 contingency of per-sample "found" under the majority (FM) rule."""
    by_a = {o.claim_id: o for o in outcomes_a}
    by_b = {o.claim_id: o for o in outcomes_b}
    if set(by_a) != set(by_b):
        raise ValueError("overlap_table needs identical sample sets")

    def found(o: SampleSearchOutcome) -> bool:
        return o.hits >= math.ceil((len(o.lists) + 1) / 2)

    both = a_only = b_only = neither = 0
    for claim_id, oa in by_a.items():
        fa, fb = found(oa), found(by_b[claim_id])
        if fa and fb:
            both += 1
        elif fa:
            a_only += 1
        elif fb:
            b_only += 1
        else:
            neither += 1
    return {
        "both": both,
        "a_only": a_only,
        "b_only": b_only,
        "neither": neither,
        "a_found": both + a_only,
        "b_found": both + b_only,
        "total": len(by_a),
    }


def correlation_report(cell_aggregates: list[dict]) -> dict:
    """Pearson correlation of each Rouge variant against each search metric
    across experiment cells. Undefined (constant-series) pairs come back as
    None rather than failing the whole matrix."""
    rows = ("rouge1_f1", "rouge2_f1", "rougeL_f1")
    usable = [
        c for c in cell_aggregates if all(c.get(key) is not None for key in rows + _SEARCH_KEYS)
    ]
    if len(usable) < 2:
        raise ValueError("need at least 2 cells with both metric families")
    matrix: dict = {}
    for r in rows:
        matrix[r] = {}
        for c in _SEARCH_KEYS:
            try:
                matrix[r][c] = pearson([u[r] for u in usable], [u[c] for u in usable])
            except ValueError:
                matrix[r][c] = None
    return matrix


def _prompt_sensitivity(cells: dict) -> dict:
    """Mean and standard error of each aggregate metric per method, across
    that method's templates."""
    by_method: dict[str, list[dict]] = {}
    for key, cell in cells.items():
        if cell.get("error") is not None:
            continue
        method = key.split("|", 1)[0]
        by_method.setdefault(method, []).append(cell["aggregates"])
    out: dict = {}
    for method, aggs in sorted(by_method.items()):
        summary: dict = {"n_templates": len(aggs)}
        for key in _SIM_KEYS + _SEARCH_KEYS:
            values = [a[key] for a in aggs if a.get(key) is not None]
            if not values:
                summary[key] = None
                continue
            mean = _mean(values)
            stderr = (
                statistics.stdev(values) / math.sqrt(len(values)) if len(values) > 1 else None
            )
            summary[key] = {"mean": mean, "stderr": stderr}
        out[method] = summary
    return out


@dataclass
class ExperimentReport:
    config: dict
    cells: dict
    samples: list[dict]
    ensembles: dict
    prompt_sensitivity: dict
    correlations: dict | None
    overlaps: dict
    error_label_tallies: dict | None
    trainer_config: dict | None

    def to_dict(self) -> dict:
        return {
            "schema": "eqk-report@1",
            "config": self.config,
            "cells": self.cells,
            "samples": self.samples,
            "ensembles": self.ensembles,
            "prompt_sensitivity": self.prompt_sensitivity,
            "correlations": self.correlations,
            "overlaps": self.overlaps,
            "error_label_tallies": self.error_label_tallies,
            "trainer_config": self.trainer_config,
        }

    def to_json(self) -> str:
        # sort_keys + fixed separators keep re-runs byte-identical.
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentReport":
        return cls(
            config=obj["config"],
            cells=obj["cells"],
            samples=obj["samples"],
            ensembles=obj["ensembles"],
            prompt_sensitivity=obj["prompt_sensitivity"],
            correlations=obj["correlations"],
            overlaps=obj["overlaps"],
            error_label_tallies=obj["error_label_tallies"],
            trainer_config=obj["trainer_config"],
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentReport":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, out_dir: str | Path) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        json_path = out / "report.json"
        json_path.write_text(self.to_json(), encoding="utf-8")
        tables_path = out / "tables.txt"
        tables_path.write_text(render_tables(self), encoding="utf-8")
        return json_path, tables_path


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run every configured cell over the folds and assemble the report.

    A failure inside one (method, template) cell is recorded on that cell
    and the rest of the run proceeds. Search metrics appear only when an
    engine is configured; similarity metrics always do. All aggregates are
    means over per-fold values.
    """
    dataset = load_dataset(config.dataset_path)
    fold_assignment = split_folds(dataset, config.folds, config.seed)
    annotations = None
    if config.annotations_path:
        annotations = rulegen.load_annotations(config.annotations_path, dataset.by_id())
    backend = build_backend(config)
    store = SnapshotStore(config.snapshot_dir) if config.snapshot_dir else None
    fold_of = fold_assignment.assignments

    cells: dict = {}
    samples: list[dict] = []
    cell_outcomes: dict[tuple[str, str | None], list[SampleSearchOutcome]] = {}
    selection_cache: dict = {}

    for method, template_id in config.cell_keys():
        key = f"{method}|{template_id or 'none'}"
        engine = build_engine(config)
        try:
            per_fold = []
            cell_samples: list[dict] = []
            outcomes_all: list[SampleSearchOutcome] = []
            for fold in range(config.folds):
                test = fold_assignment.test_split(dataset, fold)
                train = fold_assignment.train_split(dataset, fold)
                queries = _generate_queries(
                    method, template_id, fold, test, train,
                    annotations, backend, config, selection_cache,
                )
                sims = [compare(r.target_query, q.text) for r, q in zip(test, queries)]
                fold_outcomes = None
                if engine is not None:
                    fold_outcomes = []
                    for record, query in zip(test, queries):
                        lists = execute_repeated(
                            engine, query.text,
                            n=config.executions, k=config.top_k, store=store,
                        )
                        fold_outcomes.append(
                            evaluate_sample(
                                record.claim_id, method, record.target_url, lists,
                                strict=config.strict_url_match,
                            )
                        )
                    outcomes_all.extend(fold_outcomes)
                per_fold.append(_fold_aggregate(fold, test, sims, fold_outcomes, config.top_k))
                cell_samples.extend(
                    _sample_rows(fold, method, template_id, test, queries, sims, fold_outcomes)
                )
        except Exception as exc:  # cell-level abort: record it, keep going
            log.exception("cell %s failed", key)
            cells[key] = {
                "error": f"{type(exc).__name__}: {exc}",
                "aggregates": None,
                "per_fold": None,
            }
            continue
        cells[key] = {
            "error": None,
            "aggregates": _mean_over_folds(per_fold),
            "per_fold": per_fold,
        }
        samples.extend(cell_samples)
        if outcomes_all:
            cell_outcomes[(method, template_id)] = outcomes_all

    ensembles: dict = {}
    for ens in config.ensembles:
        members = list(ens["methods"])
        priorities = {m: p for m, p in zip(members, ens["priorities"])}
        templates = ens.get("templates") or [config.first_template(m) for m in members]
        label = "+".join(sorted(members, key=priorities.__getitem__))
        try:
            per_method = {}
            for m, t in zip(members, templates):
                if (m, t) not in cell_outcomes:
                    raise ValueError(f"no search outcomes for member cell {m}|{t or 'none'}")
                per_method[m] = cell_outcomes[(m, t)]
            combined = combined_outcomes(per_method, priorities, config.top_k)
            per_fold = []
            for fold in range(config.folds):
                fold_combined = [o for o in combined if fold_of[o.claim_id] == fold]
                metrics = search_metrics(fold_combined, k=config.top_k)
                per_fold.append(
                    {"fold": fold, "n_samples": len(fold_combined), **metrics.to_dict()}
                )
            aggregates = {"n_samples": sum(f["n_samples"] for f in per_fold)}
            for metric_key in _SEARCH_KEYS:
                aggregates[metric_key] = _mean([f[metric_key] for f in per_fold])
            ensembles[label] = {
                "error": None,
                "methods": members,
                "priorities": [priorities[m] for m in members],
                "templates": [t for t in templates],
                "aggregates": aggregates,
                "per_fold": per_fold,
            }
        except Exception as exc:
            log.exception("ensemble %s failed", label)
            ensembles[label] = {
                "error": f"{type(exc).__name__}: {exc}",
                "methods": members,
                "priorities": [priorities[m] for m in members],
                "aggregates": None,
                "per_fold": None,
            }

    overlaps: dict = {}
    outcome_keys = list(cell_outcomes)
    for i, key_a in enumerate(outcome_keys):
        for key_b in outcome_keys[i + 1 :]:
            label_a = f"{key_a[0]}|{key_a[1] or 'none'}"
            label_b = f"{key_b[0]}|{key_b[1] or 'none'}"
            overlaps[f"{label_a} vs {label_b}"] = overlap_table(
                cell_outcomes[key_a], cell_outcomes[key_b]
            )

    defined_cells = [c["aggregates"] for c in cells.values() if c["error"] is None]
    try:
        correlations = correlation_report(defined_cells)
    except ValueError:
        correlations = None

    error_label_tallies = None
    if config.error_labels_path:
        error_label_tallies = tally_error_labels(load_error_labels(config.error_labels_path))

    return ExperimentReport(
        config=config.raw,
        cells=cells,
        samples=samples,
        ensembles=ensembles,
        prompt_sensitivity=_prompt_sensitivity(cells),
        correlations=correlations,
        overlaps=overlaps,
        error_label_tallies=error_label_tallies,
        trainer_config=config.trainer_config,
    )


def _fmt(value, kind: str) -> str:
    if value is None:
        return "-"
    if kind == "rouge":
        return f"{value:.3f}"
    if kind == "pct":
        return f"{value:.1f}"
    if kind == "mrr":
        return f"{value:.3f}"
    return str(value)


_TABLE_COLUMNS = (
    ("rouge1_f1", "R-1", "rouge"),
    ("rouge2_f1", "R-2", "rouge"),
    ("rougeL_f1", "R-L", "rouge"),
    ("fa_pct", "FA%", "pct"),
    ("fm_pct", "FM%", "pct"),
    ("fo_pct", "FO%", "pct"),
    ("mrr", "MRR", "mrr"),
)


def render_tables(report: ExperimentReport) -> str:
    """Aligned plain-text tables mirroring the JSON report."""
    lines: list[str] = []

    def heading(title: str) -> None:
        if lines:
            lines.append("")
        lines.append(title)
        lines.append("-" * len(title))

    heading("Per-method results (fold-averaged)")
    header = f"{'method':<24} {'template':<12}" + "".join(
        f" {label:>7}" for _, label, _ in _TABLE_COLUMNS
    )
    lines.append(header)
    for key in sorted(report.cells):
        cell = report.cells[key]
        method, template = key.split("|", 1)
        if cell["error"] is not None:
            lines.append(f"{method:<24} {template:<12} ERROR: {cell['error']}")
            continue
        agg = cell["aggregates"]
        row = f"{method:<24} {template:<12}" + "".join(
            f" {_fmt(agg.get(k), kind):>7}" for k, _, kind in _TABLE_COLUMNS
        )
        lines.append(row)

    if report.ensembles:
        heading("Ensembles (Borda-combined, fold-averaged)")
        header = f"{'combination':<44}" + "".join(
            f" {label:>7}" for _, label, kind in _TABLE_COLUMNS if kind != "rouge"
        )
        lines.append(header)
        for label in sorted(report.ensembles):
            ens = report.ensembles[label]
            if ens["error"] is not None:
                lines.append(f"{label:<44} ERROR: {ens['error']}")
                continue
            agg = ens["aggregates"]
            row = f"{label:<44}" + "".join(
                f" {_fmt(agg.get(k), kind):>7}"
                for k, _, kind in _TABLE_COLUMNS
                if kind != "rouge"
            )
            lines.append(row)

    if report.prompt_sensitivity:
        heading("Prompt sensitivity (mean (stderr) across templates)")
        lines.append(f"{'method':<24} {'n':>3} {'R-2':>16} {'FM%':>16}")
        for method in sorted(report.prompt_sensitivity):
            summary = report.prompt_sensitivity[method]

            def cell_text(key: str) -> str:
                value = summary.get(key)
                if not value:
                    return "-"
                mean = value["mean"]
                stderr = value["stderr"]
                text = f"{mean:.3f}" if key.startswith("rouge") else f"{mean:.1f}"
                if stderr is not None:
                    text += f" ({stderr:.3f})" if key.startswith("rouge") else f" ({stderr:.1f})"
                return text

            lines.append(
                f"{method:<24} {summary['n_templates']:>3} "
                f"{cell_text('rouge2_f1'):>16} {cell_text('fm_pct'):>16}"
            )

    if report.correlations:
        heading("Similarity vs search-metric correlation (Pearson, across cells)")
        lines.append(f"{'':<12}" + "".join(f" {c:>8}" for c in _SEARCH_KEYS))
        for r in ("rouge1_f1", "rouge2_f1", "rougeL_f1"):
            vals = report.correlations[r]
            lines.append(
                f"{r:<12}"
                + "".join(
                    f" {('-' if vals[c] is None else f'{vals[c]:.3f}'):>8}"
                    for c in _SEARCH_KEYS
                )
            )

    for label in sorted(report.overlaps):
        table = report.overlaps[label]
        a, b = label.split(" vs ", 1)
        heading(f"Overlap (majority-found): {label}")
        lines.append(f"{'':<16} {'B found':>10} {'B not found':>12} {'total':>7}")
        lines.append(
            f"{'A found':<16} {table['both']:>10} {table['a_only']:>12} {table['a_found']:>7}"
        )
        lines.append(
            f"{'A not found':<16} {table['b_only']:>10} {table['neither']:>12} "
            f"{table['total'] - table['a_found']:>7}"
        )
        lines.append(
            f"{'total':<16} {table['b_found']:>10} {table['total'] - table['b_found']:>12} "
            f"{table['total']:>7}"
        )
        lines.append(f"(A = {a}, B = {b})")

    if report.error_label_tallies:
        heading("Error label tallies")
        for category in ERROR_CATEGORIES:
            lines.append(f"{category:<26} {report.error_label_tallies.get(category, 0):>5}")
        lines.append(f"{'total':<26} {report.error_label_tallies.get('total', 0):>5}")

    return "\n".join(lines) + "\n"
