"""The ``eqk`` command-line interface."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import corpus, harness, rulegen, searcheval, textmetrics
from .promptgen import (
    BackendError,
    GenerationBackend,
    HTTPBackend,
    InContextExample,
    StubBackend,
    generate,
    postprocess,
    render_few_shot,
    render_zero_shot,
    select_few_shot_examples,
    template_by_id,
)

_METHOD_ALIASES = {
    "verbatim": "verbatim",
    "ne": "named_entities",
    "np": "noun_phrases",
    "zero-shot": "zero_shot",
    "few-shot": "few_shot",
    "fine-tuned": "fine_tuned",
}


def _echo_json(obj) -> None:
    click.echo(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False))


def _engine_from_flags(kind: str, script: str | None) -> searcheval.SearchEngine:
    if kind == "mock":
        if not script:
            raise click.ClickException("--engine mock needs --script")
        return searcheval.MockSearchEngine.from_file(script)
    try:
        return searcheval.BingSearchEngine()
    except searcheval.EngineError as exc:
        raise click.ClickException(str(exc))


def _backend_from_flags(
    kind: str, stub_map: str | None, backend_url: str | None
) -> GenerationBackend:
    if kind == "stub":
        return StubBackend.from_file(stub_map) if stub_map else StubBackend()
    if not backend_url:
        raise click.ClickException("--backend http needs --backend-url")
    return HTTPBackend(backend_url)


@click.group()
@click.version_option()
def main() -> None:
    """Generate, score, and ensemble web-search queries for factual claims."""


@main.group("corpus")
def corpus_group() -> None:
    """Dataset validation, fold splitting, and stability filtering."""


@corpus_group.command("validate")
@click.argument("path", type=click.Path(exists=True))
def corpus_validate(path: str) -> None:
    """Check a claims JSONL file against the record schema."""
    try:
        dataset = corpus.load_dataset(path)
    except corpus.DatasetError as exc:
        raise click.ClickException(str(exc))
    click.echo(f"OK: {len(dataset)} records across {len(dataset.articles())} articles")


@corpus_group.command("split")
@click.option("--k", default=4, show_default=True, help="number of folds")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", type=click.Path(), help="write the fold assignment JSON here")
@click.argument("path", type=click.Path(exists=True))
def corpus_split(k: int, seed: int, out: str | None, path: str) -> None:
    """Assign whole articles to k folds, balancing claim counts."""
    dataset = corpus.load_dataset(path)
    try:
        folds = corpus.split_folds(dataset, k, seed)
    except (corpus.DatasetError, ValueError) as exc:
        raise click.ClickException(str(exc))
    if out:
        Path(out).write_text(json.dumps(folds.to_dict(), indent=2, sort_keys=True) + "\n")
        click.echo(f"wrote {out}")
    click.echo(f"fold sizes: {folds.fold_sizes()}")


@corpus_group.command("stability-filter")
@click.option("--executions", default=12, show_default=True)
@click.option("--threshold", default=0.5, show_default=True)
@click.option("--engine", "engine_kind", type=click.Choice(["mock", "bing"]), required=True)
@click.option("--script", type=click.Path(exists=True), help="mock engine script JSON")
@click.option("--k", default=10, show_default=True, help="results per execution")
@click.option("--snapshots", type=click.Path(), help="snapshot store directory")
@click.option("--out", required=True, type=click.Path(), help="filtered claims JSONL")
@click.option("--report", "report_path", type=click.Path(), help="per-record hit counts JSONL")
@click.argument("path", type=click.Path(exists=True))
def corpus_stability_filter(
    executions, threshold, engine_kind, script, k, snapshots, out, report_path, path
) -> None:
    """Keep claims whose target query reliably finds the target URL."""
    dataset = corpus.load_dataset(path)
    engine = _engine_from_flags(engine_kind, script)
    store = searcheval.SnapshotStore(snapshots) if snapshots else None
    filtered, report = corpus.stability_filter(
        dataset, engine, executions=executions, threshold=threshold, k=k, store=store
    )
    corpus.write_dataset(filtered, out)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            for row in report:
                fh.write(json.dumps(row) + "\n")
    click.echo(f"kept {len(filtered)}/{len(dataset)} records -> {out}")


@main.command("generate")
@click.option(
    "--method",
    type=click.Choice(sorted(_METHOD_ALIASES)),
    required=True,
)
@click.option("--claims", required=True, type=click.Path(exists=True))
@click.option("--annotations", type=click.Path(exists=True), help="needed for ne/np")
@click.option("--template", default="no-prompt", show_default=True)
@click.option("--shots", default=3, type=click.IntRange(1, 3), show_default=True)
@click.option("--backend", "backend_kind", type=click.Choice(["stub", "http"]), default="stub")
@click.option("--stub-map", type=click.Path(exists=True), help="stub backend input->output JSON")
@click.option("--backend-url", help="generation backend base URL")
@click.option("--examples", "examples_path", type=click.Path(exists=True),
              help="precomputed in-context examples JSONL (few-shot)")
@click.option("--select-from", "select_from", type=click.Path(exists=True),
              help="training claims JSONL to select in-context examples from (few-shot)")
@click.option("--checkpoint", type=click.Path(), help="example-selection progress file")
@click.option("--out", required=True, type=click.Path())
def generate_cmd(
    method, claims, annotations, template, shots, backend_kind,
    stub_map, backend_url, examples_path, select_from, checkpoint, out,
) -> None:
    """Generate one query per claim with the chosen method."""
    dataset = corpus.load_dataset(claims)
    method_name = _METHOD_ALIASES[method]
    if method_name == "few_shot":
        method_name = f"few_shot_{shots}"

    if method_name == "verbatim":
        queries = [rulegen.verbatim(r) for r in dataset.records]
    elif method_name in ("named_entities", "noun_phrases"):
        if not annotations:
            raise click.ClickException(f"--method {method} needs --annotations")
        try:
            ann = rulegen.load_annotations(annotations, dataset.by_id())
        except rulegen.AnnotationError as exc:
            raise click.ClickException(str(exc))
        op = rulegen.named_entities if method_name == "named_entities" else rulegen.noun_phrases
        missing = [r.claim_id for r in dataset.records if r.claim_id not in ann]
        if missing:
            raise click.ClickException(f"no annotations for claims: {', '.join(missing[:5])}")
        queries = [op(r, ann[r.claim_id]) for r in dataset.records]
    else:
        try:
            tpl = template_by_id(template)
        except KeyError as exc:
            raise click.ClickException(str(exc.args[0]))
        backend = _backend_from_flags(backend_kind, stub_map, backend_url)
        try:
            if method_name.startswith("few_shot_"):
                examples = _few_shot_examples(
                    examples_path, select_from, backend, tpl, checkpoint
                )[:shots]
                prompts = [render_few_shot(tpl, examples, r.claim_text) for r in dataset.records]
            else:
                prompts = [render_zero_shot(tpl, r.claim_text) for r in dataset.records]
            queries = [
                rulegen.GeneratedQuery(
                    r.claim_id, method_name, postprocess(generate(backend, p), tpl), tpl.template_id
                )
                for r, p in zip(dataset.records, prompts)
            ]
        except BackendError as exc:
            raise click.ClickException(str(exc))
    rulegen.write_queries(queries, out)
    empty = sum(1 for q in queries if q.empty)
    click.echo(f"wrote {len(queries)} queries ({empty} empty) -> {out}")


def _few_shot_examples(examples_path, select_from, backend, tpl, checkpoint):
    if examples_path:
        examples = []
        with open(examples_path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    obj = json.loads(line)
                    examples.append(
                        InContextExample(
                            obj["claim_text"], obj["target_query"], obj["source_claim_id"]
                        )
                    )
        if not 1 <= len(examples) <= 3:
            raise click.ClickException(f"need 1..3 examples, file has {len(examples)}")
        return examples
    if select_from:
        train = corpus.load_dataset(select_from)
        return select_few_shot_examples(
            train.records, backend, tpl, checkpoint_path=checkpoint
        )
    raise click.ClickException("few-shot needs --examples or --select-from")


@main.command("score")
@click.option("--claims", required=True, type=click.Path(exists=True))
@click.option("--pred", required=True, type=click.Path(exists=True),
              help="generated queries JSONL")
@click.option("--target-col", default="target_query", show_default=True)
@click.option("--out", type=click.Path(), help="per-pair similarity JSONL")
def score_cmd(claims, pred, target_col, out) -> None:
    """Score generated queries against their targets by textual similarity."""
    dataset = corpus.load_dataset(claims)
    by_id = {r.claim_id: r.to_dict() for r in dataset.records}
    queries = rulegen.load_queries(pred)
    rows = []
    for q in queries:
        if q.claim_id not in by_id:
            raise click.ClickException(f"prediction for unknown claim {q.claim_id!r}")
        record = by_id[q.claim_id]
        if target_col not in record:
            raise click.ClickException(f"claims file has no column {target_col!r}")
        report = textmetrics.compare(record[target_col], q.text)
        rows.append(
            {
                "claim_id": q.claim_id,
                "method": q.method,
                "template_id": q.template_id,
                **report.to_dict(),
            }
        )
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    if not rows:
        raise click.ClickException("no predictions to score")
    aggregate = {
        "n": len(rows),
        "rouge1_f1": sum(r["rouge1"]["f1"] for r in rows) / len(rows),
        "rouge2_f1": sum(r["rouge2"]["f1"] for r in rows) / len(rows),
        "rougeL_f1": sum(r["rougeL"]["f1"] for r in rows) / len(rows),
        "levenshtein_ratio": sum(r["levenshtein_ratio"] for r in rows) / len(rows),
    }
    _echo_json(aggregate)


@main.group("search")
def search_group() -> None:
    """Execute queries on a search engine and score the results."""


@search_group.command("run")
@click.option("--engine", "engine_kind", type=click.Choice(["mock", "bing"]), required=True)
@click.option("--script", type=click.Path(exists=True), help="mock engine script JSON")
@click.option("--queries", required=True, type=click.Path(exists=True),
              help="generated queries JSONL")
@click.option("--claims", required=True, type=click.Path(exists=True),
              help="claims JSONL with target URLs")
@click.option("--n", default=3, show_default=True, help="executions per query")
@click.option("--k", default=10, show_default=True, help="results per execution")
@click.option("--snapshots", type=click.Path(), help="snapshot store directory")
@click.option("--strict", is_flag=True, help="match URLs exactly instead of normalized")
@click.option("--out", required=True, type=click.Path(), help="outcomes JSONL")
def search_run(engine_kind, script, queries, claims, n, k, snapshots, strict, out) -> None:
    """Run each query n times and record where the target URL appears."""
    engine = _engine_from_flags(engine_kind, script)
    query_list = rulegen.load_queries(queries)
    by_id = corpus.load_dataset(claims).by_id()
    store = searcheval.SnapshotStore(snapshots) if snapshots else None
    outcomes = []
    for q in query_list:
        if q.claim_id not in by_id:
            raise click.ClickException(f"query for unknown claim {q.claim_id!r}")
        lists = searcheval.execute_repeated(engine, q.text, n=n, k=k, store=store)
        outcomes.append(
            searcheval.evaluate_sample(
                q.claim_id, q.method, by_id[q.claim_id].target_url, lists, strict=strict
            )
        )
    searcheval.write_outcomes(outcomes, out)
    click.echo(f"wrote {len(outcomes)} outcomes -> {out}")
    _echo_json(searcheval.search_metrics(outcomes, k=k).to_dict())


@search_group.command("metrics")
@click.option("--outcomes", "outcomes_path", required=True, type=click.Path(exists=True))
@click.option("--k", default=10, show_default=True)
def search_metrics_cmd(outcomes_path, k) -> None:
    """Recompute FA/FM/FO/MRR from a stored outcomes file."""
    outcomes = searcheval.load_outcomes(outcomes_path)
    try:
        metrics = searcheval.search_metrics(outcomes, k=k)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    _echo_json(metrics.to_dict())


@main.command("ensemble")
@click.option("--outcomes", "outcome_paths", multiple=True, required=True,
              type=click.Path(exists=True),
              help="one single-method outcomes JSONL per member, repeatable")
@click.option("--methods", "methods_csv",
              help="comma-separated method names; priorities align with this "
                   "order (defaults to the --outcomes file order)")
@click.option("--priorities", required=True,
              help="comma-separated priorities, 1 = most individually effective")
@click.option("--k", default=10, show_default=True)
@click.option("--out", type=click.Path(), help="combined outcomes JSONL")
def ensemble_cmd(outcome_paths, methods_csv, priorities, k, out) -> None:
    """Borda-combine several methods' search outcomes into one ranking."""
    try:
        priority_list = [int(p) for p in priorities.split(",")]
    except ValueError:
        raise click.ClickException("--priorities must be comma-separated integers")
    per_method = {}
    for path in outcome_paths:
        outcomes = searcheval.load_outcomes(path)
        methods = {o.method for o in outcomes}
        if len(methods) != 1:
            raise click.ClickException(f"{path}: expected a single method, found {sorted(methods)}")
        method = methods.pop()
        if method in per_method:
            raise click.ClickException(f"method {method!r} given twice")
        per_method[method] = outcomes
    method_order = (
        [m.strip() for m in methods_csv.split(",")] if methods_csv else list(per_method)
    )
    missing = [m for m in method_order if m not in per_method]
    if missing:
        raise click.ClickException(f"--methods not found in the outcome files: {missing}")
    if len(method_order) != len(per_method):
        raise click.ClickException("--methods must name every outcomes file's method")
    if len(priority_list) != len(method_order):
        raise click.ClickException("--priorities must align with the methods")
    priority_map = dict(zip(method_order, priority_list))
    try:
        combined = harness.combined_outcomes(per_method, priority_map, k)
    except ValueError as exc:
        raise click.ClickException(str(exc))
    if out:
        searcheval.write_outcomes(combined, out)
        click.echo(f"wrote {len(combined)} combined outcomes -> {out}")
    _echo_json(searcheval.search_metrics(combined, k=k).to_dict())


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out-dir", required=True, type=click.Path())
def run_cmd(config_path, out_dir) -> None:
    """Run the full cross-validated experiment described by a config file."""
    try:
        config = harness.ExperimentConfig.from_file(config_path)
    except (ValueError, KeyError) as exc:
        raise click.ClickException(f"bad config: {exc}")
    report = harness.run_experiment(config)
    json_path, tables_path = report.save(out_dir)
    click.echo(f"report: {json_path}")
    click.echo(f"tables: {tables_path}")


@main.group("report")
def report_group() -> None:
    """Re-render views of a persisted experiment report."""


@report_group.command("tables")
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
def report_tables(report_path) -> None:
    """Print the aligned text tables for a report.json."""
    report = harness.ExperimentReport.from_file(report_path)
    click.echo(harness.render_tables(report), nl=False)


@report_group.command("correlation")
@click.option("--report", "report_path", required=True, type=click.Path(exists=True))
def report_correlation(report_path) -> None:
    """Print the similarity-vs-search correlation matrix of a report."""
    report = harness.ExperimentReport.from_file(report_path)
    if report.correlations is None:
        raise click.ClickException("report has no correlation matrix (too few cells)")
    _echo_json(report.correlations)


@report_group.command("overlap")
@click.option("--outcomes-a", required=True, type=click.Path(exists=True))
@click.option("--outcomes-b", required=True, type=click.Path(exists=True))
def report_overlap(outcomes_a, outcomes_b) -> None:
    """2x2 contingency of majority-found samples between two outcome files."""
    a = searcheval.load_outcomes(outcomes_a)
    b = searcheval.load_outcomes(outcomes_b)
    try:
        _echo_json(harness.overlap_table(a, b))
    except ValueError as exc:
        raise click.ClickException(str(exc))


@report_group.command("errors")
@click.option("--labels", required=True, type=click.Path(exists=True),
              help="human-edited error labels JSONL")
def report_errors(labels) -> None:
    """Tally manually assigned error categories."""
    try:
        _echo_json(harness.tally_error_labels(harness.load_error_labels(labels)))
    except ValueError as exc:
        raise click.ClickException(str(exc))


@report_group.command("trainer-config")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def report_trainer_config(config_path) -> None:
    """Emit the external-trainer settings stanza from an experiment config."""
    config = harness.ExperimentConfig.from_file(config_path)
    if not config.trainer_config:
        raise click.ClickException("config has no trainer_config stanza")
    _echo_json(config.trainer_config)


if __name__ == "__main__":
    main()
