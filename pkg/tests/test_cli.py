import json

import pytest
from click.testing import CliRunner

from eqk.cli import main
from eqk.corpus import write_dataset
from eqk.rulegen import GeneratedQuery, load_queries, write_queries


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    result = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
    return result


class TestCorpusCommands:
    def test_validate_ok(self, runner, fixtures_dir):
        result = invoke(runner, "corpus", "validate", fixtures_dir / "claims.jsonl")
        assert result.exit_code == 0
        assert "OK: 20 records across 8 articles" in result.output

    def test_validate_failure_exits_nonzero(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"claim_id": "c1"}\n')
        result = runner.invoke(main, ["corpus", "validate", str(bad)])
        assert result.exit_code != 0
        assert "missing field" in result.output

    def test_split_writes_assignment(self, runner, fixtures_dir, tmp_path):
        out = tmp_path / "folds.json"
        result = invoke(
            runner, "corpus", "split", "--k", 4, "--seed", 3,
            "--out", out, fixtures_dir / "claims.jsonl",
        )
        assert result.exit_code == 0
        assignment = json.loads(out.read_text())
        assert assignment["k"] == 4
        assert len(assignment["assignments"]) == 20

    def test_stability_filter(self, runner, tiny_dataset, tmp_path):
        claims = tmp_path / "claims.jsonl"
        write_dataset(tiny_dataset, claims)
        results = {}
        for i, record in enumerate(tiny_dataset.records):
            hits = 12 if i < 2 else 3
            results[record.target_query] = [
                [record.target_url] if call < hits else ["https://d.org/z"]
                for call in range(12)
            ]
        script = tmp_path / "script.json"
        script.write_text(json.dumps({"results": results}))
        out = tmp_path / "kept.jsonl"
        report = tmp_path / "hits.jsonl"
        result = invoke(
            runner, "corpus", "stability-filter",
            "--executions", 12, "--threshold", 0.5,
            "--engine", "mock", "--script", script,
            "--out", out, "--report", report, claims,
        )
        assert result.exit_code == 0
        assert "kept 2/5" in result.output
        kept_ids = [json.loads(line)["claim_id"] for line in out.read_text().splitlines()]
        assert kept_ids == ["c1", "c2"]
        hits = [json.loads(line)["hit_count"] for line in report.read_text().splitlines()]
        assert hits == [12, 12, 3, 3, 3]


class TestGenerateCommand:
    def test_verbatim(self, runner, fixtures_dir, tmp_path):
        out = tmp_path / "queries.jsonl"
        result = invoke(
            runner, "generate", "--method", "verbatim",
            "--claims", fixtures_dir / "claims.jsonl", "--out", out,
        )
        assert result.exit_code == 0
        queries = load_queries(out)
        assert len(queries) == 20
        assert queries[0].method == "verbatim"

    def test_named_entities_against_fixture_annotations(self, runner, fixtures_dir, tmp_path):
        out = tmp_path / "ne.jsonl"
        result = invoke(
            runner, "generate", "--method", "ne",
            "--claims", fixtures_dir / "claims.jsonl",
            "--annotations", fixtures_dir / "annotations.jsonl",
            "--out", out,
        )
        assert result.exit_code == 0
        queries = {q.claim_id: q for q in load_queries(out)}
        assert queries["c01"].text == "Arlington Gate Bridge, March 1987"

    def test_ne_without_annotations_fails(self, runner, fixtures_dir, tmp_path):
        result = runner.invoke(main, [
            "generate", "--method", "ne",
            "--claims", str(fixtures_dir / "claims.jsonl"),
            "--out", str(tmp_path / "x.jsonl"),
        ])
        assert result.exit_code != 0
        assert "--annotations" in result.output

    def test_zero_shot_with_stub(self, runner, fixtures_dir, tmp_path):
        out = tmp_path / "zs.jsonl"
        result = invoke(
            runner, "generate", "--method", "zero-shot", "--template", "template-05",
            "--claims", fixtures_dir / "claims.jsonl", "--out", out,
        )
        assert result.exit_code == 0
        queries = load_queries(out)
        assert all(q.template_id == "template-05" for q in queries)
        assert all("Search query:" not in q.text for q in queries)

    def test_few_shot_with_examples_file(self, runner, fixtures_dir, tmp_path):
        examples = tmp_path / "examples.jsonl"
        examples.write_text(json.dumps({
            "claim_text": "Example claim.", "target_query": "example query",
            "source_claim_id": "x1",
        }) + "\n")
        out = tmp_path / "fs.jsonl"
        result = invoke(
            runner, "generate", "--method", "few-shot", "--shots", 1,
            "--template", "template-05", "--examples", examples,
            "--claims", fixtures_dir / "claims.jsonl", "--out", out,
        )
        assert result.exit_code == 0
        assert load_queries(out)[0].method == "few_shot_1"

    def test_few_shot_needs_examples_or_training_set(self, runner, fixtures_dir, tmp_path):
        result = runner.invoke(main, [
            "generate", "--method", "few-shot",
            "--claims", str(fixtures_dir / "claims.jsonl"),
            "--out", str(tmp_path / "x.jsonl"),
        ])
        assert result.exit_code != 0
        assert "--examples or --select-from" in result.output


class TestScoreCommand:
    def test_score_perfect_predictions(self, runner, tiny_dataset, tmp_path):
        claims = tmp_path / "claims.jsonl"
        write_dataset(tiny_dataset, claims)
        preds = [
            GeneratedQuery(r.claim_id, "verbatim", r.target_query)
            for r in tiny_dataset.records
        ]
        pred_path = tmp_path / "pred.jsonl"
        write_queries(preds, pred_path)
        out = tmp_path / "scores.jsonl"
        result = invoke(
            runner, "score", "--claims", claims, "--pred", pred_path,
            "--target-col", "target_query", "--out", out,
        )
        assert result.exit_code == 0
        aggregate = json.loads(result.output)
        assert aggregate["rouge2_f1"] == 1.0
        rows = [json.loads(line) for line in out.read_text().splitlines()]
        assert len(rows) == 5
        assert rows[0]["rouge1"]["f1"] == 1.0

    def test_unknown_claim_rejected(self, runner, tiny_dataset, tmp_path):
        claims = tmp_path / "claims.jsonl"
        write_dataset(tiny_dataset, claims)
        pred_path = tmp_path / "pred.jsonl"
        write_queries([GeneratedQuery("ghost", "verbatim", "x")], pred_path)
        result = runner.invoke(main, [
            "score", "--claims", str(claims), "--pred", str(pred_path),
        ])
        assert result.exit_code != 0


class TestSearchCommands:
    def make_inputs(self, tiny_dataset, tmp_path, rank=1):
        claims = tmp_path / "claims.jsonl"
        write_dataset(tiny_dataset, claims)
        queries = [GeneratedQuery(r.claim_id, "verbatim", r.claim_text)
                   for r in tiny_dataset.records]
        qpath = tmp_path / "queries.jsonl"
        write_queries(queries, qpath)
        results = {}
        for r in tiny_dataset.records:
            urls = ["https://d.org/a"] * (rank - 1) + [r.target_url]
            results[r.claim_text] = urls
        script = tmp_path / "script.json"
        script.write_text(json.dumps({"results": results}))
        return claims, qpath, script

    def test_run_and_metrics(self, runner, tiny_dataset, tmp_path):
        claims, qpath, script = self.make_inputs(tiny_dataset, tmp_path, rank=2)
        out = tmp_path / "outcomes.jsonl"
        result = invoke(
            runner, "search", "run", "--engine", "mock", "--script", script,
            "--queries", qpath, "--claims", claims, "--n", 3, "--k", 10,
            "--snapshots", tmp_path / "snaps", "--out", out,
        )
        assert result.exit_code == 0
        assert (tmp_path / "snaps" / "mock.jsonl").exists()
        metrics_result = invoke(runner, "search", "metrics", "--outcomes", out)
        metrics = json.loads(metrics_result.output)
        assert metrics["fa_pct"] == 100.0
        assert metrics["mrr"] == 0.5

    def test_ensemble_command(self, runner, tiny_dataset, tmp_path):
        claims, qpath, script = self.make_inputs(tiny_dataset, tmp_path)
        out_a = tmp_path / "a.jsonl"
        invoke(
            runner, "search", "run", "--engine", "mock", "--script", script,
            "--queries", qpath, "--claims", claims, "--out", out_a,
        )
        # Second method: same lists but labelled fine_tuned.
        queries_b = [GeneratedQuery(r.claim_id, "fine_tuned", r.claim_text)
                     for r in tiny_dataset.records]
        qpath_b = tmp_path / "qb.jsonl"
        write_queries(queries_b, qpath_b)
        out_b = tmp_path / "b.jsonl"
        invoke(
            runner, "search", "run", "--engine", "mock", "--script", script,
            "--queries", qpath_b, "--claims", claims, "--out", out_b,
        )
        combined = tmp_path / "combined.jsonl"
        result = invoke(
            runner, "ensemble", "--outcomes", out_a, "--outcomes", out_b,
            "--methods", "fine_tuned,verbatim", "--priorities", "1,2",
            "--k", 10, "--out", combined,
        )
        assert result.exit_code == 0
        # First output line reports the written file; the rest is metrics JSON.
        metrics = json.loads("\n".join(result.output.splitlines()[1:]))
        assert metrics["fa_pct"] == 100.0

    def test_priorities_must_align(self, runner, tiny_dataset, tmp_path):
        claims, qpath, script = self.make_inputs(tiny_dataset, tmp_path)
        out_a = tmp_path / "a.jsonl"
        invoke(
            runner, "search", "run", "--engine", "mock", "--script", script,
            "--queries", qpath, "--claims", claims, "--out", out_a,
        )
        result = runner.invoke(main, [
            "ensemble", "--outcomes", str(out_a), "--priorities", "1,2",
        ])
        assert result.exit_code != 0


class TestRunAndReportCommands:
    def test_full_run_produces_report_and_tables(self, runner, fixtures_dir, tmp_path):
        out_dir = tmp_path / "report"
        result = invoke(
            runner, "run", "--config", fixtures_dir / "config.json", "--out-dir", out_dir,
        )
        assert result.exit_code == 0
        report = json.loads((out_dir / "report.json").read_text())
        assert report["schema"] == "eqk-report@1"
        assert (out_dir / "tables.txt").read_text().startswith("Per-method results")

        tables = invoke(runner, "report", "tables", "--report", out_dir / "report.json")
        assert "Per-method results" in tables.output

        corr = invoke(runner, "report", "correlation", "--report", out_dir / "report.json")
        matrix = json.loads(corr.output)
        assert "rouge2_f1" in matrix

    def test_report_errors_command(self, runner, fixtures_dir):
        result = invoke(
            runner, "report", "errors", "--labels", fixtures_dir / "error_labels.jsonl"
        )
        tallies = json.loads(result.output)
        assert tallies["total"] == 6

    def test_trainer_config_stanza(self, runner, fixtures_dir):
        result = invoke(
            runner, "report", "trainer-config", "--config", fixtures_dir / "config.json"
        )
        stanza = json.loads(result.output)
        assert stanza == {
            "optimizer": "adafactor",
            "learning_rate": 0.001,
            "epochs": 10,
            "max_input_length": 512,
        }

    def test_report_overlap_command(self, runner, tiny_dataset, tmp_path):
        claims = tmp_path / "claims.jsonl"
        write_dataset(tiny_dataset, claims)
        queries = [GeneratedQuery(r.claim_id, "verbatim", r.claim_text)
                   for r in tiny_dataset.records]
        qpath = tmp_path / "queries.jsonl"
        write_queries(queries, qpath)
        script = tmp_path / "script.json"
        script.write_text(json.dumps({
            "results": {r.claim_text: [r.target_url] for r in tiny_dataset.records}
        }))
        out = tmp_path / "outcomes.jsonl"
        invoke(
            runner, "search", "run", "--engine", "mock", "--script", script,
            "--queries", qpath, "--claims", claims, "--out", out,
        )
        result = invoke(runner, "report", "overlap", "--outcomes-a", out, "--outcomes-b", out)
        table = json.loads(result.output)
        assert table["both"] == 5 and table["a_only"] == 0
