import json

import pytest

from eqk.corpus import (
    ClaimRecord,
    Dataset,
    DatasetError,
    FoldAssignment,
    load_dataset,
    select_validation,
    split_folds,
    stability_filter,
    write_dataset,
)
from eqk.searcheval import MockSearchEngine


def write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def valid_row(i, article="a1"):
    return {
        "claim_id": f"c{i}",
        "article_id": article,
        "claim_text": f"Claim number {i}.",
        "target_query": f"claim {i}",
        "target_url": f"https://example.org/{i}",
    }


class TestLoadDataset:
    def test_valid_file(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        write_jsonl(path, [valid_row(i) for i in range(3)])
        dataset = load_dataset(path)
        assert len(dataset) == 3
        assert dataset.records[0].claim_id == "c0"

    def test_empty_file_is_empty_dataset(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        path.write_text("")
        assert len(load_dataset(path)) == 0

    def test_missing_field_reports_line_and_field(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        row = valid_row(1)
        del row["target_url"]
        write_jsonl(path, [row])
        with pytest.raises(DatasetError, match=r":1: missing field 'target_url'"):
            load_dataset(path)

    def test_malformed_line_reports_line_number(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        path.write_text(json.dumps(valid_row(1)) + "\n{not json\n")
        with pytest.raises(DatasetError, match=r":2: malformed JSON"):
            load_dataset(path)

    def test_duplicate_claim_id(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        write_jsonl(path, [valid_row(1), valid_row(1)])
        with pytest.raises(DatasetError, match="duplicate claim_id"):
            load_dataset(path)

    def test_invalid_url(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        row = valid_row(1)
        row["target_url"] = "not-a-url"
        write_jsonl(path, [row])
        with pytest.raises(DatasetError, match="not an absolute URL"):
            load_dataset(path)

    def test_empty_claim_text_rejected(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        row = valid_row(1)
        row["claim_text"] = ""
        write_jsonl(path, [row])
        with pytest.raises(DatasetError, match="'claim_text' must be non-empty"):
            load_dataset(path)

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        path.write_text(json.dumps(valid_row(1)) + "\n\n" + json.dumps(valid_row(2)) + "\n")
        assert len(load_dataset(path)) == 2

    def test_context_sentences_carried(self, tmp_path):
        path = tmp_path / "claims.jsonl"
        row = valid_row(1)
        row["context_sentences"] = ["Article title.", "Previous sentence."]
        write_jsonl(path, [row])
        assert load_dataset(path).records[0].context_sentences == [
            "Article title.",
            "Previous sentence.",
        ]

    def test_round_trip(self, tmp_path, tiny_dataset):
        path = tmp_path / "out.jsonl"
        write_dataset(tiny_dataset, path)
        assert load_dataset(path) == tiny_dataset


class TestSplitFolds:
    def test_eight_singleton_articles_into_four_folds(self):
        records = [valid_row(i, article=f"a{i}") for i in range(8)]
        dataset = Dataset(records=[ClaimRecord(**r) for r in records])
        folds = split_folds(dataset, k=4, seed=1)
        assert folds.fold_sizes() == [2, 2, 2, 2]

    def test_fewer_articles_than_folds(self):
        dataset = Dataset(records=[ClaimRecord(**valid_row(i, article="a1")) for i in range(4)])
        with pytest.raises(DatasetError, match="at least 2 articles"):
            split_folds(dataset, k=2, seed=0)

    def test_articles_never_straddle_folds(self, tiny_dataset):
        folds = split_folds(tiny_dataset, k=3, seed=9)
        by_article = tiny_dataset.articles()
        for records in by_article.values():
            assigned = {folds.assignments[r.claim_id] for r in records}
            assert len(assigned) == 1

    def test_partition_covers_everything_once(self, tiny_dataset):
        folds = split_folds(tiny_dataset, k=3, seed=2)
        seen = []
        for fold in range(3):
            seen.extend(r.claim_id for r in folds.test_split(tiny_dataset, fold))
        assert sorted(seen) == sorted(r.claim_id for r in tiny_dataset.records)
        test0 = {r.claim_id for r in folds.test_split(tiny_dataset, 0)}
        train0 = {r.claim_id for r in folds.train_split(tiny_dataset, 0)}
        assert not test0 & train0

    def test_deterministic_for_seed(self, tiny_dataset):
        a = split_folds(tiny_dataset, k=3, seed=42)
        b = split_folds(tiny_dataset, k=3, seed=42)
        assert a == b

    def test_seed_changes_assignment(self):
        records = [ClaimRecord(**valid_row(i, article=f"a{i}")) for i in range(30)]
        dataset = Dataset(records=records)
        variants = {
            tuple(sorted(split_folds(dataset, 4, seed).assignments.items()))
            for seed in range(6)
        }
        assert len(variants) > 1

    def test_greedy_balance_on_uneven_articles(self):
        # Article sizes 5,3,3,1 over two folds balance to 6/6.
        rows = []
        sizes = {"a1": 5, "a2": 3, "a3": 3, "a4": 1}
        i = 0
        for article, size in sizes.items():
            for _ in range(size):
                rows.append(ClaimRecord(**valid_row(i, article=article)))
                i += 1
        folds = split_folds(Dataset(records=rows), k=2, seed=3)
        assert sorted(folds.fold_sizes()) == [6, 6]

    def test_k_too_small(self, tiny_dataset):
        with pytest.raises(ValueError):
            split_folds(tiny_dataset, k=1, seed=0)

    def test_near_equal_folds_at_scale(self):
        import random

        rng = random.Random(17)
        rows = []
        i = 0
        for a in range(100):
            for _ in range(rng.randint(1, 7)):
                rows.append(ClaimRecord(**valid_row(i, article=f"a{a}")))
                i += 1
        dataset = Dataset(records=rows)
        folds = split_folds(dataset, k=4, seed=5)
        sizes = folds.fold_sizes()
        assert sum(sizes) == len(dataset)
        assert max(sizes) - min(sizes) <= 6

    def test_fold_assignment_round_trip(self, tiny_dataset):
        folds = split_folds(tiny_dataset, k=3, seed=1)
        assert FoldAssignment.from_dict(folds.to_dict()) == folds


class TestSelectValidation:
    def test_ten_singleton_articles_fraction_point_two(self):
        train = [ClaimRecord(**valid_row(i, article=f"a{i}")) for i in range(10)]
        for seed in range(5):
            rest, validation = select_validation(train, 0.2, seed)
            assert len(validation) == 2
            assert len(rest) == 8

    def test_deterministic(self):
        train = [ClaimRecord(**valid_row(i, article=f"a{i % 4}")) for i in range(12)]
        a = select_validation(train, 0.25, seed=7)
        b = select_validation(train, 0.25, seed=7)
        assert a == b

    def test_articles_do_not_straddle(self):
        train = [ClaimRecord(**valid_row(i, article=f"a{i % 3}")) for i in range(12)]
        rest, validation = select_validation(train, 0.3, seed=1)
        rest_articles = {r.article_id for r in rest}
        val_articles = {r.article_id for r in validation}
        assert not rest_articles & val_articles

    def test_partition_is_complete(self):
        train = [ClaimRecord(**valid_row(i, article=f"a{i % 5}")) for i in range(20)]
        rest, validation = select_validation(train, 0.15, seed=3)
        assert sorted(r.claim_id for r in rest + validation) == sorted(
            r.claim_id for r in train
        )

    def test_size_close_to_requested(self):
        train = [ClaimRecord(**valid_row(i, article=f"a{i // 3}")) for i in range(60)]
        _, validation = select_validation(train, 0.15, seed=2)
        assert abs(len(validation) - round(0.15 * 60)) <= 2

    def test_fraction_bounds(self):
        train = [ClaimRecord(**valid_row(0))]
        for bad in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(ValueError):
                select_validation(train, bad, seed=0)

    def test_empty_train(self):
        with pytest.raises(ValueError):
            select_validation([], 0.5, seed=0)


def hit_script(target_url, hits, executions=12):
    """Per-call lists where the target appears in exactly `hits` calls."""
    with_target = [target_url, "https://other.example.com/x"]
    without = ["https://other.example.com/x", "https://other.example.com/y"]
    return [with_target if i < hits else without for i in range(executions)]


class TestStabilityFilter:
    def make_dataset(self, n):
        return Dataset(records=[ClaimRecord(**valid_row(i, article=f"a{i}")) for i in range(n)])

    def test_six_of_twelve_kept(self):
        dataset = self.make_dataset(1)
        record = dataset.records[0]
        engine = MockSearchEngine({record.target_query: hit_script(record.target_url, 6)})
        kept, report = stability_filter(dataset, engine, executions=12, threshold=0.5)
        assert [r.claim_id for r in kept.records] == [record.claim_id]
        assert report[0] == {
            "claim_id": record.claim_id, "hit_count": 6, "executions": 12, "kept": True,
        }

    def test_five_of_twelve_dropped(self):
        dataset = self.make_dataset(1)
        record = dataset.records[0]
        engine = MockSearchEngine({record.target_query: hit_script(record.target_url, 5)})
        kept, report = stability_filter(dataset, engine, executions=12, threshold=0.5)
        assert len(kept) == 0
        assert report[0]["hit_count"] == 5 and not report[0]["kept"]

    def test_twelve_of_twelve_kept_with_count(self):
        dataset = self.make_dataset(1)
        record = dataset.records[0]
        engine = MockSearchEngine({record.target_query: hit_script(record.target_url, 12)})
        kept, report = stability_filter(dataset, engine, executions=12, threshold=0.5)
        assert len(kept) == 1
        assert report[0]["hit_count"] == 12

    def test_engine_failures_count_as_not_found(self):
        dataset = self.make_dataset(1)
        record = dataset.records[0]
        # 7 hits, then scripted failures: still 7 >= 6, kept.
        script = hit_script(record.target_url, 7)[:7] + ["__error__"] * 5
        engine = MockSearchEngine({record.target_query: script})
        kept, report = stability_filter(dataset, engine, executions=12, threshold=0.5)
        assert len(kept) == 1
        assert report[0]["hit_count"] == 7

    def test_preserves_input_order_and_subset(self):
        dataset = self.make_dataset(4)
        script = {}
        for i, record in enumerate(dataset.records):
            script[record.target_query] = hit_script(record.target_url, 12 if i % 2 == 0 else 0)
        engine = MockSearchEngine(script)
        kept, _ = stability_filter(dataset, engine, executions=12, threshold=0.5)
        assert [r.claim_id for r in kept.records] == ["c0", "c2"]

    def test_parameter_validation(self):
        dataset = self.make_dataset(1)
        engine = MockSearchEngine({})
        with pytest.raises(ValueError):
            stability_filter(dataset, engine, executions=0)
        for bad in (0.0, 1.2, -0.5):
            with pytest.raises(ValueError):
                stability_filter(dataset, engine, threshold=bad)
