"""Claim dataset loading, validation, fold splitting, and stability filtering.

The wire format is JSON-Lines, one claim record per line, with snake_case
field names. Records carry the claim sentence, the human target query, the
target evidence URL, and the source article id that grouping-aware splits
are keyed on.
"""

from __future__ import annotations

import json
import logging
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import urlparse

from .searcheval import SearchEngine, SnapshotStore, evaluate_sample, execute_repeated

log = logging.getLogger(__name__)


class DatasetError(ValueError):
    """A dataset file or record violates the schema."""


@dataclass
class ClaimRecord:
    claim_id: str
    article_id: str
    claim_text: str
    target_query: str
    target_url: str
    context_sentences: list[str] | None = None

    def to_dict(self) -> dict:
        obj = {
            "claim_id": self.claim_id,
            "article_id": self.article_id,
            "claim_text": self.claim_text,
            "target_query": self.target_query,
            "target_url": self.target_url,
        }
        if self.context_sentences is not None:
            obj["context_sentences"] = list(self.context_sentences)
        return obj


@dataclass
class Dataset:
    records: list[ClaimRecord]
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for r in self.records:
            if r.claim_id in seen:
                raise DatasetError(f"duplicate claim_id {r.claim_id!r}")
            seen.add(r.claim_id)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, ClaimRecord]:
        return {r.claim_id: r for r in self.records}

    def articles(self) -> dict[str, list[ClaimRecord]]:
        """Records grouped by article_id, both levels in input order."""
        out: dict[str, list[ClaimRecord]] = {}
        for r in self.records:
            out.setdefault(r.article_id, []).append(r)
        return out


def _require_str(obj: dict, key: str, where: str, allow_empty: bool = False) -> str:
    if key not in obj:
        raise DatasetError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, str):
        raise DatasetError(f"{where}: field {key!r} must be a string")
    if not allow_empty and not value:
        raise DatasetError(f"{where}: field {key!r} must be non-empty")
    return value


def record_from_dict(obj: dict, where: str = "record") -> ClaimRecord:
    """Build and validate one claim record, naming ``where`` in errors."""
    claim_id = _require_str(obj, "claim_id", where)
    article_id = _require_str(obj, "article_id", where)
    claim_text = _require_str(obj, "claim_text", where)
    target_query = _require_str(obj, "target_query", where)
    target_url = _require_str(obj, "target_url", where)
    parsed = urlparse(target_url)
    if not parsed.scheme or not parsed.netloc:
        raise DatasetError(f"{where}: field 'target_url' is not an absolute URL: {target_url!r}")
    context = obj.get("context_sentences")
    if context is not None:
        if not isinstance(context, list) or any(not isinstance(s, str) for s in context):
            raise DatasetError(f"{where}: field 'context_sentences' must be a list of strings")
    return ClaimRecord(claim_id, article_id, claim_text, target_query, target_url, context)


def load_dataset(path: str | Path) -> Dataset:
    """Read a JSONL claims file, checking every record invariant.

    Errors name the offending line; blank lines are ignored.
    """
    records: list[ClaimRecord] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: malformed JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise DatasetError(f"{where}: expected a JSON object")
            record = record_from_dict(obj, where)
            if record.claim_id in seen:
                raise DatasetError(f"{where}: duplicate claim_id {record.claim_id!r}")
            seen.add(record.claim_id)
            records.append(record)
    return Dataset(records=records, metadata={"source": str(path)})


def write_dataset(dataset: Dataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in dataset.records:
            fh.write(json.dumps(r.to_dict(), ensure_ascii=False) + "\n")


@dataclass
class FoldAssignment:
    """Maps every claim_id to a fold index in [0, k)."""

    k: int
    assignments: dict[str, int]

    def __post_init__(self) -> None:
        bad = {cid: f for cid, f in self.assignments.items() if not 0 <= f < self.k}
        if bad:
            raise ValueError(f"fold indices out of range: {bad}")

    def test_split(self, dataset: Dataset, fold: int) -> list[ClaimRecord]:
        return [r for r in dataset.records if self.assignments[r.claim_id] == fold]

    def train_split(self, dataset: Dataset, fold: int) -> list[ClaimRecord]:
        return [r for r in dataset.records if self.assignments[r.claim_id] != fold]

    def fold_sizes(self) -> list[int]:
        sizes = [0] * self.k
        for f in self.assignments.values():
            sizes[f] += 1
        return sizes

    def to_dict(self) -> dict:
        return {"k": self.k, "assignments": dict(self.assignments)}

    @classmethod
    def from_dict(cls, obj: dict) -> "FoldAssignment":
        return cls(k=obj["k"], assignments={c: int(f) for c, f in obj["assignments"].items()})


def split_folds(dataset: Dataset, k: int, seed: int) -> FoldAssignment:
    """Assign whole articles to folds, greedily balancing claim counts.

    Articles are shuffled with the seed, ordered by descending claim count
    (the shuffle breaks ties), and each is placed on the currently smallest
    fold; for equal-sized articles this deals round-robin. All claims of
    one article land in the same fold.
    """
    if k < 2:
        raise ValueError("k must be >= 2")
    articles = dataset.articles()
    if len(articles) < k:
        raise DatasetError(f"need at least {k} articles to make {k} folds, have {len(articles)}")
    order = list(articles)
    random.Random(seed).shuffle(order)
    order.sort(key=lambda a: -len(articles[a]))
    loads = [0] * k
    assignments: dict[str, int] = {}
    for article_id in order:
        fold = min(range(k), key=loads.__getitem__)
        for record in articles[article_id]:
            assignments[record.claim_id] = fold
        loads[fold] += len(articles[article_id])
    return FoldAssignment(k=k, assignments=assignments)


def select_validation(
    train: list[ClaimRecord], fraction: float, seed: int
) -> tuple[list[ClaimRecord], list[ClaimRecord]]:
    """Split ``train`` into (rest, validation) without splitting any article.

    Aims for round(fraction * len(train)) validation records; article
    grouping can make the exact size unreachable, in which case the
    closest achievable size along a seeded greedy scan is used.
    """
    if not train:
        raise ValueError("train is empty")
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    target = round(fraction * len(train))
    groups: dict[str, list[ClaimRecord]] = {}
    for r in train:
        groups.setdefault(r.article_id, []).append(r)
    order = list(groups)
    random.Random(seed).shuffle(order)
    chosen: set[str] = set()
    size = 0
    for article_id in order:
        gain = len(groups[article_id])
        if abs(size + gain - target) < abs(size - target):
            chosen.add(article_id)
            size += gain
    validation = [r for r in train if r.article_id in chosen]
    rest = [r for r in train if r.article_id not in chosen]
    return rest, validation


def stability_filter(
    dataset: Dataset,
    engine: SearchEngine,
    executions: int = 12,
    threshold: float = 0.5,
    k: int = 10,
    store: SnapshotStore | None = None,
) -> tuple[Dataset, list[dict]]:
    """Keep only claims whose target query reliably finds the target URL.

    Each record's target query is executed ``executions`` times; the record
    survives iff the normalized target URL shows up in the top-``k`` results
    in at least ceil(threshold * executions) of them. Engine failures count
    as "not found" and never abort the filter. Returns the filtered dataset
    (input order preserved) and a per-record hit-count report.
    """
    if executions < 1:
        raise ValueError("executions must be >= 1")
    if not 0 < threshold <= 1:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    # Tiny epsilon guards float artifacts in threshold * executions.
    needed = math.ceil(threshold * executions - 1e-9)
    kept: list[ClaimRecord] = []
    report: list[dict] = []
    for record in dataset.records:
        lists = execute_repeated(engine, record.target_query, n=executions, k=k, store=store)
        outcome = evaluate_sample(record.claim_id, "target", record.target_url, lists)
        hits = outcome.hits
        keep = hits >= needed
        if keep:
            kept.append(record)
        report.append(
            {
                "claim_id": record.claim_id,
                "hit_count": hits,
                "executions": executions,
                "kept": keep,
            }
        )
    return Dataset(records=kept, metadata=dict(dataset.metadata)), report
