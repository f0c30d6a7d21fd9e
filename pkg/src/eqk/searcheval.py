"""Search execution and result evaluation.

Runs queries against a search engine (a live Bing adapter or a scripted
mock), persists every raw result list to an append-only snapshot store so
runs can be re-scored offline, and computes found-rate percentages and
MRR@K over repeated executions.
"""

from __future__ import annotations

import json
import logging
import math
import os
import random
import threading
import time
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Protocol

import requests

log = logging.getLogger(__name__)

DEFAULT_EXECUTIONS = 3
DEFAULT_TOP_K = 10

BING_ENDPOINT = "https://api.bing.microsoft.com/v7.0/search"
BING_KEY_ENV = "EQK_BING_API_KEY"


class EngineError(Exception):
    """A search engine call failed after exhausting its retry budget."""


def normalize_url(url: str) -> str:
    """Canonical URL form used to decide whether two results are the same page.

    Lowercases, drops the http(s) scheme, a leading ``www.``, the fragment,
    and trailing slashes. Idempotent.
    """
    s = url.lower()
    s = s.split("#", 1)[0]
    for scheme in ("http://", "https://"):
        if s.startswith(scheme):
            s = s[len(scheme) :]
            break
    if s.startswith("www."):
        s = s[4:]
    return s.rstrip("/")


def _utcnow() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass
class ResultList:
    """One ranked list of URLs from a single execution of a query."""

    query_text: str
    engine_id: str
    execution_index: int
    urls: list[str]
    retrieved_at: str = ""
    failed: bool = False

    def __post_init__(self) -> None:
        if self.execution_index < 0:
            raise ValueError("execution_index must be >= 0")
        normalized = [normalize_url(u) for u in self.urls]
        if len(set(normalized)) != len(normalized):
            raise ValueError("duplicate normalized URLs within one result list")

    @classmethod
    def build(
        cls,
        query_text: str,
        engine_id: str,
        execution_index: int,
        raw_urls: list[str],
        k: int,
        retrieved_at: str,
    ) -> "ResultList":
        """Deduplicate by normalized form (keeping first) and truncate to ``k``."""
        seen: set[str] = set()
        urls: list[str] = []
        for u in raw_urls:
            n = normalize_url(u)
            if n in seen:
                continue
            seen.add(n)
            urls.append(u)
            if len(urls) == k:
                break
        return cls(query_text, engine_id, execution_index, urls, retrieved_at)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ResultList":
        return cls(
            query_text=obj["query_text"],
            engine_id=obj["engine_id"],
            execution_index=obj["execution_index"],
            urls=list(obj["urls"]),
            retrieved_at=obj.get("retrieved_at", ""),
            failed=obj.get("failed", False),
        )


class SearchEngine(Protocol):
    """Anything that answers a query with an ordered URL list."""

    engine_id: str

    def search(self, query: str, k: int) -> list[str]: ...


class RateLimiter:
    """Serialises access to a rate-capped API across threads."""

    def __init__(
        self,
        rate_per_sec: float,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate_per_sec <= 0:
            raise ValueError("rate_per_sec must be positive")
        self._interval = 1.0 / rate_per_sec
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_slot = self._clock()

    def acquire(self) -> None:
        with self._lock:
            now = self._clock()
            wait = self._next_slot - now
            if wait > 0:
                self._sleep(wait)
                now = self._next_slot
            self._next_slot = max(now, self._next_slot) + self._interval


class MockSearchEngine:
    """Scripted engine for offline runs and tests.

    The script maps query text to either a flat URL list (returned on every
    call) or a list of per-call URL lists (consumed in call order, last one
    repeating). A per-call entry equal to ``"__error__"`` raises
    EngineError for that call. Optional seeded dropout removes each URL
    independently with the given probability, emulating the run-to-run
    variation of live search results. Unknown queries return no results.
    """

    def __init__(self, results: dict, dropout: float = 0.0, seed: int = 0) -> None:
        if not 0.0 <= dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        self.engine_id = "mock"
        self._results = dict(results)
        self._dropout = dropout
        self._rng = random.Random(seed)
        self._calls: dict[str, int] = {}

    @classmethod
    def from_file(cls, path: str | Path) -> "MockSearchEngine":
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        return cls(
            results=obj.get("results", {}),
            dropout=obj.get("dropout", 0.0),
            seed=obj.get("seed", 0),
        )

    def search(self, query: str, k: int) -> list[str]:
        call_index = self._calls.get(query, 0)
        self._calls[query] = call_index + 1
        scripted = self._results.get(query)
        if not scripted:
            return []
        per_call = any(isinstance(e, list) or e == "__error__" for e in scripted)
        if per_call:
            entry = scripted[min(call_index, len(scripted) - 1)]
            if entry == "__error__":
                raise EngineError(f"scripted failure for {query!r}")
            urls = entry
        else:
            urls = scripted
        if self._dropout:
            urls = [u for u in urls if self._rng.random() >= self._dropout]
        return list(urls)[:k]


class BingSearchEngine:
    """Adapter for the Bing Web Search v7 REST API.

    The subscription key comes from ``api_key`` or the ``key_env``
    environment variable. Calls go through a token-bucket rate limiter and
    a bounded retry loop; retriable HTTP failures (429/5xx, timeouts) are
    retried, anything else fails immediately.
    """

    def __init__(
        self,
        api_key: str | None = None,
        endpoint: str = BING_ENDPOINT,
        requests_per_second: float = 1.0,
        retries: int = 2,
        timeout: float = 10.0,
        key_env: str = BING_KEY_ENV,
        session: requests.Session | None = None,
    ) -> None:
        key = api_key or os.environ.get(key_env)
        if not key:
            raise EngineError(f"no Bing API key given and {key_env} is not set")
        self.engine_id = "bing"
        self._key = key
        self._endpoint = endpoint
        self._retries = retries
        self._timeout = timeout
        self._session = session or requests.Session()
        self._limiter = RateLimiter(requests_per_second)

    def search(self, query: str, k: int) -> list[str]:
        attempts = self._retries + 1
        last_error = "unknown"
        for attempt in range(attempts):
            self._limiter.acquire()
            try:
                resp = self._session.get(
                    self._endpoint,
                    params={"q": query, "count": k},
                    headers={"Ocp-Apim-Subscription-Key": self._key},
                    timeout=self._timeout,
                )
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                log.warning("bing attempt %d/%d: %s", attempt + 1, attempts, last_error)
                continue
            if resp.status_code == 200:
                try:
                    pages = resp.json().get("webPages", {}).get("value", [])
                    return [p["url"] for p in pages]
                except (ValueError, KeyError, TypeError) as exc:
                    raise EngineError(f"malformed Bing response: {exc}") from exc
            last_error = f"HTTP {resp.status_code}"
            if resp.status_code not in (429, 500, 502, 503, 504):
                raise EngineError(f"Bing rejected the request: {last_error}")
            log.warning("bing attempt %d/%d: %s", attempt + 1, attempts, last_error)
        raise EngineError(f"Bing search failed after {attempts} attempts: {last_error}")


class SnapshotStore:
    """Append-only JSONL persistence of result lists, one file per engine."""

    def __init__(self, root: str | Path) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, engine_id: str) -> Path:
        return self.root / f"{engine_id}.jsonl"

    def put(self, result_list: ResultList) -> None:
        line = json.dumps(result_list.to_dict(), ensure_ascii=False)
        with self._lock:
            with open(self._path(result_list.engine_id), "a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def get(
        self,
        query: str,
        engine_id: str,
        max_age_seconds: float | None = None,
        now: datetime | None = None,
    ) -> list[ResultList]:
        """All stored executions of ``query``, in insertion order.

        With ``max_age_seconds``, only lists retrieved within that window
        are returned. Corrupted lines are skipped with a warning.
        """
        path = self._path(engine_id)
        if not path.exists():
            return []
        cutoff = None
        if max_age_seconds is not None:
            ref = now or datetime.now(timezone.utc)
            cutoff = ref.timestamp() - max_age_seconds
        out: list[ResultList] = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rl = ResultList.from_dict(json.loads(line))
                except (ValueError, KeyError, TypeError) as exc:
                    log.warning("skipping corrupt snapshot %s:%d: %s", path, lineno, exc)
                    continue
                if rl.query_text != query:
                    continue
                if cutoff is not None:
                    try:
                        ts = datetime.fromisoformat(rl.retrieved_at).timestamp()
                    except ValueError:
                        log.warning("skipping snapshot with bad timestamp %s:%d", path, lineno)
                        continue
                    if ts < cutoff:
                        continue
                out.append(rl)
        return out


def execute_repeated(
    engine: SearchEngine,
    query: str,
    n: int = DEFAULT_EXECUTIONS,
    k: int = DEFAULT_TOP_K,
    store: SnapshotStore | None = None,
    retries: int = 1,
    now_fn: Callable[[], str] = _utcnow,
) -> list[ResultList]:
    """Execute ``query`` ``n`` independent times, each truncated to top ``k``.

    Empty queries short-circuit to ``n`` empty lists without touching the
    engine. A call that still fails after ``retries`` extra attempts yields
    an empty list flagged ``failed`` (it scores as "not found") instead of
    aborting the run. Every completed call is persisted to ``store`` before
    returning.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if k < 1:
        raise ValueError("k must be >= 1")
    if not query.strip():
        return [
            ResultList(query_text=query, engine_id=engine.engine_id, execution_index=i, urls=[])
            for i in range(n)
        ]
    out: list[ResultList] = []
    for i in range(n):
        urls: list[str] | None = None
        last: EngineError | None = None
        for _ in range(retries + 1):
            try:
                urls = engine.search(query, k)
                break
            except EngineError as exc:
                last = exc
        if urls is None:
            log.warning(
                "engine %s failed on %r (execution %d): %s", engine.engine_id, query, i, last
            )
            rl = ResultList(
                query_text=query,
                engine_id=engine.engine_id,
                execution_index=i,
                urls=[],
                retrieved_at=now_fn(),
                failed=True,
            )
        else:
            rl = ResultList.build(query, engine.engine_id, i, urls, k, now_fn())
        if store is not None:
            store.put(rl)
        out.append(rl)
    return out


@dataclass
class SampleSearchOutcome:
    """Search results and target matches for one (claim, method) pair."""

    claim_id: str
    method: str
    target_url: str
    lists: list[ResultList]
    target_found_per_list: list[bool]
    best_rank_per_list: list[int | None]

    def __post_init__(self) -> None:
        n = len(self.lists)
        if len(self.target_found_per_list) != n or len(self.best_rank_per_list) != n:
            raise ValueError("per-list vectors must match the number of result lists")

    @property
    def hits(self) -> int:
        return sum(self.target_found_per_list)

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "method": self.method,
            "target_url": self.target_url,
            "lists": [rl.to_dict() for rl in self.lists],
            "target_found_per_list": list(self.target_found_per_list),
            "best_rank_per_list": list(self.best_rank_per_list),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SampleSearchOutcome":
        return cls(
            claim_id=obj["claim_id"],
            method=obj["method"],
            target_url=obj["target_url"],
            lists=[ResultList.from_dict(o) for o in obj["lists"]],
            target_found_per_list=list(obj["target_found_per_list"]),
            best_rank_per_list=[r if r is None else int(r) for r in obj["best_rank_per_list"]],
        )


def evaluate_sample(
    claim_id: str,
    method: str,
    target_url: str,
    lists: list[ResultList],
    strict: bool = False,
) -> SampleSearchOutcome:
    """Mark where the target URL appears in each executed result list.

    Matching is on normalized URLs unless ``strict`` asks for exact string
    equality.
    """
    target = target_url if strict else normalize_url(target_url)
    found: list[bool] = []
    ranks: list[int | None] = []
    for rl in lists:
        rank = None
        for pos, u in enumerate(rl.urls, start=1):
            if (u if strict else normalize_url(u)) == target:
                rank = pos
                break
        ranks.append(rank)
        found.append(rank is not None)
    return SampleSearchOutcome(claim_id, method, target, lists, found, ranks)


@dataclass(frozen=True)
class SearchMetrics:
    """Aggregate search metrics over a set of sample outcomes."""

    fa_pct: float
    fm_pct: float
    fo_pct: float
    mrr: float

    def __post_init__(self) -> None:
        if not self.fa_pct <= self.fm_pct <= self.fo_pct:
            raise ValueError("found-rate thresholds must be monotone: fa <= fm <= fo")

    def to_dict(self) -> dict:
        return asdict(self)


def _common_n(outcomes: list[SampleSearchOutcome]) -> int:
    if not outcomes:
        raise ValueError("no outcomes to score")
    ns = {len(o.lists) for o in outcomes}
    if len(ns) != 1:
        raise ValueError(f"outcomes mix different execution counts: {sorted(ns)}")
    return ns.pop()


def found_metrics(outcomes: list[SampleSearchOutcome]) -> tuple[float, float, float]:
    """(FA%, FM%, FO%): target found in all / a majority / at least one of
    each sample's N executions."""
    n = _common_n(outcomes)
    majority = math.ceil((n + 1) / 2)
    total = len(outcomes)
    fa = sum(1 for o in outcomes if o.hits == n)
    fm = sum(1 for o in outcomes if o.hits >= majority)
    fo = sum(1 for o in outcomes if o.hits >= 1)
    return (100.0 * fa / total, 100.0 * fm / total, 100.0 * fo / total)


def mrr_at_k(outcomes: list[SampleSearchOutcome], k: int = DEFAULT_TOP_K) -> float:
    """Mean over every executed list of 1/rank of the target within the top
    ``k``, counting absent targets as 0."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _common_n(outcomes)
    total = 0.0
    count = 0
    for o in outcomes:
        for rank in o.best_rank_per_list:
            count += 1
            if rank is not None and rank <= k:
                total += 1.0 / rank
    return total / count


def search_metrics(outcomes: list[SampleSearchOutcome], k: int = DEFAULT_TOP_K) -> SearchMetrics:
    fa, fm, fo = found_metrics(outcomes)
    return SearchMetrics(fa_pct=fa, fm_pct=fm, fo_pct=fo, mrr=mrr_at_k(outcomes, k))


def write_outcomes(outcomes: list[SampleSearchOutcome], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outcomes:
            fh.write(json.dumps(o.to_dict(), ensure_ascii=False) + "\n")


def load_outcomes(path: str | Path) -> list[SampleSearchOutcome]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(SampleSearchOutcome.from_dict(json.loads(line)))
    return out
