"""Rank fusion of per-method search results with a positional Borda count.

Point assignment is the standard k-r+1 per rank; the modification is the
tie-breaking chain, which prefers the method with the best standalone
priority, then that method's best rank for the URL, then the URL string.
"""

from __future__ import annotations

from dataclasses import dataclass

from .searcheval import ResultList, SampleSearchOutcome, evaluate_sample, normalize_url


@dataclass
class MethodRanking:
    """One method's result lists for a single sample, plus its ensemble
    priority (1 = most individually effective)."""

    method: str
    priority: int
    lists: list[ResultList]


@dataclass
class CombinedRanking:
    urls: list[str]
    scores: list[int]

    def __post_init__(self) -> None:
        if len(self.urls) != len(self.scores):
            raise ValueError("urls and scores must be parallel")
        if any(a < b for a, b in zip(self.scores, self.scores[1:])):
            raise ValueError("scores must be non-increasing")
        if len(set(self.urls)) != len(self.urls):
            raise ValueError("combined URLs must be unique")


def borda_combine(rankings: list[MethodRanking], k: int) -> CombinedRanking:
    """Fuse rankings into one top-``k`` list by summed positional points.

    A URL at rank r (1-based, r <= k) in any list earns k-r+1 points,
    summed over each method's lists and then over methods. Ties break by
    the lowest priority number among methods that ranked the URL, then by
    that method's best rank for it, then by URL. URLs are normalized
    before points accumulate.
    """
    if not rankings:
        raise ValueError("need at least one ranking")
    if k < 1:
        raise ValueError("k must be >= 1")
    priorities = [r.priority for r in rankings]
    if len(set(priorities)) != len(priorities):
        raise ValueError(f"priorities must be unique, got {priorities}")

    points: dict[str, int] = {}
    best: dict[str, tuple[int, int]] = {}
    for ranking in rankings:
        for result_list in ranking.lists:
            for rank, url in enumerate(result_list.urls[:k], start=1):
                nurl = normalize_url(url)
                points[nurl] = points.get(nurl, 0) + (k - rank + 1)
                cand = (ranking.priority, rank)
                if nurl not in best or cand < best[nurl]:
                    best[nurl] = cand

    order = sorted(points, key=lambda u: (-points[u], best[u][0], best[u][1], u))
    top = order[:k]
    return CombinedRanking(urls=top, scores=[points[u] for u in top])


def combined_outcomes(
    per_method_outcomes: dict[str, list[SampleSearchOutcome]],
    priorities: dict[str, int],
    k: int,
) -> list[SampleSearchOutcome]:
    """Combine methods' outcomes per sample and per execution index.

    For each sample, the i-th lists of all methods are fused together, so
    the combination yields the same N lists per sample as its members and
    is scored by the unchanged search metrics. All methods must cover the
    same samples with the same N.
    """
    if set(per_method_outcomes) != set(priorities):
        raise ValueError("methods and priorities must cover the same keys")
    if len(set(priorities.values())) != len(priorities):
        raise ValueError("priorities must be unique")
    methods = sorted(priorities, key=priorities.__getitem__)
    label = "+".join(methods)

    indexed: dict[str, dict[str, SampleSearchOutcome]] = {}
    sample_ids: set[str] | None = None
    for method, outcomes in per_method_outcomes.items():
        by_id = {o.claim_id: o for o in outcomes}
        if sample_ids is None:
            sample_ids = set(by_id)
        elif set(by_id) != sample_ids:
            raise ValueError(f"method {method!r} covers a different sample set")
        indexed[method] = by_id

    combined: list[SampleSearchOutcome] = []
    first_method = methods[0]
    for outcome in per_method_outcomes[first_method]:
        claim_id = outcome.claim_id
        member = {m: indexed[m][claim_id] for m in methods}
        ns = {len(o.lists) for o in member.values()}
        if len(ns) != 1:
            raise ValueError(f"sample {claim_id!r}: methods ran different execution counts")
        n = ns.pop()
        targets = {o.target_url for o in member.values()}
        if len(targets) != 1:
            raise ValueError(f"sample {claim_id!r}: methods disagree on the target URL")
        lists = []
        for i in range(n):
            fused = borda_combine(
                [MethodRanking(m, priorities[m], [member[m].lists[i]]) for m in methods], k
            )
            lists.append(
                ResultList(
                    query_text=f"combined:{label}",
                    engine_id="ensemble",
                    execution_index=i,
                    urls=fused.urls,
                )
            )
        combined.append(evaluate_sample(claim_id, label, outcome.target_url, lists))
    return combined
