"""Character-level Rouge, Levenshtein edit distance, and Pearson correlation.

Search queries are short, so similarity is scored over characters rather
than words: strings are lowercased and stripped of whitespace before
n-gram or subsequence matching, which keeps the scores robust to word
reordering. Edit distance is the exception: it operates on the raw
strings with no normalisation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class RougeScore:
    """Precision/recall/F1 triple for one Rouge variant."""

    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class SimilarityReport:
    """Every similarity metric for one (target, generated) pair."""

    rouge1: RougeScore
    rouge2: RougeScore
    rougeL: RougeScore
    levenshtein_distance: int
    levenshtein_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def char_tokenize(s: str) -> list[str]:
    """Lowercase ``s`` and return its non-whitespace characters in order."""
    return [ch for ch in s.lower() if not ch.isspace()]


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(target: str, generated: str, n: int) -> RougeScore:
    """Character n-gram Rouge with clipped (multiset) overlap counts.

    Recall is overlap / target n-grams, precision is overlap / generated
    n-grams. If either side has no n-grams, all components are 0.
    """
    if n not in (1, 2):
        raise ValueError(f"rouge_n supports n in {{1, 2}}, got {n}")
    target_grams = _ngram_counts(char_tokenize(target), n)
    generated_grams = _ngram_counts(char_tokenize(generated), n)
    if not target_grams or not generated_grams:
        return RougeScore(0.0, 0.0, 0.0)
    overlap = sum((target_grams & generated_grams).values())
    recall = overlap / sum(target_grams.values())
    precision = overlap / sum(generated_grams.values())
    return RougeScore(precision, recall, _f1(precision, recall))


def rouge_l(target: str, generated: str) -> RougeScore:
    """Character-level Rouge-L from the longest common subsequence length."""
    a = char_tokenize(target)
    b = char_tokenize(generated)
    if not a or not b:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = _lcs_length(a, b)
    recall = lcs / len(a)
    precision = lcs / len(b)
    return RougeScore(precision, recall, _f1(precision, recall))


def _lcs_length(a: list[str], b: list[str]) -> int:
    # Two-row dynamic program: O(len(a)*len(b)) time, O(len(b)) space.
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                cur.append(prev[j - 1] + 1)
            else:
                cur.append(max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance over Unicode code points, no normalisation."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, start=1):
        cur = [i]
        for j, y in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def levenshtein_ratio(a: str, b: str) -> float:
    """Similarity in [0, 1]: 1 - distance/max(len). Two empty strings score 1."""
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def pearson(xs: list[float], ys: list[float]) -> float:
    """Sample Pearson correlation coefficient.

    Raises ValueError on mismatched lengths, fewer than two points, or a
    constant series (the coefficient is undefined there).
    """
    if len(xs) != len(ys):
        raise ValueError(f"series lengths differ: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two points")
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0 or var_y == 0:
        raise ValueError("correlation undefined for a constant series")
    r = sum(p * q for p, q in zip(dx, dy)) / math.sqrt(var_x * var_y)
    return max(-1.0, min(1.0, r))


def compare(target: str, generated: str) -> SimilarityReport:
    """Compute the full similarity report for one (target, generated) pair."""
    return SimilarityReport(
        rouge1=rouge_n(target, generated, 1),
        rouge2=rouge_n(target, generated, 2),
        rougeL=rouge_l(target, generated),
        levenshtein_distance=levenshtein(target, generated),
        levenshtein_ratio=levenshtein_ratio(target, generated),
    )
