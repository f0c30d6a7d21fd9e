"""Rule-based query generation over precomputed linguistic annotations.

Three extractive generators: the claim verbatim, its named entities, and
its noun phrases. Annotations (entity/noun-phrase/token spans with
code-point offsets) arrive from a JSONL file produced by an external
annotator; nothing here runs NLP models.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import ClaimRecord

log = logging.getLogger(__name__)

GENERATION_METHODS = frozenset(
    {
        "verbatim",
        "named_entities",
        "noun_phrases",
        "zero_shot",
        "few_shot_1",
        "few_shot_2",
        "few_shot_3",
        "fine_tuned",
    }
)

JOIN_SEPARATOR = ", "


class AnnotationError(ValueError):
    """An annotation record violates the span schema."""


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    text: str
    label: str = ""

    def __post_init__(self) -> None:
        if not 0 <= self.start < self.end:
            raise AnnotationError(f"bad span offsets [{self.start}, {self.end})")
        if len(self.text) != self.end - self.start:
            raise AnnotationError(
                f"span text length {len(self.text)} does not match [{self.start}, {self.end})"
            )

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "text": self.text, "label": self.label}

    @classmethod
    def from_dict(cls, obj: dict) -> "Span":
        return cls(
            start=int(obj["start"]),
            end=int(obj["end"]),
            text=obj["text"],
            label=obj.get("label", ""),
        )


@dataclass
class LinguisticAnnotation:
    claim_id: str
    entities: list[Span] = field(default_factory=list)
    noun_phrases: list[Span] = field(default_factory=list)
    tokens: list[Span] = field(default_factory=list)

    def validate(self, claim_text: str | None = None) -> None:
        """Check span ordering, entity non-overlap, and (when the claim text
        is given) that every span equals the substring it points at."""
        for name, spans in (
            ("entities", self.entities),
            ("noun_phrases", self.noun_phrases),
            ("tokens", self.tokens),
        ):
            for prev, cur in zip(spans, spans[1:]):
                if cur.start < prev.start:
                    raise AnnotationError(f"{self.claim_id}: {name} spans not sorted by start")
            if claim_text is not None:
                for span in spans:
                    if span.end > len(claim_text):
                        raise AnnotationError(
                            f"{self.claim_id}: {name} span [{span.start}, {span.end}) "
                            f"exceeds claim length {len(claim_text)}"
                        )
                    actual = claim_text[span.start : span.end]
                    if actual != span.text:
                        raise AnnotationError(
                            f"{self.claim_id}: {name} span text {span.text!r} does not match "
                            f"claim substring {actual!r}"
                        )
        for prev, cur in zip(self.entities, self.entities[1:]):
            if cur.start < prev.end:
                raise AnnotationError(f"{self.claim_id}: entity spans overlap")

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "entities": [s.to_dict() for s in self.entities],
            "noun_phrases": [s.to_dict() for s in self.noun_phrases],
            "tokens": [s.to_dict() for s in self.tokens],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LinguisticAnnotation":
        return cls(
            claim_id=obj["claim_id"],
            entities=[Span.from_dict(s) for s in obj.get("entities", [])],
            noun_phrases=[Span.from_dict(s) for s in obj.get("noun_phrases", [])],
            tokens=[Span.from_dict(s) for s in obj.get("tokens", [])],
        )


@dataclass
class GeneratedQuery:
    """A candidate query with provenance. An empty text is kept and flagged
    rather than dropped, so every method scores over the same samples."""

    claim_id: str
    method: str
    text: str
    template_id: str | None = None

    def __post_init__(self) -> None:
        if self.method not in GENERATION_METHODS:
            raise ValueError(f"unknown generation method {self.method!r}")

    @property
    def empty(self) -> bool:
        return self.text == ""

    def to_dict(self) -> dict:
        return {
            "claim_id": self.claim_id,
            "method": self.method,
            "template_id": self.template_id,
            "text": self.text,
            "empty": self.empty,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "GeneratedQuery":
        return cls(
            claim_id=obj["claim_id"],
            method=obj["method"],
            text=obj["text"],
            template_id=obj.get("template_id"),
        )


def dedupe_fragments(spans: list[Span]) -> list[str]:
    """Span texts in sentence order, exact duplicates removed keeping the
    first occurrence. Case-sensitive: distinct surface forms never merge."""
    seen: set[str] = set()
    out: list[str] = []
    for span in spans:
        if span.text in seen:
            continue
        seen.add(span.text)
        out.append(span.text)
    return out


def verbatim(claim: ClaimRecord) -> GeneratedQuery:
    """The full claim text, unchanged."""
    return GeneratedQuery(claim.claim_id, "verbatim", claim.claim_text)


def _check_pair(claim: ClaimRecord, annotation: LinguisticAnnotation) -> None:
    if annotation.claim_id != claim.claim_id:
        raise ValueError(
            f"annotation {annotation.claim_id!r} does not belong to claim {claim.claim_id!r}"
        )


def named_entities(claim: ClaimRecord, annotation: LinguisticAnnotation) -> GeneratedQuery:
    """All named entities of the claim, in order, joined with ", "."""
    _check_pair(claim, annotation)
    text = JOIN_SEPARATOR.join(dedupe_fragments(annotation.entities))
    return GeneratedQuery(claim.claim_id, "named_entities", text)


def noun_phrases(claim: ClaimRecord, annotation: LinguisticAnnotation) -> GeneratedQuery:
    """All noun phrases of the claim, in order, joined with ", "."""
    _check_pair(claim, annotation)
    text = JOIN_SEPARATOR.join(dedupe_fragments(annotation.noun_phrases))
    return GeneratedQuery(claim.claim_id, "noun_phrases", text)


def load_annotations(
    path: str | Path, claims: dict[str, ClaimRecord] | None = None
) -> dict[str, LinguisticAnnotation]:
    """Read an annotation JSONL file keyed by claim_id.

    With ``claims`` given, every annotation must reference a known claim and
    every span must reproduce the exact claim substring (offsets count
    Unicode code points).
    """
    out: dict[str, LinguisticAnnotation] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                ann = LinguisticAnnotation.from_dict(json.loads(line))
            except (json.JSONDecodeError, KeyError, AnnotationError) as exc:
                raise AnnotationError(f"{where}: {exc}") from exc
            if ann.claim_id in out:
                raise AnnotationError(f"{where}: duplicate annotation for {ann.claim_id!r}")
            if claims is not None:
                if ann.claim_id not in claims:
                    raise AnnotationError(f"{where}: unknown claim_id {ann.claim_id!r}")
                try:
                    ann.validate(claims[ann.claim_id].claim_text)
                except AnnotationError as exc:
                    raise AnnotationError(f"{where}: {exc}") from exc
            else:
                ann.validate()
            out[ann.claim_id] = ann
    return out


def write_annotations(annotations: list[LinguisticAnnotation], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ann in annotations:
            fh.write(json.dumps(ann.to_dict(), ensure_ascii=False) + "\n")


def write_queries(queries: list[GeneratedQuery], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps(q.to_dict(), ensure_ascii=False) + "\n")


def load_queries(path: str | Path) -> list[GeneratedQuery]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(GeneratedQuery.from_dict(json.loads(line)))
    return out
