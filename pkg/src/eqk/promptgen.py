"""Prompt assembly and text-generation backends.

Builds zero-shot and few-shot model inputs from a fixed template set,
strips template text back out of model outputs, and picks the best
in-context examples from a training split. The model itself sits behind a
small JSON-over-HTTP protocol so everything here runs offline against the
deterministic stub backend.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import requests

from .corpus import ClaimRecord
from .textmetrics import levenshtein_ratio

log = logging.getLogger(__name__)

FORMAT_CLASSES = ("no_prompt", "long_explanation", "short_suffix", "short_prefix")

BACKEND_TOKEN_ENV = "EQK_BACKEND_TOKEN"


class BackendError(Exception):
    """A generation backend call failed after exhausting its retry budget."""

    def __init__(self, message: str, attempts: int | None = None) -> None:
        super().__init__(message)
        self.attempts = attempts


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    prefix: str | None = None
    suffix: str | None = None
    format_class: str = "no_prompt"

    def __post_init__(self) -> None:
        if self.format_class not in FORMAT_CLASSES:
            raise ValueError(f"unknown format class {self.format_class!r}")
        shape = (self.prefix is not None, self.suffix is not None)
        expected = {
            "no_prompt": (False, False),
            "long_explanation": (True, True),
            "short_suffix": (False, True),
            "short_prefix": (True, False),
        }[self.format_class]
        if shape != expected:
            raise ValueError(
                f"template {self.template_id!r}: prefix/suffix presence does not "
                f"match format class {self.format_class!r}"
            )


def builtin_templates() -> list[PromptTemplate]:
    """The 13 fixed templates: no-prompt plus template-01 through template-12."""
    t = PromptTemplate
    return [
        t("no-prompt", None, None, "no_prompt"),
        t("template-01", "Generate search query:", "Search query:", "long_explanation"),
        t("template-02", "Fact-check the following sentence:", "Fact-check:", "long_explanation"),
        t("template-03", "Verify the following sentence:", "Verify:", "long_explanation"),
        t("template-04", "Summarize the following sentence:", "Summarize:", "long_explanation"),
        t("template-05", None, "Search query:", "short_suffix"),
        t("template-06", None, "Fact-Check:", "short_suffix"),
        t("template-07", None, "Verify:", "short_suffix"),
        t("template-08", None, "Summarize:", "short_suffix"),
        t("template-09", "Search query:", None, "short_prefix"),
        t("template-10", "Fact-Check:", None, "short_prefix"),
        t("template-11", "Verify:", None, "short_prefix"),
        t("template-12", "Summarize:", None, "short_prefix"),
    ]


def template_by_id(template_id: str) -> PromptTemplate:
    for tpl in builtin_templates():
        if tpl.template_id == template_id:
            return tpl
    known = ", ".join(t.template_id for t in builtin_templates())
    raise KeyError(f"unknown template {template_id!r} (known: {known})")


@dataclass(frozen=True)
class GenerationParams:
    num_beams: int = 10
    forbid_repeated_bigrams: bool = True
    early_stopping: bool = True
    max_new_tokens: int = 16

    def __post_init__(self) -> None:
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")

    def to_dict(self) -> dict:
        return {
            "num_beams": self.num_beams,
            "forbid_repeated_bigrams": self.forbid_repeated_bigrams,
            "early_stopping": self.early_stopping,
            "max_new_tokens": self.max_new_tokens,
        }


@dataclass(frozen=True)
class InContextExample:
    claim_text: str
    target_query: str
    source_claim_id: str

    def __post_init__(self) -> None:
        if not self.claim_text or not self.target_query:
            raise ValueError("in-context examples need non-empty claim and query")


def render_zero_shot(tpl: PromptTemplate, claim_text: str) -> str:
    """Join prefix, claim, and suffix with single spaces; absent parts vanish."""
    if not claim_text:
        raise ValueError("claim_text must be non-empty")
    parts = [p for p in (tpl.prefix, claim_text, tpl.suffix) if p]
    return " ".join(parts)


def render_few_shot(
    tpl: PromptTemplate, examples: list[InContextExample], claim_text: str
) -> str:
    """Prepend solved example blocks, one per line, before the task input.

    Each block is the example rendered as a zero-shot input, a space, and
    its target query; the final line is the target claim rendered the same
    way, left unsolved.
    """
    if not 1 <= len(examples) <= 3:
        raise ValueError(f"need 1..3 in-context examples, got {len(examples)}")
    blocks = [
        render_zero_shot(tpl, ex.claim_text) + " " + ex.target_query + "\n" for ex in examples
    ]
    return "".join(blocks) + render_zero_shot(tpl, claim_text)


def postprocess(raw_output: str, tpl: PromptTemplate) -> str:
    """Strip template text the model parroted back.

    Every exact, case-sensitive occurrence of the template's prefix and
    suffix is removed; partial inclusions are left alone. The result is
    trimmed and internal whitespace runs collapse to single spaces.
    """
    out = raw_output
    for part in (tpl.prefix, tpl.suffix):
        if part:
            out = out.replace(part, "")
    return " ".join(out.split())


@dataclass(frozen=True)
class BackendResult:
    output: str
    token_count: int


class GenerationBackend(Protocol):
    def complete(self, input_text: str, params: GenerationParams) -> BackendResult: ...


class StubBackend:
    """Deterministic in-process backend for offline runs and tests.

    Known inputs return their scripted output; anything else falls back to
    echoing the first ``max_new_tokens`` whitespace-separated tokens of the
    input, so end-to-end runs stay reproducible without a model.
    """

    def __init__(self, mapping: dict[str, str] | None = None) -> None:
        self._mapping = dict(mapping or {})

    @classmethod
    def from_file(cls, path: str | Path) -> "StubBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, input_text: str, params: GenerationParams) -> BackendResult:
        if input_text in self._mapping:
            output = self._mapping[input_text]
        else:
            output = " ".join(input_text.split()[: params.max_new_tokens])
        return BackendResult(output=output, token_count=len(output.split()))


class HTTPBackend:
    """Client for the JSON-over-HTTP generation protocol.

    POSTs {"input": ..., "params": {...}} to the base URL and expects
    {"output": ..., "token_count": ...} back. The bearer token, when the
    environment variable is set, rides in the Authorization header.
    Retriable failures (timeouts, 5xx) are retried up to ``retries`` extra
    times; the raised error reports the attempt count.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        retries: int = 2,
        token_env: str = BACKEND_TOKEN_ENV,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url
        self._timeout = timeout
        self._retries = retries
        self._token = os.environ.get(token_env)
        self._session = session or requests.Session()

    def complete(self, input_text: str, params: GenerationParams) -> BackendResult:
        payload = {"input": input_text, "params": params.to_dict()}
        headers = {}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        attempts = self._retries + 1
        last_error = "unknown"
        for attempt in range(1, attempts + 1):
            try:
                resp = self._session.post(
                    self.base_url, json=payload, headers=headers, timeout=self._timeout
                )
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                log.warning("backend attempt %d/%d: %s", attempt, attempts, last_error)
                continue
            if resp.status_code == 200:
                try:
                    obj = resp.json()
                    return BackendResult(output=obj["output"], token_count=int(obj["token_count"]))
                except (ValueError, KeyError, TypeError) as exc:
                    raise BackendError(
                        f"malformed backend response: {exc}", attempts=attempt
                    ) from exc
            last_error = f"HTTP {resp.status_code}"
            if resp.status_code < 500:
                raise BackendError(
                    f"backend rejected the request: {last_error}", attempts=attempt
                )
            log.warning("backend attempt %d/%d: %s", attempt, attempts, last_error)
        raise BackendError(
            f"backend unreachable after {attempts} attempts: {last_error}", attempts=attempts
        )


def generate(
    backend: GenerationBackend, input_text: str, params: GenerationParams | None = None
) -> str:
    """One backend call with the default generation parameters unless told
    otherwise."""
    return backend.complete(input_text, params or GenerationParams()).output


def _read_checkpoint(path: Path) -> dict[str, float]:
    scores: dict[str, float] = {}
    if not path.exists():
        return scores
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                scores[obj["claim_id"]] = float(obj["mean_score"])
    return scores


def select_few_shot_examples(
    train: list[ClaimRecord],
    backend: GenerationBackend,
    tpl: PromptTemplate,
    params: GenerationParams | None = None,
    checkpoint_path: str | Path | None = None,
) -> list[InContextExample]:
    """Pick the 3 training records that work best as in-context examples.

    Every candidate is tried as the single example of a one-shot prompt
    against every other training record; outputs are scored against that
    record's target query by Levenshtein similarity ratio and averaged.
    The top 3 mean scores win, ties going to the lexicographically smaller
    claim_id. A candidate whose backend calls fail is excluded with a
    warning. Progress is checkpointed per candidate so interrupted runs
    resume instead of repaying the O(n^2) backend calls.
    """
    if len(train) < 4:
        raise ValueError(f"need at least 4 training records, got {len(train)}")
    params = params or GenerationParams()
    by_id = {r.claim_id: r for r in train}
    checkpoint = Path(checkpoint_path) if checkpoint_path else None
    scores = _read_checkpoint(checkpoint) if checkpoint else {}
    scores = {cid: s for cid, s in scores.items() if cid in by_id}

    for candidate in train:
        if candidate.claim_id in scores:
            continue
        example = InContextExample(
            claim_text=candidate.claim_text,
            target_query=candidate.target_query,
            source_claim_id=candidate.claim_id,
        )
        total = 0.0
        count = 0
        try:
            for other in train:
                if other.claim_id == candidate.claim_id:
                    continue
                prompt = render_few_shot(tpl, [example], other.claim_text)
                output = postprocess(generate(backend, prompt, params), tpl)
                total += levenshtein_ratio(output, other.target_query)
                count += 1
        except BackendError as exc:
            log.warning("excluding candidate %s: %s", candidate.claim_id, exc)
            continue
        scores[candidate.claim_id] = total / count
        if checkpoint:
            with open(checkpoint, "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps({"claim_id": candidate.claim_id, "mean_score": total / count})
                    + "\n"
                )

    if len(scores) < 3:
        raise BackendError(f"only {len(scores)} candidates could be scored, need 3")
    best = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:3]
    return [
        InContextExample(
            claim_text=by_id[cid].claim_text,
            target_query=by_id[cid].target_query,
            source_claim_id=cid,
        )
        for cid, _ in best
    ]
