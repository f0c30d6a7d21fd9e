#!/usr/bin/env python3
"""Regenerate the synthetic fixture corpus under fixtures/.

Builds 20 claims across 8 articles with annotations, then dry-runs the
experiment (stub backend, no engine) to learn every query text each method
produces, and scripts the mock engine so that roughly 60% of queries find
their target URL at a stable pseudo-random rank. Committed outputs:
claims.jsonl, annotations.jsonl, mock_engine.json, config.json,
error_labels.jsonl.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from eqk import rulegen
from eqk.corpus import ClaimRecord, Dataset, write_dataset
from eqk.harness import ExperimentConfig, run_experiment
from eqk.rulegen import LinguisticAnnotation, Span, write_annotations

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

# claim_id, article_id, claim_text, target_query, target_url, entities, noun phrases
CLAIMS = [
    ("c01", "a1",
     "The Arlington Gate Bridge opened to traffic in March 1987 after four years of construction.",
     "arlington gate bridge opening date",
     "https://en.wikipedia.org/wiki/Arlington_Gate_Bridge",
     ["Arlington Gate Bridge", "March 1987"],
     ["The Arlington Gate Bridge", "traffic", "March 1987", "four years", "construction"]),
    ("c02", "a1",
     "Mayor Teresa Quill said the city council approved a budget of 48 million pounds for transit repairs.",
     "teresa quill transit budget",
     "https://example.org/news/quill-budget",
     ["Teresa Quill"],
     ["Mayor Teresa Quill", "the city council", "a budget", "48 million pounds", "transit repairs"]),
    ("c03", "a1",
     "The Harwick tunnel closure diverted nearly 12,000 vehicles a day onto Route 9.",
     "harwick tunnel closure traffic",
     "https://example.org/traffic/harwick-tunnel",
     ["Harwick", "Route 9"],
     ["The Harwick tunnel closure", "nearly 12,000 vehicles", "a day", "Route 9"]),
    ("c04", "a2",
     "The Calder Institute raised its growth forecast for Veldonia from 2.1 per cent to 2.8 per cent.",
     "calder institute veldonia growth forecast",
     "https://calder-institute.example.org/outlook/2021",
     ["Calder Institute", "Veldonia"],
     ["The Calder Institute", "its growth forecast", "Veldonia", "2.1 per cent", "2.8 per cent"]),
    ("c05", "a2",
     "Unemployment in Veldonia fell to 4.3 per cent in May, the lowest level since 2008.",
     "veldonia unemployment may 2021",
     "https://stats.example.gov/veldonia/unemployment",
     ["Veldonia", "May", "2008"],
     ["Unemployment", "Veldonia", "4.3 per cent", "May", "the lowest level"]),
    ("c06", "a2",
     "The central bank of Veldonia held its base interest rate at 0.75 per cent for a sixth consecutive month.",
     "veldonia base rate decision",
     "https://bank.example.gov/veldonia/rates",
     ["Veldonia"],
     ["The central bank", "Veldonia", "its base interest rate", "0.75 per cent",
      "a sixth consecutive month"]),
    ("c07", "a3",
     "The Meridian-2 satellite operates at an altitude of 19,500 kilometres above the equator.",
     "meridian-2 orbital altitude",
     "https://en.wikipedia.org/wiki/Meridian-2",
     ["Meridian-2"],
     ["The Meridian-2 satellite", "an altitude", "19,500 kilometres", "the equator"]),
    ("c08", "a3",
     "Dr Elena Voss led the team that sequenced the complete genome of the alpine marmot in 2019.",
     "elena voss alpine marmot genome",
     "https://example.org/journal/marmot-genome",
     ["Elena Voss", "2019"],
     ["Dr Elena Voss", "the team", "the complete genome", "the alpine marmot"]),
    ("c09", "a3",
     "The Kestrel Observatory recorded 312 clear nights last year, a record for any site in the northern hemisphere.",
     "kestrel observatory clear nights record",
     "https://kestrel.example.org/annual-report",
     ["Kestrel Observatory"],
     ["The Kestrel Observatory", "312 clear nights", "last year", "a record",
      "the northern hemisphere"]),
    ("c10", "a4",
     "Nadia Ferro won her third consecutive Meadowvale Marathon on Sunday, finishing in 2 hours 21 minutes.",
     "nadia ferro meadowvale marathon",
     "https://example.org/sport/ferro-marathon",
     ["Nadia Ferro", "Meadowvale Marathon", "Sunday"],
     ["Nadia Ferro", "her third consecutive Meadowvale Marathon", "Sunday",
      "2 hours 21 minutes"]),
    ("c11", "a4",
     "The Bramley Film Festival sold a record 84,000 tickets across its ten-day run.",
     "bramley film festival ticket record",
     "https://bramleyfest.example.org/2021",
     ["Bramley Film Festival"],
     ["The Bramley Film Festival", "a record 84,000 tickets", "its ten-day run"]),
    ("c12", "a4",
     "Halston United paid 30 million euros for striker Joao Pires, the club's biggest transfer.",
     "halston united joao pires transfer fee",
     "https://example.org/football/pires-transfer",
     ["Halston United", "Joao Pires"],
     ["Halston United", "30 million euros", "striker Joao Pires", "the club's biggest transfer"]),
    ("c13", "a5",
     "The Loxley vaccine reduced hospital admissions by 87 per cent in adults over 65.",
     "loxley vaccine hospital admissions",
     "https://health.example.gov/loxley-study",
     ["Loxley"],
     ["The Loxley vaccine", "hospital admissions", "87 per cent", "adults"]),
    ("c14", "a5",
     "Ambulance response times in Carden County averaged 11 minutes in April.",
     "carden county ambulance response times",
     "https://health.example.gov/carden/ambulance",
     ["Carden County", "April"],
     ["Ambulance response times", "Carden County", "11 minutes", "April"]),
    ("c15", "a6",
     "Pinewood Robotics shipped its one millionth warehouse robot from the Dunmore plant.",
     "pinewood robotics millionth robot",
     "https://pinewood.example.com/press/millionth",
     ["Pinewood Robotics", "Dunmore"],
     ["Pinewood Robotics", "its one millionth warehouse robot", "the Dunmore plant"]),
    ("c16", "a6",
     "The Corvid browser held 12 per cent of the desktop market in June, according to StatWatch.",
     "corvid browser market share june",
     "https://statwatch.example.com/browsers/june",
     ["Corvid", "June", "StatWatch"],
     ["The Corvid browser", "12 per cent", "the desktop market", "June", "StatWatch"]),
    ("c17", "a7",
     "The Silverbeck estuary restoration created 140 hectares of new salt marsh.",
     "silverbeck estuary salt marsh restoration",
     "https://example.org/environment/silverbeck",
     ["Silverbeck"],
     ["The Silverbeck estuary restoration", "140 hectares", "new salt marsh"]),
    ("c18", "a7",
     "Greenhouse gas emissions in Veldonia fell 3.2 per cent in 2020, the sharpest drop on record.",
     "veldonia emissions 2020",
     "https://stats.example.gov/veldonia/emissions",
     ["Veldonia", "2020"],
     ["Greenhouse gas emissions", "Veldonia", "3.2 per cent", "the sharpest drop"]),
    ("c19", "a8",
     "The Orchard Street library reopened after a 9 million pound refurbishment lasting two years.",
     "orchard street library refurbishment",
     "https://example.org/city/orchard-library",
     ["Orchard Street"],
     ["The Orchard Street library", "a 9 million pound refurbishment", "two years"]),
    ("c20", "a8",
     "Ferry crossings between Port Ellen and Marwick were cancelled for a third day because of storm Freya.",
     "port ellen marwick ferry storm",
     "https://example.org/travel/ferry-freya",
     ["Port Ellen", "Marwick", "Freya"],
     ["Ferry crossings", "Port Ellen", "Marwick", "a third day", "storm Freya"]),
]

CONFIG = {
    "dataset": "claims.jsonl",
    "annotations": "annotations.jsonl",
    "methods": [
        {"method": "verbatim"},
        {"method": "named_entities"},
        {"method": "noun_phrases"},
        {"method": "zero_shot", "templates": ["template-03", "template-05"]},
        {"method": "few_shot_3", "templates": ["template-05"]},
        {"method": "fine_tuned", "templates": ["no-prompt"]},
    ],
    "folds": 4,
    "seed": 7,
    "engine": {"kind": "mock", "script": "mock_engine.json"},
    "executions": 3,
    "top_k": 10,
    "backend": {"kind": "stub"},
    "generation": {
        "num_beams": 10,
        "forbid_repeated_bigrams": True,
        "early_stopping": True,
        "max_new_tokens": 16,
    },
    "ensembles": [
        {"methods": ["named_entities", "fine_tuned"], "priorities": [2, 1]},
        {"methods": ["verbatim", "named_entities", "noun_phrases"], "priorities": [3, 1, 2]},
    ],
    "error_labels": "error_labels.jsonl",
    "trainer_config": {
        "optimizer": "adafactor",
        "learning_rate": 1e-3,
        "epochs": 10,
        "max_input_length": 512,
    },
}

ERROR_LABELS = [
    {"claim_id": "c02", "category": "missing_key_term", "note": "dropped the budget figure"},
    {"claim_id": "c05", "category": "needs_external_context", "note": "year only in article title"},
    {"claim_id": "c12", "category": "wrong_entity", "note": "focused on the club, not the player"},
    {"claim_id": "c16", "category": "hallucination", "note": "output unrelated to the claim"},
    {"claim_id": "c19", "category": "recreated_claim", "note": "verbatim prefix of the claim"},
    {"claim_id": "c03", "category": "query_looks_good", "note": "plausible query, page moved"},
]


def find_spans(text: str, fragments: list[str], label: str = "") -> list[Span]:
    spans = []
    for fragment in fragments:
        start = text.find(fragment)
        if start < 0:
            raise SystemExit(f"fragment {fragment!r} not in {text!r}")
        spans.append(Span(start=start, end=start + len(fragment), text=fragment, label=label))
    return sorted(spans, key=lambda s: s.start)


def token_spans(text: str) -> list[Span]:
    spans = []
    pos = 0
    for token in text.split():
        start = text.index(token, pos)
        spans.append(Span(start=start, end=start + len(token), text=token))
        pos = start + len(token)
    return spans


def build_corpus() -> tuple[Dataset, list[LinguisticAnnotation]]:
    records = []
    annotations = []
    for claim_id, article_id, text, target_query, target_url, ents, nps in CLAIMS:
        records.append(ClaimRecord(claim_id, article_id, text, target_query, target_url))
        annotations.append(
            LinguisticAnnotation(
                claim_id=claim_id,
                entities=find_spans(text, ents, label="ENT"),
                noun_phrases=find_spans(text, nps),
                tokens=token_spans(text),
            )
        )
    return Dataset(records=records), annotations


def collect_queries() -> list[tuple[str, str]]:
    """Dry-run the experiment (no engine) and pull every generated query."""
    config_obj = {k: v for k, v in CONFIG.items() if k not in ("engine", "error_labels")}
    config_obj["dataset"] = str(FIXTURES / "claims.jsonl")
    config_obj["annotations"] = str(FIXTURES / "annotations.jsonl")
    report = run_experiment(ExperimentConfig.from_dict(config_obj))
    pairs = []
    for row in report.samples:
        if row["generated"]:
            pairs.append((row["claim_id"], row["generated"]))
    return pairs


def script_results(pairs: list[tuple[str, str]], targets: dict[str, str]) -> dict:
    """Assign each distinct query a stable pseudo-random result script."""
    results: dict[str, object] = {}
    for claim_id, query in pairs:
        if query in results:
            continue
        digest = hashlib.sha1(f"{claim_id}|{query}".encode()).hexdigest()
        h = int(digest, 16)
        target = targets[claim_id]
        distractors = [
            f"https://distractor.example.net/{digest[:8]}",
            f"https://distractor.example.net/{digest[8:16]}",
            f"https://distractor.example.net/{digest[16:24]}",
        ]
        bucket = h % 10
        rank = 1 + (h // 10) % 4
        with_target = distractors[: rank - 1] + [target] + distractors[rank - 1 :]
        if bucket < 4:  # stable find: target at the same rank in all 3 calls
            results[query] = with_target
        elif bucket < 6:  # majority find: target drops out of the second call
            results[query] = [with_target, distractors, with_target]
        elif bucket == 6:  # found once: target only in the first call
            results[query] = [with_target, distractors, distractors]
        else:  # never found
            results[query] = distractors
    return results


def main() -> None:
    FIXTURES.mkdir(exist_ok=True)
    dataset, annotations = build_corpus()
    write_dataset(dataset, FIXTURES / "claims.jsonl")
    write_annotations(annotations, FIXTURES / "annotations.jsonl")
    # validate the committed annotations against the claims
    rulegen.load_annotations(FIXTURES / "annotations.jsonl", dataset.by_id())

    pairs = collect_queries()
    targets = {r.claim_id: r.target_url for r in dataset.records}
    script = {"results": script_results(pairs, targets), "dropout": 0.0, "seed": 0}
    (FIXTURES / "mock_engine.json").write_text(
        json.dumps(script, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    )
    (FIXTURES / "config.json").write_text(
        json.dumps(CONFIG, indent=2, ensure_ascii=False) + "\n"
    )
    with open(FIXTURES / "error_labels.jsonl", "w", encoding="utf-8") as fh:
        for row in ERROR_LABELS:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
    print(f"claims: {len(dataset)}")
    print(f"distinct queries scripted: {len(script['results'])}")


if __name__ == "__main__":
    main()
