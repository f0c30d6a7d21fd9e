/**
 * The NLP pipeline: wink-nlp (statistical sentence boundaries and
 * tokenisation, model shipped as a package) plus compromise (named-entity
 * and noun-phrase spans with character offsets).
 *
 * All offsets in this module are UTF-16 code units; annotate.ts converts
 * them to code points at the wire boundary.
 */

import nlp from "compromise";
import winkNLP, { WinkMethods } from "wink-nlp";
import winkModel from "wink-eng-lite-web-model";

export const DEFAULT_MODEL = "wink-eng-lite-web-model";

export interface Pipeline {
  modelName: string;
  wink: WinkMethods;
}

/** Raw span in UTF-16 units, before code-point conversion. */
export interface RawSpan {
  start: number;
  end: number;
  text: string;
  label: string;
}

export function loadPipeline(modelName: string = DEFAULT_MODEL): Pipeline {
  if (modelName !== DEFAULT_MODEL) {
    throw new Error(`model not available locally: ${modelName}`);
  }
  return { modelName, wink: winkNLP(winkModel) };
}

/** Sentences as exact substrings of `text`, located left to right. */
export function sentenceSpans(pipeline: Pipeline, text: string): RawSpan[] {
  if (!text.trim()) {
    return [];
  }
  const sentences = pipeline.wink.readDoc(text).sentences().out();
  const spans: RawSpan[] = [];
  let cursor = 0;
  for (const sentence of sentences) {
    if (!sentence) {
      continue;
    }
    const start = text.indexOf(sentence, cursor);
    if (start < 0) {
      // Should not happen with wink's verbatim sentences; fail safe by
      // treating the rest of the text as one sentence.
      const rest = text.slice(cursor).trim();
      if (rest) {
        const restStart = text.indexOf(rest, cursor);
        spans.push({ start: restStart, end: restStart + rest.length, text: rest, label: "" });
      }
      break;
    }
    spans.push({ start, end: start + sentence.length, text: sentence, label: "" });
    cursor = start + sentence.length;
  }
  return spans;
}

/** Sentence texts; concatenating them with the original inter-sentence
 * whitespace reconstructs the input. */
export function splitSentences(pipeline: Pipeline, text: string): string[] {
  return sentenceSpans(pipeline, text).map((s) => s.text);
}

/** Token spans from the wink tokenizer, located left to right. */
export function tokenSpans(pipeline: Pipeline, text: string): RawSpan[] {
  if (!text.trim()) {
    return [];
  }
  const values = pipeline.wink.readDoc(text).tokens().out();
  const spans: RawSpan[] = [];
  let cursor = 0;
  for (const value of values) {
    const start = text.indexOf(value, cursor);
    if (start < 0) {
      continue; // tokenizer normalised something; skip rather than misalign
    }
    spans.push({ start, end: start + value.length, text: value, label: "" });
    cursor = start + value.length;
  }
  return spans;
}

interface CompromiseHit {
  text: string;
  offset: { start: number; length: number };
}

/** Any compromise view: the concrete subclasses (Nouns, People, ...) only
 * need to expose json() here. */
interface JsonView {
  json(options: { offset: boolean }): CompromiseHit[];
}

function matches(view: JsonView, label: string): RawSpan[] {
  const hits = view.json({ offset: true });
  return hits
    .filter((h) => h.offset && h.text)
    .map((h) => ({
      start: h.offset.start,
      end: h.offset.start + h.offset.length,
      text: h.text,
      label,
    }));
}

const TRAILING_JUNK = /[\s.,!?;:'"”’)\]]+$/;
const LEADING_JUNK = /^[\s'"“‘(\[]+/;
const POSSESSIVE = /(?:'s|’s)$/;

/** Clamp a compromise hit back onto the text and trim edge punctuation.
 * Returns null when nothing survives trimming. */
function tidy(span: RawSpan, text: string, stripPossessive: boolean): RawSpan | null {
  let { start, end } = span;
  if (start < 0 || end > text.length || start >= end) {
    return null;
  }
  let surface = text.slice(start, end);
  const lead = surface.match(LEADING_JUNK);
  if (lead) {
    start += lead[0].length;
    surface = surface.slice(lead[0].length);
  }
  if (stripPossessive) {
    const poss = surface.match(POSSESSIVE);
    if (poss) {
      end -= poss[0].length;
      surface = surface.slice(0, -poss[0].length);
    }
  }
  const trail = surface.match(TRAILING_JUNK);
  if (trail) {
    end -= trail[0].length;
    surface = surface.slice(0, -trail[0].length);
  }
  if (!surface) {
    return null;
  }
  return { start, end, text: surface, label: span.label };
}

/**
 * Named-entity spans: the pipeline's people, places, and organisations,
 * backed up by contiguous proper-noun runs. Overlaps resolve to the
 * earliest, longest, most specifically-labelled span, so the result is
 * sorted and non-overlapping.
 */
export function entitySpans(text: string): RawSpan[] {
  if (!text.trim()) {
    return [];
  }
  const doc = nlp(text);
  const priority: Record<string, number> = { PERSON: 0, GPE: 1, ORG: 2, ENT: 3 };
  const candidates: RawSpan[] = [
    ...matches(doc.people(), "PERSON"),
    ...matches(doc.places(), "GPE"),
    ...matches(doc.organizations(), "ORG"),
    ...matches(doc.match("#ProperNoun+"), "ENT"),
  ]
    .map((span) => tidy(span, text, true))
    .filter((span): span is RawSpan => span !== null);
  candidates.sort(
    (a, b) =>
      a.start - b.start ||
      b.end - b.start - (a.end - a.start) ||
      priority[a.label] - priority[b.label]
  );
  const kept: RawSpan[] = [];
  for (const span of candidates) {
    const clashes = kept.some((k) => span.start < k.end && k.start < span.end);
    if (!clashes) {
      kept.push(span);
    }
  }
  return kept.sort((a, b) => a.start - b.start);
}

/** Base noun-chunk spans, sorted; exact duplicates dropped. */
export function nounPhraseSpans(text: string): RawSpan[] {
  if (!text.trim()) {
    return [];
  }
  const doc = nlp(text);
  const seen = new Set<string>();
  const spans: RawSpan[] = [];
  for (const raw of matches(doc.nouns(), "")) {
    const span = tidy(raw, text, false);
    if (!span) {
      continue;
    }
    const key = `${span.start}:${span.end}`;
    if (seen.has(key)) {
      continue;
    }
    seen.add(key);
    spans.push(span);
  }
  return spans.sort((a, b) => a.start - b.start || a.end - b.end);
}
