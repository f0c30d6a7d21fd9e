/** Batch annotation: claims JSONL in, annotation JSONL out. */

import * as fs from "node:fs";
import * as path from "node:path";

import { codePointIndexTable, codePointSlice } from "./offsets";
import {
  DEFAULT_MODEL,
  Pipeline,
  RawSpan,
  entitySpans,
  loadPipeline,
  nounPhraseSpans,
  tokenSpans,
} from "./pipeline";
import { Annotation, Claim, SchemaError, Span } from "./types";

export interface AnnotateRequest {
  input: string;
  output: string;
  model?: string;
}

function requireString(obj: Record<string, unknown>, key: string, where: string): string {
  const value = obj[key];
  if (typeof value !== "string" || value.length === 0) {
    throw new SchemaError(`${where}: field '${key}' must be a non-empty string`);
  }
  return value;
}

/** Parse and validate the claims file against the dataset schema. */
export function readClaims(inputPath: string): Claim[] {
  const raw = fs.readFileSync(inputPath, "utf-8");
  const claims: Claim[] = [];
  const seen = new Set<string>();
  raw.split("\n").forEach((line, index) => {
    if (!line.trim()) {
      return;
    }
    const where = `${inputPath}:${index + 1}`;
    let obj: Record<string, unknown>;
    try {
      obj = JSON.parse(line) as Record<string, unknown>;
    } catch (err) {
      throw new SchemaError(`${where}: malformed JSON: ${(err as Error).message}`);
    }
    const claim: Claim = {
      claim_id: requireString(obj, "claim_id", where),
      article_id: requireString(obj, "article_id", where),
      claim_text: requireString(obj, "claim_text", where),
      target_query: requireString(obj, "target_query", where),
      target_url: requireString(obj, "target_url", where),
    };
    try {
      const url = new URL(claim.target_url);
      if (!url.protocol || !url.host) {
        throw new Error("missing scheme or host");
      }
    } catch (err) {
      throw new SchemaError(`${where}: field 'target_url' is not an absolute URL`);
    }
    if (seen.has(claim.claim_id)) {
      throw new SchemaError(`${where}: duplicate claim_id '${claim.claim_id}'`);
    }
    seen.add(claim.claim_id);
    claims.push(claim);
  });
  return claims;
}

function toCodePoints(spans: RawSpan[], table: number[]): Span[] {
  return spans.map((s) => ({
    start: table[s.start],
    end: table[s.end],
    text: s.text,
    label: s.label,
  }));
}

/** Annotate one claim sentence. Offsets in the result count code points. */
export function annotateClaim(pipeline: Pipeline, claim: Claim): Annotation {
  const text = claim.claim_text;
  const table = codePointIndexTable(text);
  return {
    claim_id: claim.claim_id,
    entities: toCodePoints(entitySpans(text), table),
    noun_phrases: toCodePoints(nounPhraseSpans(text), table),
    tokens: toCodePoints(tokenSpans(pipeline, text), table),
  };
}

/** Re-check every invariant the downstream reader will enforce. */
export function validateAnnotation(annotation: Annotation, claimText: string): void {
  const groups: Array<[string, Span[]]> = [
    ["entities", annotation.entities],
    ["noun_phrases", annotation.noun_phrases],
    ["tokens", annotation.tokens],
  ];
  for (const [name, spans] of groups) {
    let previousStart = -1;
    for (const span of spans) {
      if (!(span.start >= 0 && span.start < span.end)) {
        throw new SchemaError(`${annotation.claim_id}: ${name} span has bad offsets`);
      }
      const actual = codePointSlice(claimText, span.start, span.end);
      if (actual !== span.text) {
        throw new SchemaError(
          `${annotation.claim_id}: ${name} span '${span.text}' != substring '${actual}'`
        );
      }
      if (span.start < previousStart) {
        throw new SchemaError(`${annotation.claim_id}: ${name} spans not sorted`);
      }
      previousStart = span.start;
    }
  }
  let previousEnd = -1;
  for (const span of annotation.entities) {
    if (span.start < previousEnd) {
      throw new SchemaError(`${annotation.claim_id}: entity spans overlap`);
    }
    previousEnd = span.end;
  }
}

/**
 * Annotate every claim in the input file and atomically write one
 * annotation JSONL line per claim. A per-claim pipeline failure degrades
 * to an empty annotation with a warning; schema violations throw.
 * Returns the number of claims annotated.
 */
export function annotateFile(request: AnnotateRequest): number {
  const pipeline = loadPipeline(request.model ?? DEFAULT_MODEL);
  const claims = readClaims(request.input);
  const lines: string[] = [];
  for (const claim of claims) {
    let annotation: Annotation;
    try {
      annotation = annotateClaim(pipeline, claim);
    } catch (err) {
      console.warn(
        `warning: pipeline failed on ${claim.claim_id} (${(err as Error).message}); ` +
          "writing an empty annotation"
      );
      annotation = { claim_id: claim.claim_id, entities: [], noun_phrases: [], tokens: [] };
    }
    validateAnnotation(annotation, claim.claim_text);
    lines.push(JSON.stringify(annotation));
  }
  const tmp = path.join(
    path.dirname(path.resolve(request.output)),
    `.${path.basename(request.output)}.tmp`
  );
  fs.writeFileSync(tmp, lines.map((l) => l + "\n").join(""), "utf-8");
  fs.renameSync(tmp, request.output);
  return claims.length;
}
