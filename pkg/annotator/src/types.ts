/** Wire types shared with the evaluation toolkit's annotation reader. */

/** One span of a claim; offsets count Unicode code points, end exclusive. */
export interface Span {
  start: number;
  end: number;
  text: string;
  label: string;
}

/** One output line: all spans extracted from a single claim sentence. */
export interface Annotation {
  claim_id: string;
  entities: Span[];
  noun_phrases: Span[];
  tokens: Span[];
}

/** One input line of the claims JSONL file. */
export interface Claim {
  claim_id: string;
  article_id: string;
  claim_text: string;
  target_query: string;
  target_url: string;
  context_sentences?: string[];
}

export class SchemaError extends Error {}
