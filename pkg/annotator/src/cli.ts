#!/usr/bin/env node
/** CLI: annotate --in claims.jsonl --out annotations.jsonl [--model <name>] */

import { parseArgs } from "node:util";

import { annotateFile } from "./annotate";
import { DEFAULT_MODEL } from "./pipeline";

const USAGE = `usage: annotate --in <claims.jsonl> --out <annotations.jsonl> [--model <name>]

Reads a claims JSONL file and writes one annotation line per claim
(entity, noun-phrase, and token spans with code-point offsets).
Default model: ${DEFAULT_MODEL}. Exits non-zero on any schema violation.`;

export function main(argv: string[]): number {
  let values: { in?: string; out?: string; model?: string; help?: boolean };
  try {
    values = parseArgs({
      args: argv,
      options: {
        in: { type: "string" },
        out: { type: "string" },
        model: { type: "string" },
        help: { type: "boolean", short: "h" },
      },
      allowPositionals: false,
    }).values;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    console.error(USAGE);
    return 2;
  }
  if (values.help) {
    console.log(USAGE);
    return 0;
  }
  if (!values.in || !values.out) {
    console.error(USAGE);
    return 2;
  }
  try {
    const count = annotateFile({ input: values.in, output: values.out, model: values.model });
    console.log(`annotated ${count} claims -> ${values.out}`);
    return 0;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
