/** Offset bookkeeping: JS strings index UTF-16 code units, but the
 * annotation wire format counts Unicode code points. */

/**
 * Map every UTF-16 index of `text` (inclusive of the end position) to the
 * number of code points before it.
 */
export function codePointIndexTable(text: string): number[] {
  const table = new Array<number>(text.length + 1);
  let codePoints = 0;
  let unit = 0;
  for (const ch of text) {
    for (let i = 0; i < ch.length; i++) {
      table[unit + i] = codePoints;
    }
    unit += ch.length;
    codePoints += 1;
  }
  table[unit] = codePoints;
  return table;
}

/** Slice `text` by code-point offsets (what the wire format promises). */
export function codePointSlice(text: string, start: number, end: number): string {
  return Array.from(text).slice(start, end).join("");
}
