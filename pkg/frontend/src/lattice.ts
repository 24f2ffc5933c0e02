/** Host-side mirror of the canonical pair layout, for building test inputs.
 *
 * Pairs (subset, alternative) are ordered by ascending subset bitmask, then
 * ascending alternative; the pair count is n * 2^(n-1).
 */

export interface Pair {
  subset: number;
  alt: number;
}

export function pairCount(n: number): number {
  return n * 2 ** (n - 1);
}

export function enumeratePairs(n: number): Pair[] {
  const pairs: Pair[] = [];
  for (let subset = 1; subset < 2 ** n; subset++) {
    for (let alt = 0; alt < n; alt++) {
      if ((subset >> alt) & 1) pairs.push({ subset, alt });
    }
  }
  return pairs;
}

/** Deterministic 32-bit generator (mulberry32) for reproducible fixtures. */
export function seededRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Random vector with one probability simplex per subset. */
export function randomChoiceVector(n: number, rng: () => number): number[] {
  const pairs = enumeratePairs(n);
  const raw = pairs.map(() => 0.05 + rng());
  const sums = new Map<number, number>();
  pairs.forEach((p, i) => {
    sums.set(p.subset, (sums.get(p.subset) ?? 0) + (raw[i] as number));
  });
  return pairs.map((p, i) => (raw[i] as number) / (sums.get(p.subset) as number));
}

/** Serialize a vector in the solver's text format (full-precision decimal). */
export function toVectorFile(n: number, values: number[]): string {
  const pairs = enumeratePairs(n);
  if (values.length !== pairs.length) {
    throw new RangeError(`expected ${pairs.length} values, got ${values.length}`);
  }
  const lines = [`n=${n}`, "format=decimal", "mask=full"];
  pairs.forEach((p, i) => {
    lines.push(`0x${p.subset.toString(16)} ${p.alt} ${formatFloat(values[i] as number)}`);
  });
  return lines.join("\n") + "\n";
}

/** Shortest round-trip decimal, matching the solver's serialization. */
export function formatFloat(x: number): string {
  if (Number.isInteger(x) && Math.abs(x) < 1e16) return `${x}.0`;
  return String(x);
}
