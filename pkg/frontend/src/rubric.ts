/**
 * Client-side mirror of the rubric's derived scores, for live display in the
 * rating form.  Display only: the server recomputes C1 and C3 from the
 * submitted subscores/flags and stays authoritative.
 *
 * Parity with the server is pinned by the shared test vectors the backend
 * exports (`diagrambench vectors`): all 125 subscore triples and all 128
 * checklist combinations.  To keep that parity exact, C1 is computed in
 * integer tenths (0.6/0.3/0.1 weights -> 6/3/1) so .5 ties are hit exactly
 * rather than approximated by binary floats.
 */

export const SCORE_MIN = 1;
export const SCORE_MAX = 5;
export const LAYOUT_FLAG_COUNT = 7;

/** Names and one-line descriptions of the seven layout-issue flags. */
export const LAYOUT_FLAG_LABELS: readonly string[] = [
  "k1 — line crossings or excessive bends",
  "k2 — obscured elements",
  "k3 — elements incomprehensible (color, size, or shape)",
  "k4 — asymmetry",
  "k5 — vertical or horizontal misalignment",
  "k6 — excessive width",
  "k7 — dishomogeneous appearance",
];

export const HALLUCINATION_TAGS = ["h_fact", "h_ae", "h_c", "h_log"] as const;
export type HallucinationTag = (typeof HALLUCINATION_TAGS)[number];

export const HALLUCINATION_TAG_LABELS: Record<HallucinationTag, string> = {
  h_fact: "factual error",
  h_ae: "added entity",
  h_c: "added connection",
  h_log: "broken logic",
};

export function isScore(value: number): boolean {
  return Number.isInteger(value) && value >= SCORE_MIN && value <= SCORE_MAX;
}

function checkScore(name: string, value: number): void {
  if (!isScore(value)) {
    throw new RangeError(`${name} must be an integer in 1..5, got ${value}`);
  }
}

/**
 * Round a non-negative value given in integer tenths; an exact .5 tie goes
 * to the odd neighbor (one of the two candidates is always odd).
 */
export function roundHalfToOddTenths(tenths: number): number {
  if (!Number.isInteger(tenths) || tenths < 0) {
    throw new RangeError(`expected non-negative integer tenths, got ${tenths}`);
  }
  const whole = Math.floor(tenths / 10);
  const remainder = tenths % 10;
  if (remainder < 5) return whole;
  if (remainder > 5) return whole + 1;
  return whole % 2 === 1 ? whole : whole + 1;
}

/** Weighted logical-organization score: 0.6*L1 + 0.3*L2 + 0.1*L3, rounded half to odd. */
export function computeC1(l1: number, l2: number, l3: number): number {
  checkScore("L1", l1);
  checkScore("L2", l2);
  checkScore("L3", l3);
  return roundHalfToOddTenths(6 * l1 + 3 * l2 + l3);
}

/** Layout grade from the number of ticked issue flags: 0 -> 5, 1-2 -> 4, 3 -> 3, 4 -> 2, 5+ -> 1. */
export function computeC3(flags: readonly boolean[]): number {
  if (flags.length !== LAYOUT_FLAG_COUNT) {
    throw new RangeError(`expected ${LAYOUT_FLAG_COUNT} layout flags, got ${flags.length}`);
  }
  const count = flags.reduce((n, flag) => n + (flag ? 1 : 0), 0);
  if (count === 0) return 5;
  if (count <= 2) return 4;
  if (count === 3) return 3;
  if (count === 4) return 2;
  return 1;
}

/** Mean of integer scores with .5 ties rounding up; mirrors the server's rater aggregation. */
export function roundHalfUpMean(values: readonly number[]): number {
  if (values.length === 0) throw new RangeError("mean of empty list");
  const total = values.reduce((a, b) => a + b, 0);
  const floor = Math.floor(total / values.length);
  const remainder = total - floor * values.length;
  return floor + (2 * remainder >= values.length ? 1 : 0);
}

/** Element shapes of the shared parity vectors exported by the backend. */
export interface C1Vector {
  l1: number;
  l2: number;
  l3: number;
  c1: number;
}

export interface C3Vector {
  flags: boolean[];
  c3: number;
}

export interface SharedVectors {
  c1: C1Vector[];
  c3: C3Vector[];
}
