/**
 * In-flight state of the rating form.
 *
 * All setters are constrained: subscores must be integers in 1..5, flag
 * indices must address one of the seven checklist items.  Out-of-range
 * values are rejected at the state layer (the DOM uses fixed-option
 * selects, so both layers enforce the range), which makes an out-of-range
 * submission unrepresentable.  There is no persistence: the form lives in
 * memory only and the server's stored annotation is the source of truth.
 */

import type { HallucinationPayload, LayoutFlagsPayload, SubmissionPayload } from "./api";
import {
  HALLUCINATION_TAGS,
  LAYOUT_FLAG_COUNT,
  computeC1,
  computeC3,
  isScore,
  type HallucinationTag,
} from "./rubric";

export type SubscoreName = "l1" | "l2" | "l3" | "c2";

export const SUBSCORE_NAMES: readonly SubscoreName[] = ["l1", "l2", "l3", "c2"];

export class RatingForm {
  private subscores: Partial<Record<SubscoreName, number>> = {};
  private flags: boolean[] = new Array<boolean>(LAYOUT_FLAG_COUNT).fill(false);
  private tags: HallucinationPayload = { h_fact: false, h_ae: false, h_c: false, h_log: false };

  setSubscore(name: SubscoreName, value: number): void {
    if (!SUBSCORE_NAMES.includes(name)) {
      throw new RangeError(`unknown subscore ${String(name)}`);
    }
    if (!isScore(value)) {
      throw new RangeError(`${name} must be an integer in 1..5, got ${value}`);
    }
    this.subscores[name] = value;
  }

  getSubscore(name: SubscoreName): number | undefined {
    return this.subscores[name];
  }

  setFlag(index: number, on: boolean): void {
    if (!Number.isInteger(index) || index < 0 || index >= LAYOUT_FLAG_COUNT) {
      throw new RangeError(`flag index must be in 0..${LAYOUT_FLAG_COUNT - 1}, got ${index}`);
    }
    this.flags[index] = on;
  }

  getFlags(): readonly boolean[] {
    return [...this.flags];
  }

  setTag(tag: HallucinationTag, on: boolean): void {
    if (!HALLUCINATION_TAGS.includes(tag)) {
      throw new RangeError(`unknown hallucination tag ${String(tag)}`);
    }
    this.tags[tag] = on;
  }

  getTags(): HallucinationPayload {
    return { ...this.tags };
  }

  /** Live C1 for display; null until all three L subscores are entered. */
  get c1(): number | null {
    const { l1, l2, l3 } = this.subscores;
    if (l1 === undefined || l2 === undefined || l3 === undefined) return null;
    return computeC1(l1, l2, l3);
  }

  /** Live C3 for display; always defined (no flags ticked -> 5). */
  get c3(): number {
    return computeC3(this.flags);
  }

  get complete(): boolean {
    return SUBSCORE_NAMES.every((name) => this.subscores[name] !== undefined);
  }

  /** Build the submission body; throws unless every subscore is entered. */
  toPayload(): SubmissionPayload {
    if (!this.complete) {
      const missing = SUBSCORE_NAMES.filter((name) => this.subscores[name] === undefined);
      throw new Error(`form incomplete: missing ${missing.join(", ")}`);
    }
    const layout = Object.fromEntries(
      this.flags.map((on, i) => [`k${i + 1}`, on]),
    ) as unknown as LayoutFlagsPayload;
    return {
      l1: this.subscores.l1!,
      l2: this.subscores.l2!,
      l3: this.subscores.l3!,
      c2: this.subscores.c2!,
      layout_flags: layout,
      hallucination: { ...this.tags },
    };
  }

  reset(): void {
    this.subscores = {};
    this.flags = new Array<boolean>(LAYOUT_FLAG_COUNT).fill(false);
    this.tags = { h_fact: false, h_ae: false, h_c: false, h_log: false };
  }
}
