/**
 * IRR dashboard model: completion counts plus the per-criterion reliability
 * estimates fetched from /summary/irr.
 *
 * The rows keep the raw numbers exactly as the service reported them (the
 * same code path the offline statistics command uses); formatting to a fixed
 * number of decimals happens only at render time.
 */

import type { ReliabilityRow, ServiceClient } from "./api";

export const CRITERIA = ["c1", "c2", "c3"] as const;
export type Criterion = (typeof CRITERIA)[number];

export interface CriterionRow extends ReliabilityRow {
  criterion: Criterion;
}

export interface DashboardModel {
  completedUnits: number;
  totalUnits: number;
  rows: CriterionRow[];
  /** Present when reliability is not yet computable (e.g. no completed units). */
  message?: string;
}

export async function loadDashboard(client: ServiceClient): Promise<DashboardModel> {
  const summary = await client.irrSummary();
  const rows: CriterionRow[] = [];
  for (const criterion of CRITERIA) {
    const estimate = summary.criteria[criterion];
    if (estimate) rows.push({ criterion, ...estimate });
  }
  return {
    completedUnits: summary.completed_units,
    totalUnits: summary.total_units,
    rows,
    ...(summary.message !== undefined ? { message: summary.message } : {}),
  };
}

/** Fixed-decimal display; exact zero/one render without a long tail. */
export function formatNumber(value: number, digits = 3): string {
  if (Number.isInteger(value)) return value.toFixed(1);
  return value.toFixed(digits);
}

export function formatInterval(low: number, high: number, digits = 3): string {
  return `[${formatNumber(low, digits)}, ${formatNumber(high, digits)}]`;
}
