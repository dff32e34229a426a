/**
 * The review queue model. Rows are kept exactly as the server returned
 * them: the priority order is campaign state, and reordering client-side
 * would silently disagree with what other surfaces show.
 *
 * Status changes render optimistically; the previous rows array is returned
 * untouched so a server rejection can roll the view straight back.
 */

import type { ApiClient } from "./api.js";
import type { QueueEntry } from "./types.js";

export interface QueueModel {
  campaign: string;
  iteration: number;
  iterationOpen: boolean;
  classId: number;
  rows: QueueEntry[];
}

export async function loadQueue(
  api: ApiClient,
  campaignId: string,
  classId: number,
  includeResolved = true,
): Promise<QueueModel> {
  const doc = await api.priority(campaignId, classId, includeResolved);
  return {
    campaign: doc.campaign,
    iteration: doc.iteration,
    iterationOpen: doc.iteration_open,
    classId,
    rows: doc.classes[String(classId)] ?? [],
  };
}

export function statusForVerdict(verdict: "revised" | "no-change"): string {
  return verdict === "revised" ? "revised" : "accepted-no-change";
}

/**
 * New rows array with one row's status replaced (and marked resolved).
 * The input array is not mutated; keep it around as the rollback value.
 */
export function withRowStatus(rows: QueueEntry[], volume: string, status: string): QueueEntry[] {
  return rows.map((row) =>
    row.volume === volume ? { ...row, status, resolved: true } : row,
  );
}

/** Badge text for a row, shown beside the attention size. */
export function rowBadge(row: QueueEntry): string {
  if (row.resolved) {
    return row.status;
  }
  return row.selected ? "selected" : row.status;
}
