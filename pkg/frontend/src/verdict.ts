/**
 * Verdict drafting, client-side validation, and the double-submit gate.
 *
 * A revised verdict must carry the corrected binary mask file and a
 * no-change verdict must not; both rules are enforced before any request
 * leaves the browser. The gate coalesces concurrent submissions of the same
 * pair into one request, and the server's canonical-mask idempotency absorbs
 * retries of an already-recorded body, so a double-click or a timeout retry
 * can never append a second campaign event.
 */

import type { ApiClient } from "./api.js";
import { bytesToBase64 } from "./decode.js";
import type { QueueEntry, RevisionBody, RevisionReply } from "./types.js";

export interface VerdictDraft {
  volume: string;
  classId: number;
  verdict: "revised" | "no-change";
  maskBytes?: Uint8Array;
  annotator?: string;
}

/** Reasons the draft cannot be submitted; empty means valid. */
export function validateDraft(draft: VerdictDraft, row?: QueueEntry): string[] {
  const reasons: string[] = [];
  if (draft.verdict === "revised" && !draft.maskBytes?.length) {
    reasons.push("a revised verdict requires the corrected mask file");
  }
  if (draft.verdict === "no-change" && draft.maskBytes?.length) {
    reasons.push("a no-change verdict must not attach a mask");
  }
  if (row && !row.selected) {
    reasons.push("this pair is not selected in the open iteration");
  }
  if (row?.resolved) {
    reasons.push("this pair already has a verdict this iteration");
  }
  return reasons;
}

export function buildRevisionBody(draft: VerdictDraft): RevisionBody {
  const body: RevisionBody = {
    volume: draft.volume,
    class: draft.classId,
    verdict: draft.verdict,
  };
  if (draft.maskBytes?.length) {
    body.mask_b64 = bytesToBase64(draft.maskBytes);
  }
  if (draft.annotator) {
    body.annotator = draft.annotator;
  }
  return body;
}

export class ValidationError extends Error {
  constructor(readonly reasons: string[]) {
    super(reasons.join("; "));
  }
}

/** Coalesces concurrent submissions per key into a single in-flight promise. */
export class SubmitGate {
  private readonly inFlight = new Map<string, Promise<RevisionReply>>();

  run(key: string, start: () => Promise<RevisionReply>): Promise<RevisionReply> {
    const pending = this.inFlight.get(key);
    if (pending) {
      return pending;
    }
    const promise = start().finally(() => this.inFlight.delete(key));
    this.inFlight.set(key, promise);
    return promise;
  }
}

/**
 * The one submission path the UI uses: validate, encode, gate, POST.
 * Invalid drafts throw ValidationError without touching the network.
 */
export function submitVerdict(
  api: ApiClient,
  gate: SubmitGate,
  campaignId: string,
  draft: VerdictDraft,
  row?: QueueEntry,
): Promise<RevisionReply> {
  const reasons = validateDraft(draft, row);
  if (reasons.length) {
    return Promise.reject(new ValidationError(reasons));
  }
  const body = buildRevisionBody(draft);
  const key = `${campaignId}/${draft.volume}/${draft.classId}`;
  return gate.run(key, () => api.submitRevision(campaignId, body));
}
