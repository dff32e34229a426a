/**
 * Typed client for the /v1 HTTP API. This module is the only place the UI
 * talks to the network; everything above it works on returned values, so a
 * hard refresh can always rebuild the view from these calls alone.
 */

import type {
  CampaignSnapshot,
  CampaignsDoc,
  ErrorEnvelope,
  PriorityDoc,
  RegistryDoc,
  RevisionBody,
  RevisionReply,
  SlicePayload,
  VolumesDoc,
} from "./types.js";

/** A non-2xx response, carrying the server's typed reason verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly type: string,
    readonly detail: string,
  ) {
    super(`${type}: ${detail}`);
  }
}

function isEnvelope(doc: unknown): doc is ErrorEnvelope {
  return (
    typeof doc === "object" &&
    doc !== null &&
    typeof (doc as ErrorEnvelope).error === "object" &&
    (doc as ErrorEnvelope).error !== null &&
    typeof (doc as ErrorEnvelope).error.type === "string"
  );
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private token: string | null = null,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  setToken(token: string | null): void {
    this.token = token;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const headers = new Headers(init?.headers);
    headers.set("Accept", "application/json");
    if (this.token) {
      headers.set("Authorization", `Bearer ${this.token}`);
    }
    const response = await this.fetchImpl(this.baseUrl + path, { ...init, headers });
    let doc: unknown = null;
    try {
      doc = await response.json();
    } catch {
      // non-JSON body; fall through to the status check
    }
    if (!response.ok) {
      if (isEnvelope(doc)) {
        throw new ApiError(response.status, doc.error.type, doc.error.detail);
      }
      throw new ApiError(response.status, "http-error", `unexpected status ${response.status}`);
    }
    return doc as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  registry(): Promise<RegistryDoc> {
    return this.request("/v1/registry");
  }

  campaigns(): Promise<CampaignsDoc> {
    return this.request("/v1/campaigns");
  }

  campaignState(campaignId: string): Promise<CampaignSnapshot> {
    return this.request(`/v1/campaigns/${encodeURIComponent(campaignId)}/state`);
  }

  volumes(): Promise<VolumesDoc> {
    return this.request("/v1/volumes");
  }

  priority(campaignId: string, classId: number, includeResolved = false): Promise<PriorityDoc> {
    const extra = includeResolved ? "&include_resolved=true" : "";
    return this.request(
      `/v1/campaigns/${encodeURIComponent(campaignId)}/priority?class=${classId}${extra}`,
    );
  }

  metrics(campaignId: string): Promise<Record<string, unknown>> {
    return this.request(`/v1/campaigns/${encodeURIComponent(campaignId)}/metrics`);
  }

  slice(
    volumeId: string,
    axis: number,
    index: number,
    layers: string[],
    classId: number | null,
  ): Promise<SlicePayload> {
    const cls = classId === null ? "" : `&class=${classId}`;
    return this.request(
      `/v1/volumes/${encodeURIComponent(volumeId)}/slices/${axis}/${index}` +
        `?layers=${layers.join(",")}${cls}`,
    );
  }

  submitRevision(campaignId: string, body: RevisionBody): Promise<RevisionReply> {
    return this.post(`/v1/campaigns/${encodeURIComponent(campaignId)}/revisions`, body);
  }
}
