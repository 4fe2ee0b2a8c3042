/**
 * Typed client for the rating service's JSON API.
 *
 * Every route except /health requires `Authorization: Bearer <token>`; the
 * service maps the token to a rater identity.  Error responses carry a
 * `detail` string which is surfaced through ApiError.
 */

import type { HallucinationTag } from "./rubric";

/** Blinded diagram listing entry; method/model appear only when the study is unblinded. */
export interface DiagramSummary {
  diagram_id: string;
  difficulty: string;
  image_ref: string;
  has_image: boolean;
  completed: boolean;
  method?: string;
  model?: string;
}

export interface DiagramDetail extends DiagramSummary {
  source_text: string;
}

export interface AssignmentList {
  rater_id: string;
  pending: string[];
  submitted: string[];
}

export interface LayoutFlagsPayload {
  k1: boolean;
  k2: boolean;
  k3: boolean;
  k4: boolean;
  k5: boolean;
  k6: boolean;
  k7: boolean;
}

export type HallucinationPayload = Record<HallucinationTag, boolean>;

export interface SubmissionPayload {
  l1: number;
  l2: number;
  l3: number;
  c2: number;
  layout_flags: LayoutFlagsPayload;
  hallucination?: HallucinationPayload;
}

/** The server's stored annotation, with its authoritative derived scores. */
export interface StoredAnnotation {
  diagram_id: string;
  rater_id: string;
  l1: number;
  l2: number;
  l3: number;
  c1: number;
  c2: number;
  c3: number;
  layout_flags: LayoutFlagsPayload;
  hallucination: HallucinationPayload;
}

export interface ReliabilityRow {
  alpha_hat: number;
  ci_low: number;
  ci_high: number;
  w: number;
  p_value: number;
  n_units: number;
  n_raters: number;
}

export interface IrrSummary {
  completed_units: number;
  total_units: number;
  criteria: Record<string, ReliabilityRow>;
  message?: string;
}

export interface HealthStatus {
  status: string;
  diagrams: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

type FetchLike = typeof globalThis.fetch;

export class ServiceClient {
  private readonly fetchImpl: FetchLike;

  constructor(
    readonly baseUrl: string,
    private readonly token: string,
    fetchImpl?: FetchLike,
  ) {
    this.fetchImpl = fetchImpl ?? globalThis.fetch.bind(globalThis);
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = new Headers(init.headers);
    headers.set("Authorization", `Bearer ${this.token}`);
    if (init.body !== undefined) headers.set("Content-Type", "application/json");
    const response = await this.fetchImpl(this.baseUrl + path, { ...init, headers });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: unknown };
        if (typeof body.detail === "string") detail = body.detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return response;
  }

  private async json<T>(path: string, init: RequestInit = {}): Promise<T> {
    return (await this.request(path, init)).json() as Promise<T>;
  }

  async health(): Promise<HealthStatus> {
    // Unauthenticated liveness probe.
    const response = await this.fetchImpl(this.baseUrl + "/health");
    if (!response.ok) throw new ApiError(response.status, response.statusText);
    return response.json() as Promise<HealthStatus>;
  }

  listDiagrams(): Promise<DiagramSummary[]> {
    return this.json("/diagrams");
  }

  getDiagram(diagramId: string): Promise<DiagramDetail> {
    return this.json(`/diagrams/${encodeURIComponent(diagramId)}`);
  }

  imagePath(diagramId: string): string {
    return `${this.baseUrl}/diagrams/${encodeURIComponent(diagramId)}/image`;
  }

  async fetchImage(diagramId: string): Promise<ArrayBuffer> {
    const response = await this.request(`/diagrams/${encodeURIComponent(diagramId)}/image`);
    return response.arrayBuffer();
  }

  assignments(raterId: string): Promise<AssignmentList> {
    return this.json(`/assignments?rater=${encodeURIComponent(raterId)}`);
  }

  submitScores(diagramId: string, payload: SubmissionPayload): Promise<StoredAnnotation> {
    return this.json(`/diagrams/${encodeURIComponent(diagramId)}/scores`, {
      method: "POST",
      body: JSON.stringify(payload),
    });
  }

  submitConsensus(
    diagramId: string,
    tags: HallucinationPayload,
  ): Promise<{ diagram_id: string; hallucination: HallucinationPayload }> {
    return this.json(`/diagrams/${encodeURIComponent(diagramId)}/consensus-hallucination`, {
      method: "POST",
      body: JSON.stringify(tags),
    });
  }

  irrSummary(): Promise<IrrSummary> {
    return this.json("/summary/irr");
  }
}
