/** Thin fetch client for the calibration endpoints.
 *
 * Every non-2xx response becomes a typed error so the store can route it:
 * 400/422 carry the service's detail string, 409 carries the current
 * snapshot id, and transport failures become ConnectionError so the view
 * can offer a retry.
 */

import type {
  AuditResponse,
  PersistResponse,
  PolicyRequestBody,
  PreviewRequestBody,
  PreviewResponse,
  SnapshotResponse,
} from "./types.js";

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{ ok: boolean; status: number; json(): Promise<unknown> }>;

export class ConnectionError extends Error {
  constructor(cause: unknown) {
    super("calibration service unreachable");
    this.name = "ConnectionError";
    this.cause = cause;
  }
}

export class ApiError extends Error {
  status: number;
  detail: string;
  body: Record<string, unknown>;

  constructor(status: number, body: Record<string, unknown>) {
    const detail = typeof body["detail"] === "string"
      ? (body["detail"] as string)
      : `request failed with status ${status}`;
    super(detail);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
    this.body = body;
  }
}

export class StaleSnapshotError extends ApiError {
  currentSnapshotId: number | null;

  constructor(body: Record<string, unknown>) {
    super(409, body);
    this.name = "StaleSnapshotError";
    const current = body["snapshot_id"];
    this.currentSnapshotId = typeof current === "number" ? current : null;
  }
}

export class ApiClient {
  readonly baseUrl: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? (globalThis.fetch as unknown as FetchLike);
  }

  private async request(path: string, init?: Parameters<FetchLike>[1]) {
    let response: Awaited<ReturnType<FetchLike>>;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (error) {
      throw new ConnectionError(error);
    }
    let body: unknown = {};
    try {
      body = await response.json();
    } catch {
      body = {};
    }
    const record = (body ?? {}) as Record<string, unknown>;
    if (!response.ok) {
      if (response.status === 409) {
        throw new StaleSnapshotError(record);
      }
      throw new ApiError(response.status, record);
    }
    return record;
  }

  private post(path: string, payload: unknown) {
    return this.request(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  async snapshot(): Promise<SnapshotResponse> {
    return (await this.request("/api/snapshot")) as unknown as SnapshotResponse;
  }

  async preview(overrides: PreviewRequestBody): Promise<PreviewResponse> {
    return (await this.post("/api/preview", overrides)) as unknown as PreviewResponse;
  }

  async audit(): Promise<AuditResponse> {
    return (await this.request("/api/audit")) as unknown as AuditResponse;
  }

  async persist(body: PolicyRequestBody): Promise<PersistResponse> {
    return (await this.post("/api/policy", body)) as unknown as PersistResponse;
  }
}
