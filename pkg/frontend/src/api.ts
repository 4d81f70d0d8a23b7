import type {
  FeedbackKind,
  ImagesPayload,
  JobStatus,
  LabelsPayload,
  MetricsPayload,
  ProjectionPayload,
  PromptsPayload,
  ServiceError,
  TreecutPayload,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public payload: ServiceError) {
    super(`${payload.code}: ${payload.message}`);
  }
}

type FetchLike = typeof fetch;

/** Thin typed client over the session REST API. */
export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const resp = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? {} : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const data = await resp.json();
    if (!resp.ok) {
      const detail = (data as { detail?: ServiceError }).detail;
      throw new ApiError(resp.status, detail ?? { code: "Unknown", message: resp.statusText, detail: {} });
    }
    return data as T;
  }

  createSession(corpusPath: string, config?: Record<string, unknown>): Promise<{ session_id: string; corpus_version: number }> {
    return this.request("POST", "/sessions", { corpus_path: corpusPath, config });
  }

  projection(sid: string): Promise<ProjectionPayload> {
    return this.request("GET", `/sessions/${sid}/projection`);
  }

  treecut(sid: string, budget: number, focus?: string): Promise<TreecutPayload> {
    const q = focus ? `?budget=${budget}&focus=${encodeURIComponent(focus)}` : `?budget=${budget}`;
    return this.request("GET", `/sessions/${sid}/treecut${q}`);
  }

  metrics(sid: string): Promise<MetricsPayload> {
    return this.request("GET", `/sessions/${sid}/metrics`);
  }

  prompts(sid: string): Promise<PromptsPayload> {
    return this.request("GET", `/sessions/${sid}/prompts`);
  }

  images(sid: string, filters: Partial<{ class_name: string; kind: string; label: string; iteration: number }> = {}): Promise<ImagesPayload> {
    const params = new URLSearchParams();
    for (const [key, value] of Object.entries(filters)) {
      if (value !== undefined) params.set(key, String(value));
    }
    const q = params.toString();
    return this.request("GET", `/sessions/${sid}/images${q ? "?" + q : ""}`);
  }

  labels(sid: string): Promise<LabelsPayload> {
    return this.request("GET", `/sessions/${sid}/labels`);
  }

  submitFeedback(sid: string, kind: FeedbackKind, className: string, imageIds: string[]): Promise<{ job_id: string }> {
    return this.request("POST", `/sessions/${sid}/feedback`, {
      kind,
      class_name: className,
      image_ids: imageIds,
    });
  }

  jobStatus(sid: string, jobId: string): Promise<JobStatus> {
    return this.request("GET", `/sessions/${sid}/jobs/${jobId}`);
  }

  acceptPrompt(sid: string, promptId: string): Promise<{ corpus_version: number; generated: number }> {
    return this.request("POST", `/sessions/${sid}/prompts/${promptId}/accept`);
  }

  rejectPrompt(sid: string, promptId: string): Promise<{ ok: boolean }> {
    return this.request("POST", `/sessions/${sid}/prompts/${promptId}/reject`);
  }

  editPrompt(sid: string, promptId: string, text: string): Promise<{ ok: boolean; version: number }> {
    return this.request("PATCH", `/sessions/${sid}/prompts/${promptId}`, { text });
  }

  deletePrompt(sid: string, promptId: string): Promise<{ ok: boolean }> {
    return this.request("DELETE", `/sessions/${sid}/prompts/${promptId}`);
  }
}
