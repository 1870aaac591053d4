/**
 * Typed client for the local editor service. The only configuration is the
 * service base URL; every mutation can carry an idempotency key.
 */

import type {
  EditOp,
  JobDoc,
  ProjectDoc,
  SuggestionDoc,
  SuggestionLevel,
  ViolationDoc,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public violation: string,
    detail: string
  ) {
    super(`${status} ${violation}: ${detail}`);
  }
}

async function parseError(resp: Response): Promise<never> {
  let doc: Partial<ViolationDoc> = {};
  try {
    doc = (await resp.json()) as ViolationDoc;
  } catch {
    // non-JSON error body; keep defaults
  }
  throw new ApiError(resp.status, doc.violation ?? "unknown", doc.detail ?? "");
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch
  ) {}

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!resp.ok) await parseError(resp);
    return (await resp.json()) as T;
  }

  createProject(path: string): Promise<{ id: string; media: ProjectDoc["media"] }> {
    return this.json("/projects", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ path }),
    });
  }

  getProject(id: string): Promise<ProjectDoc> {
    return this.json(`/projects/${id}`);
  }

  analyze(id: string, config: Record<string, unknown>): Promise<{ job_id: string }> {
    return this.json(`/projects/${id}/analyze`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(config),
    });
  }

  getJob(jobId: string): Promise<JobDoc> {
    return this.json(`/jobs/${jobId}`);
  }

  /** Poll a job until it settles; calls onProgress with each fraction seen. */
  async waitForJob(
    jobId: string,
    onProgress?: (fraction: number) => void,
    intervalMs = 150,
    timeoutMs = 180_000
  ): Promise<JobDoc> {
    const deadline = Date.now() + timeoutMs;
    for (;;) {
      const job = await this.getJob(jobId);
      onProgress?.(job.progress);
      if (job.state === "done" || job.state === "failed") return job;
      if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
      await new Promise((r) => setTimeout(r, intervalMs));
    }
  }

  suggestions(id: string, level: SuggestionLevel): Promise<{ suggestions: SuggestionDoc[] }> {
    return this.json(`/projects/${id}/suggestions?level=${level}`);
  }

  patchTimeline(id: string, op: EditOp, idempotencyKey?: string): Promise<ProjectDoc> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (idempotencyKey) headers["Idempotency-Key"] = idempotencyKey;
    return this.json(`/projects/${id}/timeline`, {
      method: "PATCH",
      headers,
      body: JSON.stringify(op),
    });
  }

  render(id: string, dir: string): Promise<{ job_id: string }> {
    return this.json(`/projects/${id}/render`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ sink: { kind: "image_sequence", dir } }),
    });
  }

  thumbnailUrl(id: string, frame: number): string {
    return `${this.baseUrl}/projects/${id}/thumbnail?frame=${frame}`;
  }

  assetUrl(id: string, assetId: string): string {
    return `${this.baseUrl}/projects/${id}/assets/${assetId}`;
  }
}
