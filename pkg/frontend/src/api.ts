import type {
  ArtifactEntry,
  KeyPresence,
  ProjectInfo,
  RunEvent,
  RunStatus,
  StartRunRequest,
} from "./types";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

async function fail(response: Response): Promise<never> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: string };
    if (body.detail) detail = body.detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(response.status, detail);
}

/** Typed client for the pipeline service (everything under /v1). */
export class ServiceClient {
  constructor(
    private baseUrl: string = "",
    private token: string | null = null,
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const headers: Record<string, string> = { ...extra };
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    return headers;
  }

  private async json<T>(path: string, init: RequestInit = {}): Promise<T> {
    const response = await fetch(`${this.baseUrl}${path}`, {
      ...init,
      headers: this.headers((init.headers as Record<string, string>) ?? {}),
    });
    if (!response.ok) await fail(response);
    return (await response.json()) as T;
  }

  health(): Promise<{ status: string }> {
    return this.json("/v1/health");
  }

  keys(): Promise<KeyPresence> {
    return this.json("/v1/keys");
  }

  createProject(name: string): Promise<{ id: string }> {
    return this.json("/v1/projects", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ name }),
    });
  }

  listProjects(): Promise<{ id: string }[]> {
    return this.json("/v1/projects");
  }

  project(id: string): Promise<ProjectInfo> {
    return this.json(`/v1/projects/${encodeURIComponent(id)}`);
  }

  artifacts(id: string): Promise<ArtifactEntry[]> {
    return this.json(`/v1/projects/${encodeURIComponent(id)}/artifacts`);
  }

  async upload(id: string, path: string, content: string | Blob): Promise<void> {
    const response = await fetch(
      `${this.baseUrl}/v1/projects/${encodeURIComponent(id)}/artifacts/${path}`,
      { method: "PUT", headers: this.headers(), body: content },
    );
    if (!response.ok) await fail(response);
  }

  async download(id: string, path: string): Promise<Blob> {
    const response = await fetch(
      `${this.baseUrl}/v1/projects/${encodeURIComponent(id)}/artifacts/${path}`,
      { headers: this.headers() },
    );
    if (!response.ok) await fail(response);
    return response.blob();
  }

  async downloadText(id: string, path: string): Promise<string> {
    return (await this.download(id, path)).text();
  }

  artifactUrl(id: string, path: string): string {
    return `${this.baseUrl}/v1/projects/${encodeURIComponent(id)}/artifacts/${path}`;
  }

  startRun(id: string, request: StartRunRequest): Promise<{ run_id: string }> {
    return this.json(`/v1/projects/${encodeURIComponent(id)}/runs`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  runStatus(runId: string): Promise<RunStatus> {
    return this.json(`/v1/runs/${encodeURIComponent(runId)}`);
  }

  /**
   * Follow a run's server-sent event stream, invoking onEvent per event in
   * stream order. Resolves when the stream closes (terminal event).
   */
  async streamEvents(
    runId: string,
    onEvent: (event: RunEvent) => void,
  ): Promise<RunEvent[]> {
    const response = await fetch(
      `${this.baseUrl}/v1/runs/${encodeURIComponent(runId)}/events`,
      { headers: this.headers() },
    );
    if (!response.ok || !response.body) await fail(response);
    const reader = response.body!.getReader();
    const decoder = new TextDecoder();
    const collected: RunEvent[] = [];
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      const { events, rest } = parseSseChunk(buffer);
      buffer = rest;
      for (const event of events) {
        collected.push(event);
        onEvent(event);
      }
    }
    return collected;
  }
}

/**
 * Incremental SSE parser: consumes complete `data:` frames from the buffer,
 * returns parsed events plus the unconsumed remainder.
 */
export function parseSseChunk(buffer: string): {
  events: RunEvent[];
  rest: string;
} {
  const events: RunEvent[] = [];
  const frames = buffer.split("\n\n");
  const rest = frames.pop() ?? "";
  for (const frame of frames) {
    for (const line of frame.split("\n")) {
      if (line.startsWith("data: ")) {
        events.push(JSON.parse(line.slice("data: ".length)) as RunEvent);
      }
    }
  }
  return { events, rest };
}
