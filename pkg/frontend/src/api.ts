/**
 * Typed client for the engine's HTTP API.
 *
 * One request per message, plain JSON over HTTP — turns are atomic on the
 * server, so there is nothing to stream. Transport failures and HTTP error
 * statuses are split into distinct error types so the shell can offer a
 * retry for the former and explain the latter.
 */

import type {
  EntityInfo,
  MessageResult,
  SessionInfo,
  SessionLog,
} from "./types.js";

/** The server answered with a non-2xx status. */
export class ApiError extends Error {
  constructor(
    public readonly status: number,
    detail: string,
  ) {
    super(`API error ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** The request never completed (connection refused, DNS, aborted…). */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${cause instanceof Error ? cause.message : String(cause)}`);
    this.name = "NetworkError";
  }
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class EngineApi {
  private readonly fetchFn: FetchLike;

  /**
   * @param base   Origin prefix for absolute targets; empty for same-origin
   *               (the engine serves the built assets itself).
   * @param fetchFn Injection point for tests; defaults to the global fetch.
   */
  constructor(
    private readonly base: string = "",
    fetchFn?: FetchLike,
  ) {
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  async createSession(): Promise<SessionInfo> {
    return this.request<SessionInfo>("/api/session", { method: "POST" });
  }

  async sendMessage(sessionId: string, text: string): Promise<MessageResult> {
    return this.request<MessageResult>(
      `/api/session/${encodeURIComponent(sessionId)}/message`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ text }),
      },
    );
  }

  async fetchLog(sessionId: string): Promise<SessionLog> {
    return this.request<SessionLog>(
      `/api/session/${encodeURIComponent(sessionId)}/log`,
    );
  }

  async fetchEntity(entityId: number): Promise<EntityInfo> {
    return this.request<EntityInfo>(`/api/graph/entity/${entityId}`);
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, init);
    } catch (cause) {
      throw new NetworkError(cause);
    }
    if (!response.ok) {
      throw new ApiError(response.status, await readDetail(response));
    }
    return (await response.json()) as T;
  }
}

/** Best-effort extraction of FastAPI's {"detail": …} error body. */
async function readDetail(response: Response): Promise<string> {
  try {
    const body: unknown = await response.json();
    if (body && typeof body === "object" && "detail" in body) {
      return String((body as { detail: unknown }).detail);
    }
    return JSON.stringify(body);
  } catch {
    return response.statusText || "unknown error";
  }
}
