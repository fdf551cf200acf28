/** Thin typed client; every dashboard action maps to exactly one route. */

import type {
  ApiErrorBody,
  CuratedQuestion,
  HistoryEvent,
  Outcome,
  RouteDescription,
  Statistics,
  UseCaseSummary,
} from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
    this.status = status;
    this.body = body;
  }

  get isRateLimit(): boolean {
    return this.body.code === "rate-limit";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface RefineRequest {
  outcome_ref: string;
  instruction: string;
  target: "query" | "chart" | "interpretation";
  mode: "manual" | "prompt";
  provider?: string;
  model?: string;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.baseUrl + path, init);
    const payload = await response.json();
    if (!response.ok) throw new ApiError(response.status, payload as ApiErrorBody);
    return payload as T;
  }

  listUseCases(): Promise<UseCaseSummary[]> {
    return this.request("GET", "/use-cases");
  }

  getSchema(useCaseId: string): Promise<Record<string, unknown>> {
    return this.request("GET", `/use-cases/${useCaseId}/schema`);
  }

  listQuestions(useCaseId: string): Promise<CuratedQuestion[]> {
    return this.request("GET", `/use-cases/${useCaseId}/questions`);
  }

  runCurated(useCaseId: string, index: number, sessionId?: string): Promise<Outcome> {
    return this.request("POST", `/use-cases/${useCaseId}/questions/${index}/run`, {
      session_id: sessionId ?? null,
    });
  }

  runCustom(
    useCaseId: string,
    question: string,
    sessionId?: string,
    provider?: string,
    model?: string,
  ): Promise<Outcome> {
    return this.request("POST", `/use-cases/${useCaseId}/custom/run`, {
      question,
      session_id: sessionId ?? null,
      provider: provider ?? null,
      model: model ?? null,
    });
  }

  refine(sessionId: string, body: RefineRequest): Promise<Outcome> {
    return this.request("POST", `/sessions/${sessionId}/refine`, body);
  }

  history(sessionId: string): Promise<HistoryEvent[]> {
    return this.request("GET", `/sessions/${sessionId}/history`);
  }

  setRetained(sessionId: string, eventId: string, retained: boolean): Promise<unknown> {
    return this.request("POST", `/sessions/${sessionId}/events/${eventId}/retained`, {
      retained,
    });
  }

  /** Bundle download: returns the raw JSON document plus its filename. */
  async exportBundle(
    sessionId: string,
    outcomeRef: string,
  ): Promise<{ filename: string; bundle: Record<string, unknown> }> {
    const response = await this.fetchImpl(
      `${this.baseUrl}/sessions/${sessionId}/export/${outcomeRef}`,
      { method: "GET" },
    );
    const payload = await response.json();
    if (!response.ok) throw new ApiError(response.status, payload as ApiErrorBody);
    const disposition = response.headers.get("content-disposition") ?? "";
    const match = /filename="([^"]+)"/.exec(disposition);
    return { filename: match?.[1] ?? `${outcomeRef}.cqbundle.json`, bundle: payload };
  }

  importBundle(bundle: Record<string, unknown>): Promise<{ session_id: string }> {
    return this.request("POST", "/import", bundle);
  }

  statistics(): Promise<Statistics> {
    return this.request("GET", "/statistics");
  }

  apiDescription(): Promise<{ routes: RouteDescription[] }> {
    return this.request("GET", "/api-description");
  }
}
