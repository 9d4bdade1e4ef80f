/** Thin typed client for the clarification service's JSON API.
 *
 * Every operation maps 1:1 onto a documented endpoint; no classification
 * logic lives here. Non-2xx responses become ApiError (with the server's
 * detail string); transport failures become NetworkError so the caller can
 * offer a retry.
 */

export const NOT_VISIBLE = "not visible";

export interface QuestionPayload {
  id: string;
  text: string;
  answers: string[];
  allow_not_visible: boolean;
}

export interface TopEntry {
  label_id: string;
  text: string;
  probability: number;
}

export interface PredictionPayload {
  label_id: string;
  text: string;
  top3: TopEntry[];
  target?: { label_id: string; text: string };
}

export interface CreatePayload {
  status: "awaiting_query";
  turn: number;
  session_id: string;
  scenario_text?: string;
  image_url?: string;
}

export type StepPayload =
  | { status: "awaiting_answer"; turn: number; action: "ask"; question: QuestionPayload }
  | { status: "done"; turn: number; action: "stop"; prediction: PredictionPayload };

export interface RatingAck {
  status: "done";
  turn: number;
  recorded: boolean;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`network failure: ${String(cause)}`);
    this.name = "NetworkError";
  }
}

export type FetchFn = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  private readonly base: string;

  constructor(
    baseUrl: string,
    private readonly fetchFn: FetchFn = (input, init) => fetch(input, init),
  ) {
    this.base = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(this.base + path, {
        method,
        headers: body === undefined ? undefined : { "Content-Type": "application/json" },
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new NetworkError(cause);
    }
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      // non-JSON body; fall through to the status check
    }
    if (!response.ok) {
      const detail =
        payload !== null && typeof payload === "object" && "detail" in payload
          ? String((payload as { detail: unknown }).detail)
          : response.statusText;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }

  health(): Promise<{ status: string; turn: number }> {
    return this.request("GET", "/healthz");
  }

  createSession(scenarioId?: string | null): Promise<CreatePayload> {
    const body = scenarioId ? { scenario_id: scenarioId } : {};
    return this.request("POST", "/sessions", body);
  }

  submitQuery(sessionId: string, text: string): Promise<StepPayload> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/query`, { text });
  }

  submitAnswer(sessionId: string, answer: string): Promise<StepPayload> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/answer`, { answer });
  }

  submitRating(sessionId: string, naturalness: number, rationality: number): Promise<RatingAck> {
    return this.request("POST", `/sessions/${encodeURIComponent(sessionId)}/rating`, {
      naturalness,
      rationality,
    });
  }

  label(labelId: string): Promise<{ label: { label_id: string; text: string } }> {
    return this.request("GET", `/labels/${encodeURIComponent(labelId)}`);
  }
}
