/**
 * Typed client for the survey service.
 *
 * Submissions are idempotent per (session, step) — the step index is the
 * idempotency token — so network failures and 5xx responses are retried
 * with exponential backoff. A 4xx is surfaced immediately: it will not
 * resolve on retry.
 */

export interface Demographics {
  age_group: string;
  race_ethnicity: string;
  gender: string;
  works_in_healthcare: string;
}

export interface PolicyCard {
  label: string;
  policy: number;
  life_years_saved: number;
  overall_survival: number;
  survival_by_age: number[];
  access_by_age: number[];
}

export interface PairwisePayload {
  v: number;
  kind: "pairwise" | "final";
  step: number;
  total_steps: number;
  left: PolicyCard;
  right: PolicyCard;
}

export interface CrtPayload {
  v: number;
  kind: "crt";
  step: number;
  total_steps: number;
  question: string;
  question_index: number;
}

export interface DonePayload {
  v: number;
  kind: "done";
  step: number;
  total_steps: number;
}

export type StepPayload = PairwisePayload | CrtPayload | DonePayload;

export type AnswerWord = "left" | "indifferent" | "right";

export interface AnswerBody {
  step: number;
  response?: AnswerWord;
  text?: string;
  elapsed_ms: number;
}

export interface SessionInfo {
  id: string;
  token: string;
  total_steps: number;
}

export class SessionExpiredError extends Error {}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

export interface ClientOptions {
  fetchImpl?: typeof fetch;
  maxRetries?: number;
  baseDelayMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((r) => setTimeout(r, ms));

export class SurveyClient {
  private session: SessionInfo | null = null;
  private fetchImpl: typeof fetch;
  private maxRetries: number;
  private baseDelayMs: number;
  private sleep: (ms: number) => Promise<void>;

  constructor(private baseUrl: string, options: ClientOptions = {}) {
    this.fetchImpl = options.fetchImpl ?? fetch.bind(globalThis);
    this.maxRetries = options.maxRetries ?? 3;
    this.baseDelayMs = options.baseDelayMs ?? 400;
    this.sleep = options.sleep ?? defaultSleep;
  }

  get sessionInfo(): SessionInfo | null {
    return this.session;
  }

  private async request(path: string, init: RequestInit): Promise<unknown> {
    let lastError: Error | null = null;
    for (let attempt = 0; attempt <= this.maxRetries; attempt++) {
      let response: Response;
      try {
        response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
      } catch (error) {
        lastError = error instanceof Error ? error : new Error(String(error));
        if (attempt < this.maxRetries) {
          await this.sleep(this.baseDelayMs * 2 ** attempt);
        }
        continue;
      }
      if (response.status === 410) {
        throw new SessionExpiredError("session expired");
      }
      if (response.status >= 500 && attempt < this.maxRetries) {
        await this.sleep(this.baseDelayMs * 2 ** attempt);
        continue;
      }
      if (!response.ok) {
        let detail = `HTTP ${response.status}`;
        try {
          const body = (await response.json()) as { error?: string };
          if (body.error) detail = body.error;
        } catch {
          /* non-JSON error body */
        }
        throw new ApiError(response.status, detail);
      }
      return response.json();
    }
    throw lastError ?? new Error("request failed after retries");
  }

  private authHeaders(): Record<string, string> {
    if (!this.session) throw new Error("no active session");
    return { Authorization: `Bearer ${this.session.token}` };
  }

  async createSession(
    demographics: Demographics,
    workerId?: string,
  ): Promise<SessionInfo> {
    const body = JSON.stringify({
      v: 1,
      demographics,
      worker_id: workerId ?? null,
    });
    const created = (await this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body,
    })) as SessionInfo;
    this.session = created;
    return created;
  }

  async nextStep(): Promise<StepPayload> {
    if (!this.session) throw new Error("no active session");
    return (await this.request(`/sessions/${this.session.id}/next`, {
      method: "GET",
      headers: this.authHeaders(),
    })) as StepPayload;
  }

  async submitAnswer(body: AnswerBody): Promise<{ ok: boolean; completed?: boolean }> {
    if (!this.session) throw new Error("no active session");
    return (await this.request(`/sessions/${this.session.id}/answers`, {
      method: "POST",
      headers: { "Content-Type": "application/json", ...this.authHeaders() },
      body: JSON.stringify({ v: 1, ...body }),
    })) as { ok: boolean; completed?: boolean };
  }
}
