/**
 * In-memory stand-in for the survey service, speaking the same HTTP
 * contract at the fetch level. One adaptive query, three free-text
 * steps, one random query, and a final that shows the same policy on
 * both sides. Enforces sequential steps exactly like the real thing.
 */

import { PolicyCard } from "../src/api.js";

export interface RecordedAnswer {
  step: number;
  response?: string;
  text?: string;
  elapsed_ms: number;
}

function card(policy: number): PolicyCard {
  return {
    label: `Policy ${policy}`,
    policy,
    life_years_saved: 10_000 + 500 * policy,
    overall_survival: 0.4 + 0.05 * policy,
    survival_by_age: [0.9, 0.85, 0.7, 0.6, 0.45, 0.3],
    access_by_age: [1.0, 0.9, 0.8, 0.7, 0.6, 0.5],
  };
}

const QUESTIONS = [
  "A bat and a ball cost $1.10 in total…",
  "If it takes 5 machines 5 minutes…",
  "In a lake, there is a patch of lily pads…",
];

export class MockService {
  totalSteps = 6; // 2K pairwise + 3 free-text + 1 final, K = 1
  step = 0;
  answers: RecordedAnswer[] = [];
  requests: string[] = [];
  failNextSubmitWith: "network" | 500 | null = null;
  expireNow = false;
  private token = "tok-123";

  private payloadFor(step: number): unknown {
    const base = { v: 1, step, total_steps: this.totalSteps };
    if (step >= this.totalSteps) return { ...base, kind: "done" };
    if (step === 0) {
      return { ...base, kind: "pairwise", left: card(3), right: card(7) };
    }
    if (step >= 1 && step <= 3) {
      return {
        ...base,
        kind: "crt",
        question_index: step - 1,
        question: QUESTIONS[step - 1],
      };
    }
    if (step === 4) {
      return { ...base, kind: "pairwise", left: card(5), right: card(2) };
    }
    // final head-to-head where both arms recommend the same policy
    return { ...base, kind: "final", left: card(7), right: card(7) };
  }

  fetch = async (input: RequestInfo | URL, init?: RequestInit): Promise<Response> => {
    const url = String(input);
    const method = init?.method ?? "GET";
    this.requests.push(`${method} ${url}`);

    const json = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "Content-Type": "application/json" },
      });

    if (url.endsWith("/sessions") && method === "POST") {
      const body = JSON.parse(String(init?.body));
      if (!body.demographics) return json(400, { v: 1, error: "demographics required" });
      return json(200, {
        v: 1,
        id: "s-000001",
        token: this.token,
        total_steps: this.totalSteps,
      });
    }
    const auth = new Headers(init?.headers).get("Authorization");
    if (auth !== `Bearer ${this.token}`) {
      return json(403, { v: 1, error: "bad session token" });
    }
    if (this.expireNow) {
      return json(410, { v: 1, error: "session expired" });
    }
    if (url.endsWith("/next") && method === "GET") {
      return json(200, this.payloadFor(this.step));
    }
    if (url.endsWith("/answers") && method === "POST") {
      if (this.failNextSubmitWith === "network") {
        this.failNextSubmitWith = null;
        throw new TypeError("network connection lost");
      }
      if (this.failNextSubmitWith === 500) {
        this.failNextSubmitWith = null;
        return json(500, { v: 1, error: "transient" });
      }
      const body = JSON.parse(String(init?.body));
      if (body.step === this.step - 1) {
        return json(200, { v: 1, ok: true, duplicate: true });
      }
      if (body.step !== this.step) {
        return json(409, { v: 1, error: `expected step ${this.step}` });
      }
      this.answers.push({
        step: body.step,
        response: body.response ?? undefined,
        text: body.text ?? undefined,
        elapsed_ms: body.elapsed_ms,
      });
      this.step += 1;
      return json(200, {
        v: 1,
        ok: true,
        completed: this.step >= this.totalSteps,
      });
    }
    return json(404, { v: 1, error: "no route" });
  };
}
