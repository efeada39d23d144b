// HTTP client for the session service. All server mutations go through the
// documented POST endpoints; everything here returns parsed JSON or raw
// EFS/1 text. The fetch implementation is injectable for tests.

import { escapeText, PatientCard } from "./efs.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public errorName: string, message: string) {
    super(message);
  }
}

export class AuthRequired extends ApiError {
  constructor(message: string) {
    super(401, "AuthError", message);
  }
}

async function raiseFor(response: Response): Promise<void> {
  if (response.ok) return;
  let name = "Error";
  let message = response.statusText;
  try {
    const body = await response.json();
    name = body.error ?? name;
    message = body.message ?? message;
  } catch {
    // non-JSON error body; keep the status text
  }
  if (response.status === 401) throw new AuthRequired(message);
  throw new ApiError(response.status, name, message);
}

export class ApiClient {
  token: string | null = null;

  constructor(public baseUrl: string,
              private fetchImpl: FetchLike = (u, i) => fetch(u, i)) {}

  private headers(json = false): Record<string, string> {
    const h: Record<string, string> = {};
    if (this.token) h["Authorization"] = `Bearer ${this.token}`;
    if (json) h["Content-Type"] = "application/json";
    return h;
  }

  async login(user: string, secret: string): Promise<void> {
    const r = await this.fetchImpl(`${this.baseUrl}/api/login`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ user, secret }),
    });
    await raiseFor(r);
    this.token = (await r.json()).token;
  }

  async logout(): Promise<void> {
    if (!this.token) return;
    await this.fetchImpl(`${this.baseUrl}/api/logout`, {
      method: "POST", headers: this.headers(),
    });
    this.token = null;
  }

  async listPatients(): Promise<PatientCard[]> {
    const r = await this.fetchImpl(`${this.baseUrl}/api/patients`,
                                   { headers: this.headers() });
    await raiseFor(r);
    const cards = await r.json();
    return cards.map((c: Record<string, unknown>) => ({
      patientId: c.patient_id as string,
      displayName: c.display_name as string,
      age: c.age as number,
      notes: (c.notes as string) ?? "",
    }));
  }

  async openSession(patientId: string): Promise<{ sessionId: string; t0Ms: number }> {
    const r = await this.fetchImpl(`${this.baseUrl}/api/sessions`, {
      method: "POST",
      headers: this.headers(true),
      body: JSON.stringify({ patient_id: patientId }),
    });
    await raiseFor(r);
    const body = await r.json();
    return { sessionId: body.session_id, t0Ms: body.t0_ms };
  }

  /** POST one EFS/1 A line; resolves to the acked dt. */
  async postActivity(sessionId: string, dtMs: number, text: string): Promise<number> {
    const r = await this.fetchImpl(
      `${this.baseUrl}/api/sessions/${sessionId}/activities`, {
        method: "POST",
        headers: this.headers(),
        body: `A|${dtMs}|${escapeText(text)}\n`,
      });
    await raiseFor(r);
    return (await r.json()).dt_ms as number;
  }

  /** Raw EFS/1 export, optionally range-filtered. */
  async exportSession(sessionId: string, fromMs?: number, toMs?: number): Promise<string> {
    let url = `${this.baseUrl}/api/sessions/${sessionId}/export`;
    if (fromMs !== undefined && toMs !== undefined) {
      url += `?from=${fromMs}&to=${toMs}`;
    }
    const r = await this.fetchImpl(url, { headers: this.headers() });
    await raiseFor(r);
    return r.text();
  }

  /** EventSource cannot send headers, so the live URL carries the token. */
  liveUrl(sessionId: string, fromDt: number): string {
    const token = encodeURIComponent(this.token ?? "");
    return `${this.baseUrl}/api/sessions/${sessionId}/live` +
           `?from=${fromDt}&token=${token}`;
  }
}
