// Gateway client. The console talks to these five endpoints and nothing else;
// every piece of view state originates here or in the event stream.

import {
  InstructionAck,
  SessionEvent,
  SessionHandle,
  StateSnapshot,
} from "./events.js";
import { makeLineSplitter } from "./ndjson.js";

export class GatewayRequestError extends Error {
  code: string;
  status: number;

  constructor(status: number, code: string, message: string) {
    super(message);
    this.code = code;
    this.status = status;
  }
}

async function asJson<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let code = `http_${resp.status}`;
    let message = resp.statusText;
    try {
      const body = await resp.json();
      if (body && body.error) {
        code = body.error.code ?? code;
        message = body.error.message ?? message;
      }
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new GatewayRequestError(resp.status, code, message);
  }
  return (await resp.json()) as T;
}

export interface StreamOptions {
  from?: number;
  form?: "full" | "comparison";
  signal?: AbortSignal;
  onRawLine?: (line: string) => void;
  onEvent?: (ev: SessionEvent) => void;
}

export class GatewayClient {
  constructor(private baseUrl: string = "") {}

  async createSession(scenario: string, mode = "full", seed = 0): Promise<SessionHandle> {
    const resp = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ scenario, mode, seed }),
    });
    return asJson<SessionHandle>(resp);
  }

  async listSessions(): Promise<SessionHandle[]> {
    const resp = await fetch(`${this.baseUrl}/sessions`);
    const body = await asJson<{ sessions: SessionHandle[] }>(resp);
    return body.sessions;
  }

  async getState(sessionId: string): Promise<StateSnapshot> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/state`);
    return asJson<StateSnapshot>(resp);
  }

  async postInstruction(sessionId: string, text: string): Promise<InstructionAck> {
    const resp = await fetch(`${this.baseUrl}/sessions/${sessionId}/instructions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ text }),
    });
    return asJson<InstructionAck>(resp);
  }

  // One pass over the stream; resolves when the server closes it (after
  // SessionEnded) or the signal aborts. Lines arrive in emission order.
  async streamEvents(sessionId: string, opts: StreamOptions = {}): Promise<number> {
    const params = new URLSearchParams();
    if (opts.from !== undefined) params.set("from", String(opts.from));
    if (opts.form) params.set("form", opts.form);
    const qs = params.toString();
    const url = `${this.baseUrl}/sessions/${sessionId}/events${qs ? `?${qs}` : ""}`;
    const resp = await fetch(url, { signal: opts.signal });
    if (!resp.ok || !resp.body) {
      return asJson<never>(resp);
    }

    let delivered = 0;
    const splitter = makeLineSplitter((line) => {
      delivered += 1;
      if (opts.onRawLine) opts.onRawLine(line);
      if (opts.onEvent) opts.onEvent(JSON.parse(line) as SessionEvent);
    });

    const reader = resp.body.getReader();
    const decoder = new TextDecoder();
    for (;;) {
      const { done, value } = await reader.read();
      if (done) break;
      splitter.push(decoder.decode(value, { stream: true }));
    }
    splitter.push(decoder.decode());
    splitter.flush();
    return delivered;
  }
}

// Keeps a view subscribed across connection drops: each retry resumes from
// the last step it saw, so no event is rendered twice or skipped.
export async function streamWithResume(
  client: GatewayClient,
  sessionId: string,
  fromStep: number,
  onEvent: (ev: SessionEvent) => void,
  opts: { signal?: AbortSignal; onRetry?: (error: unknown) => void; retryDelayMs?: number } = {},
): Promise<void> {
  let next = fromStep;
  for (;;) {
    try {
      await client.streamEvents(sessionId, {
        from: next,
        signal: opts.signal,
        onEvent: (ev) => {
          next = ev.step + 1;
          onEvent(ev);
        },
      });
      return; // clean close: SessionEnded was delivered
    } catch (err) {
      if (opts.signal?.aborted) return;
      if (err instanceof GatewayRequestError) throw err; // 404 etc: not retryable
      if (opts.onRetry) opts.onRetry(err);
      await new Promise((r) => setTimeout(r, opts.retryDelayMs ?? 1000));
    }
  }
}
