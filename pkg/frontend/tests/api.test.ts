import { afterEach, describe, expect, it, vi } from "vitest";
import { GatewayClient, GatewayRequestError, streamWithResume } from "../src/api.js";
import { SessionEvent } from "../src/events.js";

const realFetch = globalThis.fetch;

afterEach(() => {
  globalThis.fetch = realFetch;
});

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function ndjsonResponse(lines: string[]): Response {
  const stream = new ReadableStream({
    start(controller) {
      for (const line of lines) controller.enqueue(new TextEncoder().encode(line));
      controller.close();
    },
  });
  return new Response(stream, { status: 200, headers: { "content-type": "application/x-ndjson" } });
}

describe("GatewayClient", () => {
  it("posts session creation bodies to /sessions", async () => {
    const handle = { id: "abc", scenario: "s", mode: "full", seed: 5, phase: "AwaitingInstruction", outcome: null, created_at: "t" };
    const mock = vi.fn(async () => jsonResponse(handle, 201));
    globalThis.fetch = mock as any;

    const client = new GatewayClient("http://gw");
    const got = await client.createSession("s", "full", 5);
    expect(got).toEqual(handle);
    expect(mock).toHaveBeenCalledTimes(1);
    const [url, init] = mock.mock.calls[0] as unknown as [string, RequestInit];
    expect(url).toBe("http://gw/sessions");
    expect(init.method).toBe("POST");
    expect(JSON.parse(init.body as string)).toEqual({ scenario: "s", mode: "full", seed: 5 });
  });

  it("unwraps the session list envelope", async () => {
    globalThis.fetch = vi.fn(async () => jsonResponse({ sessions: [{ id: "a" }, { id: "b" }] })) as any;
    const got = await new GatewayClient().listSessions();
    expect(got.map((s) => s.id)).toEqual(["a", "b"]);
  });

  it("raises GatewayRequestError with the server's error code", async () => {
    globalThis.fetch = vi.fn(async () =>
      jsonResponse({ error: { code: "unknown_session", message: "no session xyz" } }, 404),
    ) as any;
    const err = await new GatewayClient().getState("xyz").catch((e) => e);
    expect(err).toBeInstanceOf(GatewayRequestError);
    expect(err.status).toBe(404);
    expect(err.code).toBe("unknown_session");
    expect(err.message).toBe("no session xyz");
  });

  it("falls back to the HTTP status for non-JSON error bodies", async () => {
    globalThis.fetch = vi.fn(
      async () => new Response("boom", { status: 500, statusText: "Internal Server Error" }),
    ) as any;
    const err = await new GatewayClient().postInstruction("x", "hi").catch((e) => e);
    expect(err).toBeInstanceOf(GatewayRequestError);
    expect(err.code).toBe("http_500");
    expect(err.message).toBe("Internal Server Error");
  });

  it("streams NDJSON events in order regardless of chunk boundaries", async () => {
    const body =
      '{"step":0,"kind":"InstructionReceived","payload":{"text":"go"}}\n' +
      '{"step":1,"kind":"SessionEnded","payload":{"outcome":"CompletedAllInstructions"}}\n';
    // deliberately awkward chunking: mid-line splits
    const chunks = [body.slice(0, 17), body.slice(17, 80), body.slice(80)];
    const mock = vi.fn(async () => ndjsonResponse(chunks));
    globalThis.fetch = mock as any;

    const events: SessionEvent[] = [];
    const raw: string[] = [];
    const client = new GatewayClient("http://gw");
    const delivered = await client.streamEvents("sid", {
      from: 3,
      form: "comparison",
      onEvent: (ev) => events.push(ev),
      onRawLine: (l) => raw.push(l),
    });

    expect(delivered).toBe(2);
    expect(events.map((e) => e.step)).toEqual([0, 1]);
    expect(raw.join("\n") + "\n").toBe(body);
    const url = mock.mock.calls[0][0] as unknown as string;
    expect(url).toBe("http://gw/sessions/sid/events?from=3&form=comparison");
  });

  it("streamWithResume resumes after a dropped connection without replaying events", async () => {
    const line = (step: number) => `{"step":${step},"kind":"K","payload":{}}\n`;
    let call = 0;
    globalThis.fetch = vi.fn(async (url: string) => {
      call += 1;
      if (call === 1) {
        // deliver two events, then drop the connection; pull-based so the
        // queued chunk reaches the reader before the stream errors
        let pulls = 0;
        const stream = new ReadableStream({
          pull(controller) {
            pulls += 1;
            if (pulls === 1) controller.enqueue(new TextEncoder().encode(line(0) + line(1)));
            else controller.error(new TypeError("connection reset"));
          },
        });
        return new Response(stream, { status: 200 });
      }
      if (call > 2 || !url.includes("from=2")) {
        // wrong resume point: fail fast instead of letting the retry loop spin
        return jsonResponse({ error: { code: "unknown_session", message: `unexpected ${url}` } }, 404);
      }
      return ndjsonResponse([line(2), line(3)]);
    }) as any;

    const steps: number[] = [];
    const retries: unknown[] = [];
    await streamWithResume(new GatewayClient("http://gw"), "sid", 0, (ev) => steps.push(ev.step), {
      onRetry: (e) => retries.push(e),
      retryDelayMs: 1,
    });
    expect(steps).toEqual([0, 1, 2, 3]);
    expect(retries).toHaveLength(1);
    expect(call).toBe(2);
  });

  it("streamWithResume does not retry gateway-signaled errors", async () => {
    globalThis.fetch = vi.fn(async () =>
      jsonResponse({ error: { code: "unknown_session", message: "gone" } }, 404),
    ) as any;
    const err = await streamWithResume(new GatewayClient(), "sid", 0, () => {}, {
      retryDelayMs: 1,
    }).catch((e) => e);
    expect(err).toBeInstanceOf(GatewayRequestError);
    expect((globalThis.fetch as any).mock.calls).toHaveLength(1);
  });
});
