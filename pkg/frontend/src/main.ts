// Console entry point. All view state is derived from gateway responses and
// the event stream; the page never simulates workcell behavior locally.

import { GatewayClient, GatewayRequestError, streamWithResume } from "./api.js";
import { SessionEvent, SessionHandle } from "./events.js";
import { buildScene } from "./scene.js";
import { el, renderContextPanel, renderOutcomeBanner, renderScene, renderTimeline } from "./render.js";
import {
  TimelineState,
  addPendingInstruction,
  applyEvent,
  initialTimeline,
} from "./timeline.js";

interface AppState {
  sessions: SessionHandle[];
  active: SessionHandle | null;
  phase: string;
  timeline: TimelineState;
  error: string | null;
  sending: boolean;
  queuedNotice: string | null;
}

const client = new GatewayClient("");
const state: AppState = {
  sessions: [],
  active: null,
  phase: "",
  timeline: initialTimeline(),
  error: null,
  sending: false,
  queuedNotice: null,
};

let streamAbort: AbortController | null = null;
const inputHistory: string[] = [];
let historyIndex = -1;

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function setError(err: unknown): void {
  if (err instanceof GatewayRequestError) {
    state.error = `gateway error ${err.status} (${err.code}): ${err.message}`;
  } else {
    state.error = `gateway unreachable: ${(err as Error).message ?? err}`;
  }
  render();
}

function clearError(): void {
  state.error = null;
}

async function refreshSessions(): Promise<void> {
  try {
    state.sessions = await client.listSessions();
    clearError();
  } catch (err) {
    setError(err);
  }
  render();
}

async function refreshPhase(): Promise<void> {
  if (!state.active) return;
  try {
    const snap = await client.getState(state.active.id);
    state.phase = snap.phase;
    clearError();
  } catch (err) {
    setError(err);
  }
  render();
}

function disconnect(): void {
  if (streamAbort) {
    streamAbort.abort();
    streamAbort = null;
  }
  state.active = null;
  state.phase = "";
  state.timeline = initialTimeline();
  state.queuedNotice = null;
}

async function connect(handle: SessionHandle): Promise<void> {
  disconnect();
  state.active = handle;
  state.timeline = initialTimeline();
  render();
  await refreshPhase();

  streamAbort = new AbortController();
  const signal = streamAbort.signal;
  try {
    await streamWithResume(
      client,
      handle.id,
      0,
      (ev: SessionEvent) => {
        applyEvent(state.timeline, ev);
        if (ev.kind === "SessionEnded") state.phase = "Terminated";
        render();
      },
      { signal, onRetry: () => setError(new Error("stream interrupted, retrying")) },
    );
    // server closed the stream: session over, pick up the final phase
    await refreshPhase();
  } catch (err) {
    if (!signal.aborted) setError(err);
  }
  render();
}

async function createSession(scenario: string, mode: string, seed: number): Promise<void> {
  try {
    const handle = await client.createSession(scenario, mode, seed);
    clearError();
    await refreshSessions();
    await connect(handle);
  } catch (err) {
    setError(err);
  }
}

async function sendInstruction(text: string): Promise<void> {
  if (!state.active || text.trim() === "") return;
  state.sending = true;
  state.queuedNotice = null;
  addPendingInstruction(state.timeline, text);
  inputHistory.push(text);
  historyIndex = -1;
  render();
  try {
    const ack = await client.postInstruction(state.active.id, text);
    if (ack.queued) {
      state.queuedNotice = `queued at position ${ack.queue_position}`;
    }
    clearError();
  } catch (err) {
    setError(err);
  }
  state.sending = false;
  await refreshPhase();
}

function inputEnabled(): boolean {
  return state.active !== null && state.phase === "AwaitingInstruction" && !state.sending;
}

function render(): void {
  const sessionsNode = byId("sessions");
  sessionsNode.replaceChildren(
    ...state.sessions.map((h) =>
      el("li", { class: state.active?.id === h.id ? "session active" : "session" }, [
        el("button", { class: "session-connect", "data-session": h.id }, [
          `${h.id} — ${h.scenario} (${h.mode}, seed ${h.seed}) ${h.outcome ?? h.phase}`,
        ]),
      ]),
    ),
  );
  for (const btn of sessionsNode.querySelectorAll("button[data-session]")) {
    btn.addEventListener("click", () => {
      const id = (btn as HTMLElement).dataset.session;
      const handle = state.sessions.find((s) => s.id === id);
      if (handle) void connect(handle);
    });
  }

  const errorNode = byId("error");
  errorNode.replaceChildren();
  errorNode.classList.toggle("hidden", state.error === null);
  if (state.error) errorNode.append(state.error);

  const activeNode = byId("active");
  activeNode.classList.toggle("hidden", state.active === null);
  if (state.active) {
    byId("active-title").replaceChildren(
      `${state.active.scenario} — ${state.active.mode}, seed ${state.active.seed}`,
    );
    byId("banner").replaceChildren(renderOutcomeBanner(state.timeline));
    byId("phase").replaceChildren(state.phase || "…");
    byId("timeline").replaceChildren(renderTimeline(state.timeline));
    byId("context").replaceChildren(renderContextPanel(state.timeline));

    const open = [...state.timeline.instructions].reverse().find((i) => !i.pending);
    const selected =
      open && open.attempts.length > 0 ? open.attempts[open.attempts.length - 1].target : null;
    const scene = buildScene(state.timeline.observation, open?.candidates ?? null, selected);
    byId("scene-holder").replaceChildren(renderScene(scene));

    const queueNode = byId("queued");
    queueNode.replaceChildren();
    if (state.queuedNotice) queueNode.append(state.queuedNotice);
  }

  const input = byId("instruction-input") as HTMLInputElement;
  const send = byId("send") as HTMLButtonElement;
  input.disabled = !inputEnabled();
  send.disabled = !inputEnabled();
  input.placeholder = inputEnabled() ? "instruction…" : state.phase || "no session";
}

function wireForm(): void {
  const form = byId("create-form") as HTMLFormElement;
  form.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const scenario = (byId("scenario-input") as HTMLInputElement).value.trim();
    const mode = (byId("mode-input") as HTMLSelectElement).value;
    const seed = Number((byId("seed-input") as HTMLInputElement).value || "0");
    if (scenario) void createSession(scenario, mode, seed);
  });

  const input = byId("instruction-input") as HTMLInputElement;
  const send = byId("send") as HTMLButtonElement;
  const submit = () => {
    const text = input.value;
    input.value = "";
    void sendInstruction(text);
  };
  send.addEventListener("click", submit);
  input.addEventListener("keydown", (ev) => {
    if (ev.key === "Enter") {
      ev.preventDefault();
      submit();
    } else if (ev.key === "ArrowUp") {
      ev.preventDefault();
      if (inputHistory.length === 0) return;
      historyIndex = historyIndex === -1 ? inputHistory.length - 1 : Math.max(0, historyIndex - 1);
      input.value = inputHistory[historyIndex];
    } else if (ev.key === "ArrowDown") {
      ev.preventDefault();
      if (historyIndex === -1) return;
      historyIndex += 1;
      if (historyIndex >= inputHistory.length) {
        historyIndex = -1;
        input.value = "";
      } else {
        input.value = inputHistory[historyIndex];
      }
    }
  });

  byId("refresh-sessions").addEventListener("click", () => void refreshSessions());
}

wireForm();
void refreshSessions();
render();
