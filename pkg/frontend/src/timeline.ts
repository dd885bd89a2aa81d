// Reducer from the gateway event stream to the view model. Every UI update
// flows through applyEvent; nothing here simulates, it only folds what the
// server said. Event order is preserved: entries and attempts are appended
// exactly in emission order.

import { CandidateSetView, ObservationSummary, SessionEvent } from "./events.js";

export interface VerdictView {
  accepted: boolean;
  feedback: string | null;
}

export interface AttemptView {
  turn: number;
  target: string | null;
  rationale: string | null;
  internal: VerdictView | null;
  action: Record<string, any> | null;
  external: VerdictView | null;
}

export interface InstructionView {
  text: string;
  parsed: Record<string, any> | null;
  pending: boolean; // optimistic entry, not yet confirmed by InstructionReceived
  ackStep: number | null;
  candidates: CandidateSetView | null;
  attempts: AttemptView[];
  feedback: string[]; // accumulated correction messages, shown verbatim
  closed: boolean;
}

export interface TimelineState {
  instructions: InstructionView[];
  outcome: string | null;
  outcomeReason: string | null;
  observation: ObservationSummary | null; // latest reported snapshot
  lastStep: number; // resume cursor: next stream starts at lastStep + 1
  eventCount: number;
}

export function initialTimeline(): TimelineState {
  return {
    instructions: [],
    outcome: null,
    outcomeReason: null,
    observation: null,
    lastStep: -1,
    eventCount: 0,
  };
}

export function addPendingInstruction(state: TimelineState, text: string): void {
  state.instructions.push({
    text,
    parsed: null,
    pending: true,
    ackStep: null,
    candidates: null,
    attempts: [],
    feedback: [],
    closed: false,
  });
}

function currentInstruction(state: TimelineState): InstructionView | null {
  for (let i = state.instructions.length - 1; i >= 0; i--) {
    if (!state.instructions[i].pending) return state.instructions[i];
  }
  return null;
}

function currentAttempt(state: TimelineState): AttemptView | null {
  const instr = currentInstruction(state);
  if (!instr || instr.attempts.length === 0) return null;
  return instr.attempts[instr.attempts.length - 1];
}

function resolveInstruction(state: TimelineState, ev: SessionEvent): void {
  for (const instr of state.instructions) {
    if (instr.pending && !instr.closed) instr.closed = true; // superseded pendings
  }
  const open = currentInstruction(state);
  if (open) open.closed = true;

  // resolve the oldest matching optimistic entry, else append
  const pending = state.instructions.find((i) => i.pending && i.text === ev.payload.text);
  const entry: InstructionView = pending ?? {
    text: ev.payload.text,
    parsed: null,
    pending: true,
    ackStep: null,
    candidates: null,
    attempts: [],
    feedback: [],
    closed: false,
  };
  if (!pending) state.instructions.push(entry);
  entry.pending = false;
  entry.closed = false;
  entry.ackStep = ev.step;
  entry.parsed = ev.payload.parsed ?? null;
  entry.candidates = ev.payload.candidates ?? null;
}

export function applyEvent(state: TimelineState, ev: SessionEvent): TimelineState {
  state.lastStep = ev.step;
  state.eventCount += 1;

  switch (ev.kind) {
    case "InstructionReceived": {
      resolveInstruction(state, ev);
      if (ev.payload.observation) state.observation = ev.payload.observation;
      break;
    }
    case "TargetSelected": {
      const instr = currentInstruction(state);
      if (instr) {
        instr.attempts.push({
          turn: ev.payload.turn ?? instr.attempts.length + 1,
          target: ev.payload.target_id ?? null,
          rationale: ev.payload.rationale ?? null,
          internal: null,
          action: null,
          external: null,
        });
      }
      break;
    }
    case "InternalVerdict": {
      const attempt = currentAttempt(state);
      if (attempt) {
        attempt.internal = {
          accepted: ev.payload.verdict === "accept",
          feedback: ev.payload.feedback ?? null,
        };
      }
      break;
    }
    case "ActionExecuted": {
      const attempt = currentAttempt(state);
      if (attempt) attempt.action = ev.payload.action ?? null;
      if (ev.payload.observation) state.observation = ev.payload.observation;
      break;
    }
    case "ExternalVerdict": {
      const attempt = currentAttempt(state);
      if (attempt) {
        attempt.external = {
          accepted: ev.payload.verdict === "accept",
          feedback: ev.payload.feedback ?? null,
        };
      }
      break;
    }
    case "FeedbackAppended": {
      const instr = currentInstruction(state);
      if (instr) instr.feedback.push(ev.payload.message);
      break;
    }
    case "SessionEnded": {
      state.outcome = ev.payload.outcome ?? null;
      state.outcomeReason = ev.payload.reason ?? null;
      const instr = currentInstruction(state);
      if (instr) instr.closed = true;
      break;
    }
    default:
      break; // forward compatible: unknown kinds still advance the cursor
  }
  return state;
}

// An instruction re-selected when it had a current target and picked a
// different one: the replanning move the timeline is meant to surface.
export function countReselections(state: TimelineState): number {
  let n = 0;
  for (const instr of state.instructions) {
    const current = instr.candidates?.current;
    if (!current) continue;
    if (instr.attempts.some((a) => a.target !== null && a.target !== current)) n += 1;
  }
  return n;
}

export function rejectCount(state: TimelineState): number {
  let n = 0;
  for (const instr of state.instructions) {
    for (const a of instr.attempts) {
      if (a.internal && !a.internal.accepted) n += 1;
      if (a.external && !a.external.accepted) n += 1;
    }
  }
  return n;
}
