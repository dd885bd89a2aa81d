// Wire types for gateway responses and the NDJSON event stream. These mirror
// the JSON the server emits; the console never invents fields of its own.

export interface SessionEvent {
  step: number;
  kind: string;
  payload: Record<string, any>;
  wall_ms?: number;
}

export interface SessionHandle {
  id: string;
  created_at: string;
  scenario: string;
  mode: string;
  seed: number;
  phase: string;
  outcome: string | null;
}

export interface InstructionAck {
  queued: boolean;
  step?: number;
  queue_position?: number;
}

export interface GatewayError {
  code: string;
  message: string;
}

export interface HeldItemView {
  kind: "tool" | "grasp";
  tool?: { name: string; bit_kind: string; bit_size_mm: number };
  from_slot?: number;
  frame_id?: string;
  target_id?: string;
}

export interface ObservationSummary {
  grippers: Record<string, { position: [number, number, number]; held: HeldItemView | null }>;
  slots: { id: number; tool: string | null }[];
  step: number;
  corrupted: string[];
}

export interface CandidateView {
  id: string;
  kind: "grasp" | "tool";
  // grasp candidates
  arm?: string;
  frame_id?: string;
  step?: number;
  pose?: { position: [number, number, number]; orientation: [number, number, number, number] };
  // tool candidates
  slot?: number;
  tool?: { name: string; bit_kind: string; bit_size_mm: number };
}

export interface CandidateSetView {
  kind: string;
  current: string | null;
  lattice_spacing_m: number | null;
  candidates: CandidateView[];
}

export interface StateSnapshot {
  id: string;
  phase: string;
  outcome: string | null;
  observation: ObservationSummary;
  candidates: CandidateSetView | null;
  context: Record<string, any> | null;
  counters: { logic_rejects: number; phys_rejects: number };
  events: number;
}
