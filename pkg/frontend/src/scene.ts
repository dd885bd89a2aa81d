// Top-down schematic of the workcell: the x–z plane viewed from above, with
// height (y) reported in labels only. Pure data transforms — rendering is in
// render.ts, and nothing here simulates the cell.

import { CandidateSetView, HeldItemView, ObservationSummary } from "./events.js";

export interface SceneMark {
  kind: "gripper" | "candidate" | "current" | "slot";
  x: number; // workcell x (meters)
  z: number; // workcell z (meters)
  label: string;
  detail: string;
  highlight: boolean;
}

export interface SceneModel {
  marks: SceneMark[];
  corrupted: string[];
}

// The observation does not position the tool stand, so slots get a fixed
// schematic rack row near the front edge of the drawing.
const RACK_Z = 0.45;
const RACK_X0 = -0.25;
const RACK_DX = 0.1;

function describeHeld(held: HeldItemView | null): string {
  if (!held) return "empty";
  if (held.kind === "tool" && held.tool) {
    return `${held.tool.name} (${held.tool.bit_kind} ${held.tool.bit_size_mm} mm)`;
  }
  if (held.kind === "grasp") return `grasp ${held.target_id ?? held.frame_id ?? ""}`.trim();
  return held.kind;
}

export function buildScene(
  observation: ObservationSummary | null,
  candidates: CandidateSetView | null,
  selectedId: string | null = null,
): SceneModel {
  const marks: SceneMark[] = [];
  const corrupted = observation ? observation.corrupted : [];

  if (candidates) {
    for (const cand of candidates.candidates) {
      if (!cand.pose) continue; // tool candidates live on the rack row below
      const [x, y, z] = cand.pose.position;
      const isCurrent = candidates.current !== null && cand.id === candidates.current;
      marks.push({
        kind: isCurrent ? "current" : "candidate",
        x,
        z,
        label: cand.id,
        detail: `${cand.id} at x=${x.toFixed(3)} y=${y.toFixed(3)} z=${z.toFixed(3)}`,
        highlight: selectedId === cand.id,
      });
    }
  }

  if (observation) {
    for (const [arm, g] of Object.entries(observation.grippers)) {
      const [x, y, z] = g.position;
      const held = describeHeld(g.held);
      marks.push({
        kind: "gripper",
        x,
        z,
        label: `${arm}: ${held}`,
        detail: `${arm} gripper at x=${x.toFixed(3)} y=${y.toFixed(3)} z=${z.toFixed(3)}, holding ${held}`,
        highlight: false,
      });
    }
    observation.slots.forEach((slot, i) => {
      marks.push({
        kind: "slot",
        x: RACK_X0 + i * RACK_DX,
        z: RACK_Z,
        label: slot.tool ? `${slot.id}: ${slot.tool}` : `${slot.id}: —`,
        detail: slot.tool ? `slot ${slot.id} holds ${slot.tool}` : `slot ${slot.id} is empty`,
        highlight: selectedId === `tool_${slot.id}`,
      });
    });
  }

  return { marks, corrupted };
}

export interface PlacedMark extends SceneMark {
  px: number;
  py: number;
}

// Uniform-scale fit of workcell x–z into a pixel box: +x to the right,
// +z downward (toward the viewer's front).
export function placeMarks(
  model: SceneModel,
  width: number,
  height: number,
  margin = 30,
): PlacedMark[] {
  if (model.marks.length === 0) return [];
  const xs = model.marks.map((m) => m.x);
  const zs = model.marks.map((m) => m.z);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minZ = Math.min(...zs);
  const maxZ = Math.max(...zs);
  const spanX = Math.max(maxX - minX, 1e-6);
  const spanZ = Math.max(maxZ - minZ, 1e-6);
  const scale = Math.min((width - 2 * margin) / spanX, (height - 2 * margin) / spanZ);
  const offX = (width - scale * spanX) / 2;
  const offY = (height - scale * spanZ) / 2;
  return model.marks.map((m) => ({
    ...m,
    px: offX + (m.x - minX) * scale,
    py: offY + (m.z - minZ) * scale,
  }));
}
