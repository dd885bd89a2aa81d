import { describe, expect, it } from "vitest";
import { CandidateSetView, ObservationSummary } from "../src/events.js";
import { buildScene, placeMarks } from "../src/scene.js";

const OBS: ObservationSummary = {
  grippers: {
    left: {
      position: [0.1, 0.5, -0.2],
      held: { kind: "tool", tool: { name: "hex_driver_2mm", bit_kind: "hex", bit_size_mm: 2 }, from_slot: 1 },
    },
    right: { position: [-0.3, 0.5, 0.0], held: null },
  },
  slots: [
    { id: 1, tool: null },
    { id: 2, tool: "hex_driver_2p5mm" },
  ],
  step: 3,
  corrupted: ["gripper:left"],
};

const GRASPS: CandidateSetView = {
  kind: "grasp",
  current: "beam_x@+0.050",
  lattice_spacing_m: 0.05,
  candidates: [
    {
      id: "beam_x@+0.050",
      kind: "grasp",
      arm: "left",
      frame_id: "beam_x",
      step: 1,
      pose: { position: [0.05, 0.4, 0.1], orientation: [0, 0, 0, 1] },
    },
    {
      id: "beam_x@-0.050",
      kind: "grasp",
      arm: "left",
      frame_id: "beam_x",
      step: -1,
      pose: { position: [-0.05, 0.4, 0.1], orientation: [0, 0, 0, 1] },
    },
  ],
};

describe("buildScene", () => {
  it("projects grasp candidates onto x–z and flags the current member", () => {
    const model = buildScene(OBS, GRASPS);
    const current = model.marks.find((m) => m.kind === "current");
    const candidate = model.marks.find((m) => m.kind === "candidate");
    expect(current?.label).toBe("beam_x@+0.050");
    expect(current?.x).toBeCloseTo(0.05);
    expect(current?.z).toBeCloseTo(0.1);
    expect(candidate?.label).toBe("beam_x@-0.050");
  });

  it("labels grippers with what they hold", () => {
    const model = buildScene(OBS, null);
    const left = model.marks.find((m) => m.kind === "gripper" && m.label.startsWith("left"));
    const right = model.marks.find((m) => m.kind === "gripper" && m.label.startsWith("right"));
    expect(left?.label).toContain("hex_driver_2mm");
    expect(right?.label).toContain("empty");
  });

  it("lays slots out in a rack row and highlights the selected tool's home slot", () => {
    const model = buildScene(OBS, null, "tool_2");
    const slots = model.marks.filter((m) => m.kind === "slot");
    expect(slots).toHaveLength(2);
    expect(slots[0].z).toBe(slots[1].z);
    expect(slots[0].x).toBeLessThan(slots[1].x);
    expect(slots.find((s) => s.label.startsWith("2"))?.highlight).toBe(true);
    expect(slots.find((s) => s.label.startsWith("1"))?.highlight).toBe(false);
    expect(slots.find((s) => s.label.startsWith("1"))?.label).toContain("—");
  });

  it("propagates corrupted field names", () => {
    expect(buildScene(OBS, null).corrupted).toEqual(["gripper:left"]);
    expect(buildScene(null, GRASPS).corrupted).toEqual([]);
  });
});

describe("placeMarks", () => {
  it("maps +x to the right and +z downward with a uniform scale", () => {
    const model = buildScene(OBS, GRASPS);
    const placed = placeMarks(model, 500, 400);
    const byLabel = new Map(placed.map((m) => [m.label, m]));
    const plus = byLabel.get("beam_x@+0.050")!;
    const minus = byLabel.get("beam_x@-0.050")!;
    expect(plus.px).toBeGreaterThan(minus.px);
    const slotMark = placed.find((m) => m.kind === "slot")!;
    const gripper = placed.find((m) => m.label.startsWith("left"))!;
    expect(slotMark.py).toBeGreaterThan(gripper.py); // rack row is at larger z
  });

  it("keeps every mark inside the margins", () => {
    const model = buildScene(OBS, GRASPS);
    for (const m of placeMarks(model, 500, 400, 30)) {
      expect(m.px).toBeGreaterThanOrEqual(30 - 1e-9);
      expect(m.px).toBeLessThanOrEqual(470 + 1e-9);
      expect(m.py).toBeGreaterThanOrEqual(30 - 1e-9);
      expect(m.py).toBeLessThanOrEqual(370 + 1e-9);
    }
  });

  it("returns nothing for an empty model", () => {
    expect(placeMarks({ marks: [], corrupted: [] }, 100, 100)).toEqual([]);
  });
});
