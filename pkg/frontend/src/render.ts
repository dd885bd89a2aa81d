// DOM and SVG construction. No state lives here: every render function maps
// view-model data to elements and returns them.

import { PlacedMark, SceneModel, placeMarks } from "./scene.js";
import { AttemptView, InstructionView, TimelineState } from "./timeline.js";

const SVG_NS = "http://www.w3.org/2000/svg";

export function el(
  tag: string,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = [],
): HTMLElement {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  for (const child of children) node.append(child);
  return node;
}

function svgel(tag: string, attrs: Record<string, string> = {}): SVGElement {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function verdictBadge(label: string, accepted: boolean | null): HTMLElement {
  if (accepted === null) return el("span", { class: "badge badge-pending" }, [label]);
  const cls = accepted ? "badge badge-accept" : "badge badge-reject";
  return el("span", { class: cls }, [`${label} ${accepted ? "accept" : "reject"}`]);
}

function describeAction(action: Record<string, any> | null): string {
  if (!action) return "";
  if (action.kind === "swap" && Array.isArray(action.steps)) {
    return action.steps.map((s: Record<string, any>) => s.summary ?? s.kind).join(", then ");
  }
  return (action.summary as string) ?? (action.kind as string) ?? "";
}

function renderAttempt(attempt: AttemptView): HTMLElement {
  const parts: (Node | string)[] = [
    el("span", { class: "attempt-turn" }, [`#${attempt.turn}`]),
    el("span", { class: "attempt-target" }, [attempt.target ?? "?"]),
    verdictBadge("internal", attempt.internal ? attempt.internal.accepted : null),
  ];
  if (attempt.action) parts.push(el("span", { class: "attempt-action" }, [describeAction(attempt.action)]));
  parts.push(verdictBadge("external", attempt.external ? attempt.external.accepted : null));
  if (attempt.rationale) parts.push(el("div", { class: "attempt-rationale" }, [attempt.rationale]));
  return el("li", { class: "attempt" }, parts);
}

function renderInstruction(instr: InstructionView): HTMLElement {
  const headClass = instr.pending ? "instruction pending" : "instruction";
  const children: (Node | string)[] = [
    el("div", { class: "instruction-text" }, [
      instr.pending ? `${instr.text} (pending)` : instr.text,
    ]),
  ];
  if (instr.attempts.length > 0) {
    children.push(el("ul", { class: "attempts" }, instr.attempts.map(renderAttempt)));
  }
  if (instr.feedback.length > 0) {
    // correction feedback is the most important content: shown verbatim
    children.push(
      el("ul", { class: "feedback" }, instr.feedback.map((msg) => el("li", {}, [msg]))),
    );
  }
  return el("li", { class: headClass }, children);
}

export function renderTimeline(state: TimelineState): HTMLElement {
  return el("ul", { class: "timeline" }, state.instructions.map(renderInstruction));
}

export function renderContextPanel(state: TimelineState): HTMLElement {
  const open = [...state.instructions].reverse().find((i) => !i.pending);
  if (!open) return el("div", { class: "context-panel empty" }, ["no instruction yet"]);
  const items = open.feedback.map((msg) => el("li", {}, [msg]));
  return el("div", { class: "context-panel" }, [
    el("div", { class: "context-instruction" }, [open.text]),
    items.length > 0
      ? el("ul", { class: "context-feedback" }, items)
      : el("div", { class: "context-none" }, ["no corrections accumulated"]),
  ]);
}

export function renderOutcomeBanner(state: TimelineState): HTMLElement {
  if (!state.outcome) return el("div", { class: "banner banner-live" }, ["session live"]);
  const ok = state.outcome === "CompletedAllInstructions";
  const cls = ok ? "banner banner-ok" : "banner banner-fail";
  const text = state.outcomeReason ? `${state.outcome}: ${state.outcomeReason}` : state.outcome;
  return el("div", { class: cls }, [text]);
}

const MARK_RADIUS: Record<string, number> = { gripper: 9, candidate: 6, current: 7, slot: 5 };

export function renderScene(model: SceneModel, width = 520, height = 360): SVGElement {
  const svg = svgel("svg", {
    width: String(width),
    height: String(height),
    viewBox: `0 0 ${width} ${height}`,
    class: "scene",
  });
  svg.appendChild(svgel("rect", { x: "0", y: "0", width: String(width), height: String(height), class: "scene-bg" }));

  const axis = svgel("text", { x: "8", y: "16", class: "scene-axes" });
  axis.textContent = "top-down: +x right, +z down (front toward viewer)";
  svg.appendChild(axis);

  for (const mark of placeMarks(model, width, height)) {
    svg.appendChild(renderMark(mark));
  }
  if (model.corrupted.length > 0) {
    const warn = svgel("text", { x: "8", y: String(height - 10), class: "scene-corrupted" });
    warn.textContent = `corrupted fields: ${model.corrupted.join(", ")}`;
    svg.appendChild(warn);
  }
  return svg;
}

function renderMark(mark: PlacedMark): SVGElement {
  const group = svgel("g", { class: `mark mark-${mark.kind}${mark.highlight ? " mark-selected" : ""}` });
  const r = MARK_RADIUS[mark.kind] ?? 6;
  const circle = svgel("circle", { cx: String(mark.px), cy: String(mark.py), r: String(r) });
  const title = svgel("title");
  title.textContent = mark.detail;
  circle.appendChild(title);
  group.appendChild(circle);
  const text = svgel("text", { x: String(mark.px + r + 3), y: String(mark.py + 4), class: "mark-label" });
  text.textContent = mark.label;
  group.appendChild(text);
  return group;
}
