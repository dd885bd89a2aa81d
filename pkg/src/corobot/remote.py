"""Remote model adapters: selection and verdicts over a chat-completion API.

These are drop-in implementations of the same callable shapes the engine
already accepts (SelectFn, InternalCheckFn, ExternalCheckFn); retries and
loops stay in the engine. Prompt templates live as versioned text assets in
corobot/prompts; scene images are replaced by fenced scene-description
blocks. A reply that violates the output grammar raises MalformedReply,
which the engine surfaces as a format halt; wire problems raise
TransportError.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from importlib import resources

import httpx

from .correction import ExpectedDelta, ExternalCheckFn, InternalCheckFn, Verdict
from .errors import MalformedReply, TransportError
from .lang import ParsedInstruction
from .reasoner import ReasoningContext, SelectFn, Selection
from .scene import Observation
from .targets import CandidateSet, GraspCandidate, ToolCandidate

_QUOTES = "'\"‘’“”"


@dataclass(frozen=True)
class EndpointConfig:
    """Where and how to reach the chat-completion endpoint.

    The auth token is read from the environment at call time so configs can
    be checked into scenario files without leaking secrets.
    """

    base_url: str
    model: str
    api_key_env: str = "COROBOT_API_KEY"
    timeout_s: float = 30.0


def load_template(name: str) -> str:
    return resources.files("corobot").joinpath("prompts").joinpath(name).read_text()


# --- prompt rendering ----------------------------------------------------------


def _scene_block(obs: Observation) -> str:
    return json.dumps(obs.summary(), sort_keys=True, indent=2)


def _candidate_line(cand: GraspCandidate | ToolCandidate) -> str:
    if isinstance(cand, GraspCandidate):
        pos = ", ".join(f"{v:.3f}" for v in cand.pose.position)
        quat = ", ".join(f"{v:.3f}" for v in cand.pose.orientation)
        return f"{cand.id} (position [{pos}], orientation [{quat}])"
    return f"{cand.id} ({cand.tool.name}, {cand.tool.bit_kind} {cand.tool.bit_size_mm:g} mm)"


def _candidates_text(cset: CandidateSet) -> str:
    return "[" + "; ".join(_candidate_line(c) for c in cset.candidates) + "]"


def _feedback_text(ctx: ReasoningContext) -> str:
    if not ctx.feedback:
        return "(none)"
    return "\n".join(f"  - {fb.message}" for fb in ctx.feedback)


def render_select_prompt(obs: Observation, ctx: ReasoningContext, cset: CandidateSet) -> str:
    return load_template("select.txt").format(
        instruction=ctx.base_instruction.raw,
        current=cset.current or "(none)",
        candidates=_candidates_text(cset),
        scene=_scene_block(obs),
        feedback=_feedback_text(ctx),
    )


def render_internal_prompt(
    obs: Observation, sel: Selection, instr: ParsedInstruction, cset: CandidateSet
) -> str:
    return load_template("internal_check.txt").format(
        scene=_scene_block(obs),
        target=sel.target_id,
        rationale=sel.rationale,
        instruction=instr.raw,
        candidates=_candidates_text(cset),
    )


def _describe_expected(expected: ExpectedDelta) -> str:
    if expected.kind == "gripper_move":
        axis = "xyz"[expected.direction.index(next(v for v in expected.direction if v))]
        sign = "+" if sum(expected.direction) > 0 else "-"
        return (
            f"the {expected.arm} gripper moves at least "
            f"{expected.min_displacement_m * 1000:.0f} mm along {sign}{axis}"
        )
    if expected.kind == "tool_acquired":
        return f"the tool '{expected.tool_name}' leaves its slot and ends up in the gripper"
    if expected.kind == "tool_returned":
        return f"the tool '{expected.tool_name}' leaves the gripper and reappears in a slot"
    return "no specific state change"


def render_external_prompt(
    pre: Observation, post: Observation, instr: ParsedInstruction, expected: ExpectedDelta
) -> str:
    return load_template("external_check.txt").format(
        scene_before=_scene_block(pre),
        scene_after=_scene_block(post),
        instruction=instr.raw,
        expected=_describe_expected(expected),
    )


# --- reply grammar -------------------------------------------------------------


def parse_select_reply(text: str) -> Selection:
    """First line: the target id. A later line "Reason: '...'" carries the rationale."""
    lines = [line.strip() for line in text.strip().splitlines() if line.strip()]
    if not lines:
        raise MalformedReply("empty reply")
    target = lines[0]
    if not target or any(ch.isspace() for ch in target):
        raise MalformedReply(f"first line is not a bare target id: {lines[0]!r}")
    for line in lines[1:]:
        if line.startswith("Reason:"):
            rationale = line[len("Reason:") :].strip().strip(_QUOTES)
            return Selection(target_id=target, rationale=rationale)
    raise MalformedReply("reply has no Reason line")


def parse_verdict_reply(text: str, kind: str, step: int) -> Verdict:
    """First token YES/NO; for NO the remainder is the feedback text."""
    parts = text.strip().split(None, 1)
    if not parts:
        raise MalformedReply("empty reply")
    head = parts[0]
    if head == "YES":
        return Verdict.accept()
    if head == "NO":
        if len(parts) < 2 or not parts[1].strip():
            raise MalformedReply("NO verdict carries no explanation")
        message = parts[1].strip()
        prefix = "LOGIC:" if kind == "logic" else "PHYS:"
        if not message.startswith(prefix):
            message = f"{prefix} {message}"
        return Verdict.reject(kind, message, step)
    raise MalformedReply(f"verdict must start with YES or NO, got {head!r}")


# --- transport -----------------------------------------------------------------


def chat(cfg: EndpointConfig, prompt: str, transport: httpx.BaseTransport | None = None) -> str:
    """One blocking chat-completion round trip; returns the reply content.

    A fresh connection per call keeps concurrent sessions independent.
    """
    headers = {}
    token = os.environ.get(cfg.api_key_env, "")
    if token:
        headers["authorization"] = f"Bearer {token}"
    body = {"model": cfg.model, "messages": [{"role": "user", "content": prompt}]}
    try:
        with httpx.Client(base_url=cfg.base_url, timeout=cfg.timeout_s, transport=transport) as client:
            resp = client.post("/chat/completions", json=body, headers=headers)
    except httpx.HTTPError as e:
        raise TransportError(f"chat endpoint unreachable: {e}") from e
    if resp.status_code // 100 != 2:
        raise TransportError(f"chat endpoint returned {resp.status_code}")
    try:
        return resp.json()["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError, ValueError) as e:
        raise TransportError(f"chat reply envelope is malformed: {e}") from e


# --- adapter factories ----------------------------------------------------------


def remote_select(cfg: EndpointConfig, transport: httpx.BaseTransport | None = None) -> SelectFn:
    def select(obs: Observation, ctx: ReasoningContext, cset: CandidateSet) -> Selection:
        return parse_select_reply(chat(cfg, render_select_prompt(obs, ctx, cset), transport))

    return select


def remote_internal_check(
    cfg: EndpointConfig, transport: httpx.BaseTransport | None = None
) -> InternalCheckFn:
    def check(obs: Observation, sel: Selection, instr: ParsedInstruction, cset: CandidateSet) -> Verdict:
        reply = chat(cfg, render_internal_prompt(obs, sel, instr, cset), transport)
        return parse_verdict_reply(reply, "logic", obs.captured_at_step)

    return check


def remote_external_check(
    cfg: EndpointConfig, transport: httpx.BaseTransport | None = None
) -> ExternalCheckFn:
    def check(pre: Observation, post: Observation, instr: ParsedInstruction, expected: ExpectedDelta) -> Verdict:
        reply = chat(cfg, render_external_prompt(pre, post, instr, expected), transport)
        return parse_verdict_reply(reply, "physical", post.captured_at_step)

    return check
