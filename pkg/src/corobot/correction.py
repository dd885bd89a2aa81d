"""The dual correction models.

Internal: a pre-execution filter over the selection itself — membership in the
candidate set (format), then directional or comparative consistency against
the current observation (semantics). External: a post-execution verifier that
compares the observations before and after acting against the expected state
transition. Both only ever Accept or Reject-with-feedback; neither raises.

Both operate strictly on observations, never on true state, so a corrupted
snapshot produces an honest false negative downstream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

from .lang import ParsedInstruction
from .reasoner import Feedback, Selection
from .scene import Observation, Vec3, WorkcellState, diff, v_dot, v_norm, v_sub
from .targets import CandidateSet, GraspCandidate, ToolCandidate


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    feedback: Feedback | None = None

    def __post_init__(self) -> None:
        if not self.accepted and (self.feedback is None or not self.feedback.message):
            raise ValueError("a rejection must carry non-empty feedback")

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(accepted=True)

    @classmethod
    def reject(cls, kind: str, message: str, step: int) -> "Verdict":
        return cls(accepted=False, feedback=Feedback(kind=kind, message=message, issued_at_step=step))

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdict": "accept" if self.accepted else "reject",
            "feedback": self.feedback.message if self.feedback else None,
        }


@dataclass(frozen=True)
class ExpectedDelta:
    """The state transition an accepted selection commits the robot to."""

    kind: str  # "gripper_move" | "tool_acquired" | "tool_returned" | "no_expectation"
    arm: str | None = None
    direction: Vec3 | None = None
    min_displacement_m: float | None = None
    tool_name: str | None = None

    def __post_init__(self) -> None:
        if self.min_displacement_m is not None and not self.min_displacement_m > 0:
            raise ValueError("min displacement must be positive where present")

    @classmethod
    def gripper_move(cls, arm: str, direction: Vec3, min_displacement_m: float) -> "ExpectedDelta":
        return cls(kind="gripper_move", arm=arm, direction=direction, min_displacement_m=min_displacement_m)

    @classmethod
    def tool_acquired(cls, tool_name: str) -> "ExpectedDelta":
        return cls(kind="tool_acquired", tool_name=tool_name)

    @classmethod
    def tool_returned(cls, tool_name: str) -> "ExpectedDelta":
        return cls(kind="tool_returned", tool_name=tool_name)

    @classmethod
    def none(cls) -> "ExpectedDelta":
        return cls(kind="no_expectation")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.kind == "gripper_move":
            out |= {
                "arm": self.arm,
                "direction": list(self.direction or ()),
                "min_displacement_m": self.min_displacement_m,
            }
        elif self.kind in ("tool_acquired", "tool_returned"):
            out |= {"tool_name": self.tool_name}
        return out


def internal_check(obs: Observation, sel: Selection, instr: ParsedInstruction, cset: CandidateSet) -> Verdict:
    """Pre-execution filter: format first, then semantic consistency.

    Out-of-set selections are always rejected. Directional instructions reject
    grasp targets whose offset from the observed gripper projects non-positively
    onto the instructed axis*sign; comparatives reject tools on the wrong side
    of the held bit size. Unknown instructions are not second-guessed.
    """
    step = obs.captured_at_step
    cand = cset.get(sel.target_id)
    if cand is None:
        return Verdict.reject("logic", f"LOGIC: target '{sel.target_id}' is not among the offered candidates", step)

    if instr.kind == "directional" and isinstance(cand, GraspCandidate):
        gripper = obs.snapshot.gripper(cand.arm)
        if gripper is not None:
            offset = v_sub(cand.pose.position, gripper.pose.position)
            if v_dot(offset, instr.axis_sign_vector()) <= 0:
                return Verdict.reject(
                    "logic", f"LOGIC: target '{sel.target_id}' moves opposite to the instructed direction", step
                )

    if instr.kind == "comparative" and isinstance(cand, ToolCandidate) and cset.current is not None:
        ref = cset.get(cset.current)
        if isinstance(ref, ToolCandidate):
            wrong_way = (
                cand.tool.bit_size_mm <= ref.tool.bit_size_mm
                if instr.direction == "bigger"
                else cand.tool.bit_size_mm >= ref.tool.bit_size_mm
            )
            if wrong_way:
                return Verdict.reject(
                    "logic",
                    f"LOGIC: target '{sel.target_id}' is {cand.tool.bit_size_mm} mm, "
                    f"not {instr.direction} than the held {ref.tool.bit_size_mm} mm",
                    step,
                )

    return Verdict.accept()


def _tool_location(snapshot: WorkcellState, name: str) -> tuple[bool, bool]:
    in_slot = any(s.tool is not None and s.tool.name == name for s in snapshot.tool_stand)
    held = any(
        g.held is not None and g.held.kind == "tool" and g.held.tool is not None and g.held.tool.name == name
        for g in snapshot.grippers
    )
    return in_slot, held


def external_check(pre: Observation, post: Observation, instr: ParsedInstruction, expected: ExpectedDelta) -> Verdict:
    """Post-execution verifier: did the expected transition visibly occur?

    Decides purely from the two observations. A displacement is accepted when
    its projection onto the instructed direction reaches the minimum; a tool
    acquisition when the tool has left its slot and sits in a gripper.
    """
    step = post.captured_at_step

    if expected.kind == "no_expectation":
        return Verdict.accept()

    if expected.kind == "gripper_move":
        assert expected.arm is not None and expected.direction is not None and expected.min_displacement_m is not None
        delta = diff(pre, post)
        disp = delta.gripper_move(expected.arm)
        if v_norm(disp) == 0.0:
            return Verdict.reject("physical", "PHYS: no pose change detected after execution", step)
        if v_dot(disp, expected.direction) < expected.min_displacement_m - 1e-12:
            return Verdict.reject("physical", "PHYS: movement did not follow the instructed direction", step)
        return Verdict.accept()

    assert expected.tool_name is not None
    in_slot, held = _tool_location(post.snapshot, expected.tool_name)
    if expected.kind == "tool_acquired":
        if in_slot:
            return Verdict.reject("physical", f"PHYS: tool '{expected.tool_name}' is still in its slot", step)
        if not held:
            return Verdict.reject("physical", f"PHYS: tool '{expected.tool_name}' is not in the gripper", step)
        return Verdict.accept()

    # tool_returned
    if held:
        return Verdict.reject("physical", f"PHYS: tool '{expected.tool_name}' is still in the gripper", step)
    if not in_slot:
        return Verdict.reject("physical", f"PHYS: tool '{expected.tool_name}' did not reappear in a slot", step)
    return Verdict.accept()


def expected_delta_for(instr: ParsedInstruction, sel: Selection, cset: CandidateSet) -> ExpectedDelta:
    """Derive the committed transition from an accepted selection.

    Directional grasps must move the gripper at least half a lattice step along
    the instructed direction; tool selections must be acquired; anything else
    carries no expectation.
    """
    cand = cset.get(sel.target_id)
    if isinstance(cand, ToolCandidate):
        return ExpectedDelta.tool_acquired(cand.tool.name)
    if isinstance(cand, GraspCandidate) and instr.kind == "directional":
        assert cset.lattice_spacing_m is not None
        return ExpectedDelta.gripper_move(cand.arm, instr.axis_sign_vector(), cset.lattice_spacing_m / 2)
    return ExpectedDelta.none()


# Interchangeable implementations (deterministic or remote adapters) must
# match these shapes; the engine calls through them without caring which.
InternalCheckFn = Callable[[Observation, Selection, ParsedInstruction, CandidateSet], Verdict]
ExternalCheckFn = Callable[[Observation, Observation, ParsedInstruction, ExpectedDelta], Verdict]
