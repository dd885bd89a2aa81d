"""Target selection: the pluggable reasoning seat in the replanning loop.

Three interchangeable implementations sit behind one callable shape:
the exact oracle, a fault-injecting wrapper around any inner selector
(for ablation studies), and a remote chat-completion adapter (see remote.py).
Selectors are synchronous and stateless; retries, feedback accumulation, and
caps belong exclusively to the engine.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .errors import NoFeasibleTarget
from .lang import ParsedInstruction
from .scene import Observation, v_dot, v_sub
from .targets import CandidateSet, GraspCandidate, ToolCandidate

# Rejected target ids are carried inside feedback text in this fixed shape so
# any reasoner (oracle or remote) can recover them from the context alone.
_TARGET_REF = re.compile(r"target '([^']+)'")


@dataclass(frozen=True)
class Feedback:
    """One correction-model utterance appended to the reasoning context."""

    kind: str  # "logic" | "physical"
    message: str
    issued_at_step: int

    def __post_init__(self) -> None:
        if self.kind not in ("logic", "physical"):
            raise ValueError(f"unknown feedback kind {self.kind!r}")
        if not self.message:
            raise ValueError("feedback message must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "message": self.message, "issued_at_step": self.issued_at_step}


@dataclass(frozen=True)
class ReasoningContext:
    """The active instruction plus accumulated correction feedback.

    Rebuilt from scratch for every instruction; feedback is append-only within
    one replanning loop. `history` carries prior action summaries only when the
    scenario opts in; the oracle ignores it.
    """

    base_instruction: ParsedInstruction
    feedback: tuple[Feedback, ...] = ()
    turn: int = 0
    history: tuple[str, ...] = ()

    def with_feedback(self, fb: Feedback) -> "ReasoningContext":
        return replace(self, feedback=self.feedback + (fb,))

    def next_turn(self) -> "ReasoningContext":
        return replace(self, turn=self.turn + 1)

    def rejected_ids(self) -> frozenset[str]:
        """Target ids named by any feedback entry, logic or physical."""
        ids: set[str] = set()
        for fb in self.feedback:
            ids.update(_TARGET_REF.findall(fb.message))
        return frozenset(ids)

    def to_dict(self) -> dict[str, Any]:
        return {
            "instruction": self.base_instruction.to_dict(),
            "feedback": [fb.to_dict() for fb in self.feedback],
            "turn": self.turn,
        }


@dataclass(frozen=True)
class Selection:
    """A reasoner's answer: which target, and why.

    Membership in the candidate set is deliberately NOT validated here; that
    is the internal correction model's job.
    """

    target_id: str
    rationale: str

    def to_dict(self) -> dict[str, Any]:
        return {"target_id": self.target_id, "rationale": self.rationale}


@dataclass(frozen=True)
class FaultConfig:
    """Injected reasoner/actuator error rates for ablation experiments.

    p_out_of_set: fabricate a target id absent from the candidate set.
    p_wrong_direction: swap the selection for its mirror candidate.
    p_exec_fail: the engine flags the subsequent execution as a physical no-op
    (drawn by the engine from the same fault stream).
    """

    p_out_of_set: float = 0.0
    p_wrong_direction: float = 0.0
    p_exec_fail: float = 0.0

    def __post_init__(self) -> None:
        for name in ("p_out_of_set", "p_wrong_direction", "p_exec_fail"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p!r}")

    @property
    def enabled(self) -> bool:
        return self.p_out_of_set > 0 or self.p_wrong_direction > 0 or self.p_exec_fail > 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "p_out_of_set": self.p_out_of_set,
            "p_wrong_direction": self.p_wrong_direction,
            "p_exec_fail": self.p_exec_fail,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FaultConfig":
        return cls(
            p_out_of_set=d.get("p_out_of_set", 0.0),
            p_wrong_direction=d.get("p_wrong_direction", 0.0),
            p_exec_fail=d.get("p_exec_fail", 0.0),
        )


FAULTS_OFF = FaultConfig()

SelectFn = Callable[[Observation, ReasoningContext, CandidateSet], Selection]


def _direction_label(instr: ParsedInstruction) -> str:
    assert instr.axis is not None and instr.sign is not None
    return f"{'+' if instr.sign > 0 else '-'}{instr.axis}"


def oracle_select(obs: Observation, ctx: ReasoningContext, cset: CandidateSet) -> Selection:
    """Exact selection under the instruction semantics; deterministic.

    Directional: smallest positive step along the instructed axis*sign (two
    steps when the magnitude is large). Comparative: nearest bit size strictly
    beyond the held tool's. ToolByName: first name containing the fragment.
    Ids named in feedback are never re-selected within the loop; ties break to
    the lowest candidate index.
    """
    instr = ctx.base_instruction
    excluded = ctx.rejected_ids()

    if instr.kind == "directional":
        grasps = [(i, c) for i, c in enumerate(cset.candidates) if isinstance(c, GraspCandidate)]
        if not grasps:
            raise NoFeasibleTarget("directional instruction but no grasp candidates")
        arm = grasps[0][1].arm
        gripper = obs.snapshot.gripper(arm)
        if gripper is None:
            raise NoFeasibleTarget(f"arm {arm!r} not visible in observation")
        want = instr.axis_sign_vector()
        feasible = []
        for i, c in grasps:
            if c.id in excluded:
                continue
            proj = v_dot(v_sub(c.pose.position, gripper.pose.position), want)
            if proj > 1e-12:
                feasible.append((proj, i, c))
        if not feasible:
            raise NoFeasibleTarget(f"no candidate moves along {_direction_label(instr)}")
        feasible.sort(key=lambda t: (t[0], t[1]))
        pick = feasible[min(1, len(feasible) - 1)] if instr.magnitude == "large" else feasible[0]
        proj, _, cand = pick
        steps = "two steps" if instr.magnitude == "large" else "nearest step"
        return Selection(cand.id, f"{steps} along {_direction_label(instr)} ({proj:+.3f} m)")

    if instr.kind == "comparative":
        if cset.current is None:
            raise NoFeasibleTarget("comparative instruction but no current tool to compare against")
        ref = cset.get(cset.current)
        assert isinstance(ref, ToolCandidate)
        pool = [
            (i, c)
            for i, c in enumerate(cset.candidates)
            if isinstance(c, ToolCandidate) and c.id != cset.current and c.id not in excluded
        ]
        if instr.direction == "bigger":
            pool = [(i, c) for i, c in pool if c.tool.bit_size_mm > ref.tool.bit_size_mm]
            pool.sort(key=lambda t: (t[1].tool.bit_size_mm, t[0]))
        else:
            pool = [(i, c) for i, c in pool if c.tool.bit_size_mm < ref.tool.bit_size_mm]
            pool.sort(key=lambda t: (-t[1].tool.bit_size_mm, t[0]))
        if not pool:
            raise NoFeasibleTarget(f"no tool strictly {instr.direction} than {ref.tool.bit_size_mm} mm")
        _, cand = pool[0]
        return Selection(
            cand.id,
            f"nearest bit {instr.direction} than held {ref.tool.bit_size_mm} mm ({cand.tool.bit_size_mm} mm)",
        )

    if instr.kind == "tool_by_name":
        for c in cset.candidates:
            if not isinstance(c, ToolCandidate) or c.id in excluded or c.id == cset.current:
                continue
            if instr.fragment is not None and instr.fragment in c.tool.name:
                return Selection(c.id, f"first tool matching '{instr.fragment}'")
        raise NoFeasibleTarget(f"no available tool matches '{instr.fragment}'")

    raise NoFeasibleTarget(f"cannot act on a {instr.kind!r} instruction")


def _mirror_of(cset: CandidateSet, target_id: str) -> GraspCandidate | None:
    cand = cset.get(target_id)
    if not isinstance(cand, GraspCandidate):
        return None
    for other in cset.candidates:
        if isinstance(other, GraspCandidate) and other.step == -cand.step:
            return other
    return None


def faulty_select(inner: SelectFn, cfg: FaultConfig, rng: random.Random) -> SelectFn:
    """Wrap a selector with seeded hallucination faults.

    Exactly two draws per call, fired or not, so the fault stream stays aligned
    across ablation modes running under one seed. Fabricated ids are derived
    from the context turn, not the stream, for the same reason.
    """

    def select(obs: Observation, ctx: ReasoningContext, cset: CandidateSet) -> Selection:
        u_out = rng.random()
        u_dir = rng.random()
        if u_out < cfg.p_out_of_set:
            fresh = f"target_{ctx.turn}"
            while cset.get(fresh) is not None:
                fresh += "x"
            return Selection(fresh, "selected confidently")
        sel = inner(obs, ctx, cset)
        if u_dir < cfg.p_wrong_direction:
            mirror = _mirror_of(cset, sel.target_id)
            if mirror is not None:
                return Selection(mirror.id, sel.rationale)
        return sel

    return select
