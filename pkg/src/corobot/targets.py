"""Candidate action targets: a deterministic parametric sampler.

Grasp candidates form a lattice along a frame's axis, centered on the arm's
current grasp point; tool candidates mirror the stand. Ids are a pure function
of the lattice index or home slot, so regeneration with the same inputs yields
the same set and event logs stay replayable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Union

from .errors import NotAGraspTarget, UnknownFrame, UnresolvableTarget
from .scene import Pose, ToolSpec, Vec3, WorkcellState, v_add, v_scale, v_sub


@dataclass(frozen=True)
class GraspCandidate:
    """A grasp pose on a frame, `step` lattice steps from the generation center."""

    id: str
    arm: str
    frame_id: str
    pose: Pose
    step: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "kind": "grasp",
            "arm": self.arm,
            "frame_id": self.frame_id,
            "pose": self.pose.to_dict(),
            "step": self.step,
        }


@dataclass(frozen=True)
class ToolCandidate:
    """A screwdriver addressed by its home slot (held tools keep their home id)."""

    id: str
    slot_id: int
    tool: ToolSpec

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "kind": "tool", "slot": self.slot_id, "tool": self.tool.to_dict()}


ActionTarget = Union[GraspCandidate, ToolCandidate]


@dataclass(frozen=True)
class CandidateSet:
    """Ordered action targets offered to the selection model."""

    candidates: tuple[ActionTarget, ...]
    current: str | None = None
    kind: str = "grasp"  # "grasp" | "tool"
    lattice_spacing_m: float | None = None

    def __post_init__(self) -> None:
        ids = [c.id for c in self.candidates]
        if len(ids) != len(set(ids)):
            raise ValueError("candidate ids must be unique within a set")
        if self.current is not None and self.current not in ids:
            raise ValueError(f"current id {self.current!r} is not a member")

    def ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.candidates)

    def get(self, target_id: str) -> ActionTarget | None:
        for c in self.candidates:
            if c.id == target_id:
                return c
        return None

    def __len__(self) -> int:
        return len(self.candidates)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "current": self.current,
            "lattice_spacing_m": self.lattice_spacing_m,
            "candidates": [c.to_dict() for c in self.candidates],
        }


def generate_grasp_candidates(
    state: WorkcellState,
    frame_id: str,
    spacing_m: float,
    count_per_side: int,
    arm: str = "left",
) -> CandidateSet:
    """Lattice of grasp poses at ±k·spacing along the frame axis.

    Centered on the arm's current grasp point; orientations copy the frame's
    canonical grasp orientation. Negative offsets come first, ascending, with
    ids like grasp_-2, grasp_-1, grasp_+1, grasp_+2.
    """
    frame = state.frame(frame_id)
    if frame is None:
        raise UnknownFrame(f"no frame {frame_id!r} in workcell")
    gripper = state.gripper(arm)
    if gripper is None:
        raise UnresolvableTarget(f"unknown arm {arm!r}")
    if spacing_m <= 0:
        raise ValueError(f"spacing must be positive, got {spacing_m!r}")
    if count_per_side < 1:
        raise ValueError(f"count per side must be >= 1, got {count_per_side!r}")

    center = gripper.pose.position
    steps = list(range(-count_per_side, 0)) + list(range(1, count_per_side + 1))
    candidates = tuple(
        GraspCandidate(
            id=f"grasp_{k:+d}",
            arm=arm,
            frame_id=frame_id,
            pose=Pose(v_add(center, v_scale(frame.axis, k * spacing_m)), frame.base_pose.orientation),
            step=k,
        )
        for k in steps
    )
    return CandidateSet(candidates=candidates, current=None, kind="grasp", lattice_spacing_m=spacing_m)


def generate_tool_candidates(state: WorkcellState) -> CandidateSet:
    """One ToolCandidate per tool in the cell, ordered by home slot id.

    A held tool stays addressable under its home slot's id and becomes the
    set's `current` member, so comparative instructions have a reference.
    """
    entries: list[ToolCandidate] = []
    for s in state.tool_stand:
        if s.tool is not None:
            entries.append(ToolCandidate(id=f"tool_{s.slot_id}", slot_id=s.slot_id, tool=s.tool))
    current = None
    for g in state.grippers:
        if g.held is not None and g.held.kind == "tool" and g.held.tool is not None:
            cand = ToolCandidate(id=f"tool_{g.held.from_slot}", slot_id=g.held.from_slot, tool=g.held.tool)
            entries.append(cand)
            if current is None:
                current = cand.id
    entries.sort(key=lambda c: c.slot_id)
    return CandidateSet(candidates=tuple(entries), current=current, kind="tool")


def candidate_offset(cset: CandidateSet, from_id: str, to_id: str) -> Vec3:
    """Position delta between two grasp candidates, to − from."""
    src = cset.get(from_id)
    dst = cset.get(to_id)
    if src is None or dst is None:
        missing = from_id if src is None else to_id
        raise UnresolvableTarget(f"no candidate {missing!r} in set")
    if not isinstance(src, GraspCandidate) or not isinstance(dst, GraspCandidate):
        raise NotAGraspTarget("offsets are defined for grasp candidates only")
    return v_sub(dst.pose.position, src.pose.position)
