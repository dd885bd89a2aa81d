"""Simulated workcell: state, action application, observation, and state diffs.

The workcell is a value object; every operation is state-in/state-out and a
session owns its own state, so nothing here needs locking. Observations are
structured snapshots (not rendered images) and may be corrupted field-by-field
by a perception noise model: a moved pose can be reported unmoved, a removed
tool can be reported still present. Downstream verification operates on the
observations only, so a corrupted snapshot produces exactly the false-negative
behavior a flaky camera would.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Union

from .errors import ArmOccupied, ConfigError, MismatchedWorkcell, UnresolvableTarget

Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

# Gripper displacements below this are reported as zero by diff(): far below
# the candidate lattice spacing, so one lattice step is never mistaken for jitter.
POSE_EPS_M = 1e-3

QUAT_NORM_TOL = 1e-9

ARMS = ("left", "right")


def canonical_json(obj: Any) -> str:
    """Serialize with sorted keys and no whitespace; event logs depend on it."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def v_add(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def v_sub(a: Vec3, b: Vec3) -> Vec3:
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def v_dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def v_scale(a: Vec3, s: float) -> Vec3:
    return (a[0] * s, a[1] * s, a[2] * s)


def v_norm(a: Vec3) -> float:
    return math.sqrt(v_dot(a, a))


@dataclass(frozen=True)
class Pose:
    """Position in meters plus unit quaternion orientation (qx, qy, qz, qw)."""

    position: Vec3
    orientation: Quat = (0.0, 0.0, 0.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", tuple(float(c) for c in self.position))
        object.__setattr__(self, "orientation", tuple(float(c) for c in self.orientation))
        if len(self.position) != 3 or not all(math.isfinite(c) for c in self.position):
            raise ValueError(f"position must be 3 finite components, got {self.position!r}")
        if len(self.orientation) != 4:
            raise ValueError("orientation must have 4 components (qx, qy, qz, qw)")
        norm = math.sqrt(sum(c * c for c in self.orientation))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {norm!r} not within {QUAT_NORM_TOL} of 1.0")

    def to_dict(self) -> dict[str, Any]:
        return {"position": list(self.position), "orientation": list(self.orientation)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Pose":
        return cls(tuple(d["position"]), tuple(d.get("orientation", (0.0, 0.0, 0.0, 1.0))))


@dataclass(frozen=True)
class ToolSpec:
    """A screwdriver on the stand, identified by name, bit kind, and bit size."""

    name: str
    bit_kind: str  # "hex" | "phillips"
    bit_size_mm: float

    def __post_init__(self) -> None:
        if self.bit_kind not in ("hex", "phillips"):
            raise ValueError(f"unknown bit kind {self.bit_kind!r}")
        if not self.bit_size_mm > 0:
            raise ValueError(f"bit size must be positive, got {self.bit_size_mm!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "bit_kind": self.bit_kind, "bit_size_mm": self.bit_size_mm}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ToolSpec":
        return cls(d["name"], d["bit_kind"], float(d["bit_size_mm"]))


@dataclass(frozen=True)
class FrameObject:
    """An aluminum frame: an axis-aligned bar with a canonical grasp orientation."""

    frame_id: str
    axis: Vec3
    length_m: float
    base_pose: Pose

    def __post_init__(self) -> None:
        axis = tuple(float(c) for c in self.axis)
        norm = v_norm(axis)
        if norm == 0:
            raise ValueError("frame axis must be non-zero")
        object.__setattr__(self, "axis", v_scale(axis, 1.0 / norm))

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.frame_id,
            "axis": list(self.axis),
            "length_m": self.length_m,
            "base_pose": self.base_pose.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FrameObject":
        return cls(d["id"], tuple(d["axis"]), float(d["length_m"]), Pose.from_dict(d["base_pose"]))


@dataclass(frozen=True)
class HeldItem:
    """What a gripper currently holds: a tool (with its home slot) or a frame grasp."""

    kind: str  # "tool" | "grasp"
    tool: ToolSpec | None = None
    from_slot: int | None = None
    frame_id: str | None = None
    target_id: str | None = None

    @classmethod
    def held_tool(cls, tool: ToolSpec, from_slot: int) -> "HeldItem":
        return cls(kind="tool", tool=tool, from_slot=from_slot)

    @classmethod
    def held_grasp(cls, frame_id: str, target_id: str) -> "HeldItem":
        return cls(kind="grasp", frame_id=frame_id, target_id=target_id)

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "tool":
            assert self.tool is not None
            return {"kind": "tool", "tool": self.tool.to_dict(), "from_slot": self.from_slot}
        return {"kind": "grasp", "frame_id": self.frame_id, "target_id": self.target_id}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "HeldItem":
        if d["kind"] == "tool":
            return cls.held_tool(ToolSpec.from_dict(d["tool"]), d["from_slot"])
        return cls.held_grasp(d["frame_id"], d["target_id"])


@dataclass(frozen=True)
class ToolSlot:
    slot_id: int
    tool: ToolSpec | None = None

    @property
    def occupied(self) -> bool:
        return self.tool is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.slot_id,
            "occupied": self.occupied,
            "tool": self.tool.to_dict() if self.tool else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ToolSlot":
        return cls(d["id"], ToolSpec.from_dict(d["tool"]) if d.get("tool") else None)


@dataclass(frozen=True)
class GripperState:
    arm: str
    pose: Pose
    held: HeldItem | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "arm": self.arm,
            "pose": self.pose.to_dict(),
            "held": self.held.to_dict() if self.held else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GripperState":
        return cls(d["arm"], Pose.from_dict(d["pose"]), HeldItem.from_dict(d["held"]) if d.get("held") else None)


@dataclass(frozen=True)
class WorkcellState:
    """Full state of the simulated cell at one step."""

    frames: tuple[FrameObject, ...]
    tool_stand: tuple[ToolSlot, ...]
    grippers: tuple[GripperState, ...]
    step_index: int = 0

    def frame(self, frame_id: str) -> FrameObject | None:
        for f in self.frames:
            if f.frame_id == frame_id:
                return f
        return None

    def slot(self, slot_id: int) -> ToolSlot | None:
        for s in self.tool_stand:
            if s.slot_id == slot_id:
                return s
        return None

    def gripper(self, arm: str) -> GripperState | None:
        for g in self.grippers:
            if g.arm == arm:
                return g
        return None

    def all_tools(self) -> list[str]:
        """Names of every tool in slots and grippers; conservation checks use this."""
        names = [s.tool.name for s in self.tool_stand if s.tool]
        names += [g.held.tool.name for g in self.grippers if g.held and g.held.kind == "tool" and g.held.tool]
        return sorted(names)

    def _with_slot(self, slot_id: int, new: ToolSlot) -> "WorkcellState":
        stand = tuple(new if s.slot_id == slot_id else s for s in self.tool_stand)
        return replace(self, tool_stand=stand)

    def _with_gripper(self, arm: str, new: GripperState) -> "WorkcellState":
        grips = tuple(new if g.arm == arm else g for g in self.grippers)
        return replace(self, grippers=grips)

    def to_dict(self) -> dict[str, Any]:
        return {
            "frames": [f.to_dict() for f in self.frames],
            "tool_stand": [s.to_dict() for s in self.tool_stand],
            "grippers": [g.to_dict() for g in self.grippers],
            "step_index": self.step_index,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "WorkcellState":
        return cls(
            frames=tuple(FrameObject.from_dict(f) for f in d["frames"]),
            tool_stand=tuple(ToolSlot.from_dict(s) for s in d["tool_stand"]),
            grippers=tuple(GripperState.from_dict(g) for g in d["grippers"]),
            step_index=d.get("step_index", 0),
        )

    def canonical(self) -> str:
        return canonical_json(self.to_dict())

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


# --- actions -----------------------------------------------------------------


@dataclass(frozen=True)
class GraspAction:
    """Move the arm's grasp to a candidate pose on a frame (re-grasp allowed)."""

    arm: str
    target_id: str
    frame_id: str
    pose: Pose
    fail: bool = False

    def describe(self) -> dict[str, Any]:
        return {"kind": "grasp", "arm": self.arm, "target": self.target_id, "pose": self.pose.to_dict()}


@dataclass(frozen=True)
class PickupAction:
    """Take the named tool out of its stand slot."""

    arm: str
    target_id: str
    slot_id: int
    tool_name: str
    fail: bool = False

    def describe(self) -> dict[str, Any]:
        return {"kind": "pickup", "arm": self.arm, "target": self.target_id, "slot": self.slot_id, "tool": self.tool_name}


@dataclass(frozen=True)
class ReturnAction:
    """Put the held tool back in the slot it came from."""

    arm: str
    fail: bool = False

    def describe(self) -> dict[str, Any]:
        return {"kind": "return", "arm": self.arm}


ExecutableAction = Union[GraspAction, PickupAction, ReturnAction]


def apply_action(state: WorkcellState, action: ExecutableAction) -> WorkcellState:
    """Return the successor state for one executed action.

    An action flagged as a failed execution is a physical no-op: the returned
    state equals the input except for the step counter.
    """
    gripper = state.gripper(action.arm)
    if gripper is None:
        raise UnresolvableTarget(f"unknown arm {action.arm!r}")

    bumped = replace(state, step_index=state.step_index + 1)
    if action.fail:
        return bumped

    if isinstance(action, GraspAction):
        if state.frame(action.frame_id) is None:
            raise UnresolvableTarget(f"unknown frame {action.frame_id!r}")
        if gripper.held is not None and gripper.held.kind == "tool":
            raise ArmOccupied(f"arm {action.arm!r} holds a tool; cannot grasp a frame")
        new = GripperState(action.arm, action.pose, HeldItem.held_grasp(action.frame_id, action.target_id))
        return bumped._with_gripper(action.arm, new)

    if isinstance(action, PickupAction):
        slot = state.slot(action.slot_id)
        if slot is None or slot.tool is None or slot.tool.name != action.tool_name:
            raise UnresolvableTarget(f"tool {action.tool_name!r} not in slot {action.slot_id!r}")
        if gripper.held is not None:
            raise ArmOccupied(f"arm {action.arm!r} already holds an item")
        out = bumped._with_slot(action.slot_id, ToolSlot(action.slot_id, None))
        new = GripperState(action.arm, gripper.pose, HeldItem.held_tool(slot.tool, action.slot_id))
        return out._with_gripper(action.arm, new)

    # ReturnAction
    held = gripper.held
    if held is None or held.kind != "tool" or held.tool is None or held.from_slot is None:
        raise UnresolvableTarget(f"arm {action.arm!r} holds no tool to return")
    slot = state.slot(held.from_slot)
    if slot is None:
        raise UnresolvableTarget(f"home slot {held.from_slot!r} missing")
    if slot.tool is not None:
        raise UnresolvableTarget(f"home slot {held.from_slot!r} already occupied")
    out = bumped._with_slot(held.from_slot, ToolSlot(held.from_slot, held.tool))
    return out._with_gripper(action.arm, GripperState(action.arm, gripper.pose, None))


# --- observation -------------------------------------------------------------


@dataclass(frozen=True)
class NoiseModel:
    """Field-level perception corruption.

    p_freeze: probability a moved gripper pose is reported at its previous pose.
    p_tool_invisible: probability a removed tool is reported still in its slot.
    """

    p_freeze: float = 0.0
    p_tool_invisible: float = 0.0
    stream: str = "noise"

    def __post_init__(self) -> None:
        for name in ("p_freeze", "p_tool_invisible"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p!r}")

    @property
    def enabled(self) -> bool:
        return self.p_freeze > 0 or self.p_tool_invisible > 0

    def to_dict(self) -> dict[str, Any]:
        return {"p_freeze": self.p_freeze, "p_tool_invisible": self.p_tool_invisible}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NoiseModel":
        return cls(p_freeze=d.get("p_freeze", 0.0), p_tool_invisible=d.get("p_tool_invisible", 0.0))


NOISE_OFF = NoiseModel()


@dataclass(frozen=True)
class Observation:
    """A possibly-corrupted snapshot of the workcell."""

    snapshot: WorkcellState
    corrupted_fields: tuple[str, ...] = ()
    captured_at_step: int = 0

    def digest(self) -> str:
        return self.snapshot.digest()

    def summary(self) -> dict[str, Any]:
        """Compact scene payload for event logs and the operator console."""
        return {
            "grippers": {
                g.arm: {
                    "position": list(g.pose.position),
                    "held": g.held.to_dict() if g.held else None,
                }
                for g in self.snapshot.grippers
            },
            "slots": [{"id": s.slot_id, "tool": s.tool.name if s.tool else None} for s in self.snapshot.tool_stand],
            "step": self.captured_at_step,
            "corrupted": list(self.corrupted_fields),
        }


def observe(
    state: WorkcellState,
    noise: NoiseModel = NOISE_OFF,
    rng: random.Random | None = None,
    previous: WorkcellState | None = None,
) -> Observation:
    """Capture a snapshot, possibly masking changes relative to ``previous``.

    Each noise channel fires per changed field: a gripper pose that moved since
    ``previous`` may be reported at its old pose, a slot that was emptied may be
    reported still holding its tool. Corrupted field paths are recorded so tests
    and fault analyses can see exactly what was masked. Draw order is fixed
    (grippers in declaration order, then slots), keeping observation streams
    reproducible for a given (state, noise, seed) triple.
    """
    snapshot = state
    corrupted: list[str] = []
    if noise.enabled and previous is not None:
        if rng is None:
            raise ValueError("noise is enabled but no rng stream was provided")
        for g in state.grippers:
            prev = previous.gripper(g.arm)
            if prev is not None and prev.pose != g.pose and rng.random() < noise.p_freeze:
                snapshot = snapshot._with_gripper(g.arm, replace(g, pose=prev.pose))
                corrupted.append(f"grippers.{g.arm}.pose")
        for s in state.tool_stand:
            prev_slot = previous.slot(s.slot_id)
            if (
                prev_slot is not None
                and prev_slot.tool is not None
                and s.tool is None
                and rng.random() < noise.p_tool_invisible
            ):
                snapshot = snapshot._with_slot(s.slot_id, ToolSlot(s.slot_id, prev_slot.tool))
                corrupted.append(f"tool_stand.{s.slot_id}.tool")
    return Observation(snapshot=snapshot, corrupted_fields=tuple(corrupted), captured_at_step=state.step_index)


# --- diff --------------------------------------------------------------------


@dataclass(frozen=True)
class SceneDelta:
    """Per-field differences between two observations."""

    gripper_moves: tuple[tuple[str, Vec3], ...] = ()
    slot_changes: tuple[tuple[int, str | None, str | None], ...] = ()
    held_changes: tuple[tuple[str, dict | None, dict | None], ...] = ()

    @property
    def empty(self) -> bool:
        return not (self.gripper_moves or self.slot_changes or self.held_changes)

    def gripper_move(self, arm: str) -> Vec3:
        for a, d in self.gripper_moves:
            if a == arm:
                return d
        return (0.0, 0.0, 0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "gripper_moves": {a: list(d) for a, d in self.gripper_moves},
            "slot_changes": [{"slot": s, "before": b, "after": a} for s, b, a in self.slot_changes],
            "held_changes": [{"arm": arm, "before": b, "after": a} for arm, b, a in self.held_changes],
        }


def diff(pre: Observation, post: Observation) -> SceneDelta:
    """Per-field deltas between two snapshots of the same workcell.

    Purely a function of the two snapshots, corruptions included: a masked
    motion produces an empty delta, which is exactly how the physical verifier
    ends up with a false negative.
    """
    a, b = pre.snapshot, post.snapshot
    if (
        [f.frame_id for f in a.frames] != [f.frame_id for f in b.frames]
        or [s.slot_id for s in a.tool_stand] != [s.slot_id for s in b.tool_stand]
        or [g.arm for g in a.grippers] != [g.arm for g in b.grippers]
    ):
        raise MismatchedWorkcell("observations describe different workcells")

    moves = []
    held_changes = []
    for ga in a.grippers:
        gb = b.gripper(ga.arm)
        assert gb is not None
        disp = v_sub(gb.pose.position, ga.pose.position)
        if v_norm(disp) >= POSE_EPS_M:
            moves.append((ga.arm, disp))
        ha = ga.held.to_dict() if ga.held else None
        hb = gb.held.to_dict() if gb.held else None
        if ha != hb:
            held_changes.append((ga.arm, ha, hb))

    slot_changes = []
    for sa in a.tool_stand:
        sb = b.slot(sa.slot_id)
        assert sb is not None
        na = sa.tool.name if sa.tool else None
        nb = sb.tool.name if sb.tool else None
        if na != nb:
            slot_changes.append((sa.slot_id, na, nb))

    return SceneDelta(tuple(moves), tuple(slot_changes), tuple(held_changes))


# --- configuration -----------------------------------------------------------


def load_workcell(source: str | Path | dict[str, Any]) -> WorkcellState:
    """Build the initial workcell state from a configuration document.

    Schema: frames (id, axis, length_m, base_pose), tool_slots (id, tool spec
    or null), arms (initial pose per arm id).
    """
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"workcell config not found: {source}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"workcell config is not valid JSON: {source}: {e}") from e
    else:
        doc = source

    try:
        frames = tuple(
            FrameObject(f["id"], tuple(f["axis"]), float(f["length_m"]), Pose.from_dict(f["base_pose"]))
            for f in doc["frames"]
        )
        slots = []
        for s in doc["tool_slots"]:
            tool = None
            if s.get("tool"):
                t = s["tool"]
                tool = ToolSpec(t["name"], t["bit_kind"], float(t["bit_size_mm"]))
            slots.append(ToolSlot(int(s["id"]), tool))
        grippers = tuple(
            GripperState(arm, Pose.from_dict(p)) for arm, p in sorted(doc["arms"].items())
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid workcell config: {e}") from e

    names = [s.tool.name for s in slots if s.tool]
    if len(names) != len(set(names)):
        raise ConfigError("tool names must be unique within a workcell")
    for g in grippers:
        if g.arm not in ARMS:
            raise ConfigError(f"unknown arm id {g.arm!r}; expected one of {ARMS}")
    return WorkcellState(frames=frames, tool_stand=tuple(slots), grippers=grippers)
