"""The replanning loop: select, verify, execute, verify, retry with feedback.

One Session owns one workcell and runs one instruction at a time: an outer
loop over operator instructions and an inner loop that re-selects until both
correction models accept or a retry cap trips. All progress is visible as an
append-only event log; the log's comparison form (wall times stripped) is
byte-identical across reruns with the same scenario, seed, and mode.

The session holds the true workcell state but the decision pipeline only ever
sees observations; the truth is exported separately for experiment grading.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Any, Callable

from .correction import (
    ExternalCheckFn,
    InternalCheckFn,
    expected_delta_for,
    external_check,
    internal_check,
)
from .errors import (
    ArmOccupied,
    ConfigError,
    MalformedReply,
    NoFeasibleTarget,
    TransportError,
    UnresolvableTarget,
    WrongPhase,
)
from .lang import DEFAULT_LEXICON, DirectionLexicon, ParsedInstruction, parse_instruction
from .reasoner import (
    FAULTS_OFF,
    FaultConfig,
    Feedback,
    ReasoningContext,
    SelectFn,
    Selection,
    faulty_select,
    oracle_select,
)
from .rng import child_stream
from .scene import (
    NOISE_OFF,
    ExecutableAction,
    GraspAction,
    NoiseModel,
    Observation,
    PickupAction,
    ReturnAction,
    Vec3,
    WorkcellState,
    apply_action,
    canonical_json,
    observe,
    v_sub,
)
from .targets import (
    CandidateSet,
    GraspCandidate,
    ToolCandidate,
    generate_grasp_candidates,
    generate_tool_candidates,
)

OUTCOME_COMPLETED = "CompletedAllInstructions"
OUTCOME_SELECTION_FAILURE = "SelectionFailure"
OUTCOME_PHYSICAL_FAILURE = "PhysicalFailure"
OUTCOME_FORMAT_HALT = "FormatHalt"
OUTCOME_NO_CANDIDATES = "NoCandidates"

PHASES = (
    "AwaitingInstruction",
    "Selecting",
    "InternalChecking",
    "Executing",
    "ExternalChecking",
    "Terminated",
)

# Legal phase graph; anything else is an engine bug, not a recoverable state.
_TRANSITIONS = {
    "AwaitingInstruction": {"Selecting", "Terminated"},
    "Selecting": {"InternalChecking", "Executing", "Terminated"},
    "InternalChecking": {"Selecting", "Executing", "Terminated"},
    "Executing": {"ExternalChecking", "AwaitingInstruction", "Terminated"},
    "ExternalChecking": {"Selecting", "AwaitingInstruction", "Terminated"},
    "Terminated": set(),
}


@dataclass(frozen=True)
class Caps:
    """Consecutive-reject limits, per instruction."""

    internal: int = 3
    external: int = 3

    def __post_init__(self) -> None:
        if self.internal < 1 or self.external < 1:
            raise ValueError("caps must be >= 1")


@dataclass(frozen=True)
class Scenario:
    """Everything one session needs: the cell, the task, and the error regime."""

    name: str
    workcell: WorkcellState
    task_kind: str  # "fixation" | "tool_prep"
    script: tuple[str, ...]
    arm: str = "left"
    frame_id: str | None = None
    spacing_m: float = 0.05
    count_per_side: int = 2
    faults: FaultConfig = FAULTS_OFF
    noise: NoiseModel = NOISE_OFF
    caps: Caps = Caps()
    lexicon: DirectionLexicon = DEFAULT_LEXICON
    expose_history: bool = False

    def __post_init__(self) -> None:
        if self.task_kind not in ("fixation", "tool_prep"):
            raise ConfigError(f"unknown task kind {self.task_kind!r}")
        if self.task_kind == "fixation" and self.frame_id is None:
            raise ConfigError("fixation scenarios must name a frame")
        if self.workcell.gripper(self.arm) is None:
            raise ConfigError(f"scenario arm {self.arm!r} not in workcell")


@dataclass(frozen=True)
class SessionEvent:
    step: int
    kind: str
    payload: dict[str, Any]
    wall_ms: float

    def to_dict(self) -> dict[str, Any]:
        return {"step": self.step, "kind": self.kind, "payload": self.payload, "wall_ms": self.wall_ms}

    def comparison_dict(self) -> dict[str, Any]:
        """Deterministic view: everything except wall-clock latency."""
        return {"step": self.step, "kind": self.kind, "payload": self.payload}


def events_to_jsonl(events: list[SessionEvent], comparison: bool = False) -> str:
    rows = [e.comparison_dict() if comparison else e.to_dict() for e in events]
    return "\n".join(canonical_json(r) for r in rows) + ("\n" if rows else "")


@dataclass
class InstructionTrace:
    """Ground truth for one instruction, for experiment grading only.

    Never part of the event log: the decision pipeline cannot see it.
    """

    text: str
    parsed: dict[str, Any]
    completed: bool
    true_net_displacement: Vec3
    executed_targets: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "parsed": self.parsed,
            "completed": self.completed,
            "true_net_displacement": list(self.true_net_displacement),
            "executed_targets": list(self.executed_targets),
        }


@dataclass
class SessionResult:
    outcome: str
    events: list[SessionEvent]
    traces: list[InstructionTrace]
    final_state: WorkcellState


class Session:
    """One live replanning session; single-threaded by contract.

    `submit` runs the full inner loop synchronously and returns the event step
    at which processing began. Listeners registered via `on_event` observe
    every event as it is emitted (the gateway uses this to stream).
    """

    def __init__(
        self,
        scenario: Scenario,
        *,
        internal_on: bool = True,
        external_on: bool = True,
        seed: int = 0,
        reasoner: SelectFn | None = None,
        internal_model: InternalCheckFn = internal_check,
        external_model: ExternalCheckFn = external_check,
    ) -> None:
        self.scenario = scenario
        self._internal_check = internal_model
        self._external_check = external_model
        self.internal_on = internal_on
        self.external_on = external_on
        self.seed = seed
        self._noise_rng = child_stream(seed, "noise")
        self._fault_rng = child_stream(seed, "faults")
        if reasoner is not None:
            self._select: SelectFn = reasoner
        elif scenario.faults.enabled:
            self._select = faulty_select(oracle_select, scenario.faults, self._fault_rng)
        else:
            self._select = oracle_select

        self.state: WorkcellState = scenario.workcell
        self.obs: Observation = observe(self.state)
        self.phase: str = "AwaitingInstruction"
        self.outcome: str | None = None
        self.events: list[SessionEvent] = []
        self.traces: list[InstructionTrace] = []
        self.context: ReasoningContext | None = None
        self.cset: CandidateSet | None = None
        self.logic_rejects = 0
        self.phys_rejects = 0
        self._history: list[str] = []
        self._listeners: list[Callable[[SessionEvent], None]] = []
        self._t0 = time.monotonic()

    # --- observability --------------------------------------------------

    def on_event(self, listener: Callable[[SessionEvent], None]) -> None:
        self._listeners.append(listener)

    def _emit(self, kind: str, payload: dict[str, Any]) -> None:
        ev = SessionEvent(
            step=len(self.events),
            kind=kind,
            payload=payload,
            wall_ms=round((time.monotonic() - self._t0) * 1000.0, 3),
        )
        self.events.append(ev)
        for listener in self._listeners:
            listener(ev)

    def _set_phase(self, new: str) -> None:
        if new not in _TRANSITIONS[self.phase]:
            raise RuntimeError(f"illegal phase transition {self.phase} -> {new}")
        self.phase = new

    def state_snapshot(self) -> dict[str, Any]:
        """Read-only view between events, for the gateway's state endpoint."""
        return {
            "phase": self.phase,
            "outcome": self.outcome,
            "observation": self.obs.summary(),
            "candidates": self.cset.to_dict() if self.cset else None,
            "context": self.context.to_dict() if self.context else None,
            "counters": {"logic_rejects": self.logic_rejects, "phys_rejects": self.phys_rejects},
            "events": len(self.events),
        }

    # --- the loop ---------------------------------------------------------

    def submit(self, text: str) -> int:
        """Run one instruction through the replanning loop; returns ack step."""
        if self.phase != "AwaitingInstruction":
            raise WrongPhase(f"session is {self.phase}, not AwaitingInstruction")
        ack_step = len(self.events)
        scenario = self.scenario
        instr = parse_instruction(text, scenario.lexicon)

        self.logic_rejects = 0
        self.phys_rejects = 0

        if instr.is_done:
            self._emit("InstructionReceived", {"text": text, "parsed": instr.to_dict(), "candidates": None, "observation": self.obs.summary()})
            self._end(OUTCOME_COMPLETED)
            return ack_step

        self.cset = self._candidates_for(instr)
        self._emit(
            "InstructionReceived",
            {
                "text": text,
                "parsed": instr.to_dict(),
                "candidates": self.cset.to_dict(),
                "observation": self.obs.summary(),
            },
        )
        if len(self.cset) == 0:
            self._end(OUTCOME_NO_CANDIDATES, reason="candidate set is empty")
            return ack_step

        self.context = ReasoningContext(
            instr, (), turn=0, history=tuple(self._history) if scenario.expose_history else ()
        )
        start_true_pos = self.state.gripper(scenario.arm).pose.position
        trace = InstructionTrace(text=text, parsed=instr.to_dict(), completed=False, true_net_displacement=(0.0, 0.0, 0.0))

        while True:
            self._set_phase("Selecting")
            try:
                sel = self._select(self.obs, self.context, self.cset)
            except NoFeasibleTarget as e:
                self._finish_trace(trace, start_true_pos)
                self._end(OUTCOME_SELECTION_FAILURE, reason=str(e))
                return ack_step
            except (MalformedReply, TransportError) as e:
                self._finish_trace(trace, start_true_pos)
                self._end(OUTCOME_FORMAT_HALT, reason=str(e))
                return ack_step
            self.context = self.context.next_turn()
            self._emit("TargetSelected", {"target_id": sel.target_id, "rationale": sel.rationale, "turn": self.context.turn})

            if self.internal_on:
                self._set_phase("InternalChecking")
                verdict = self._internal_check(self.obs, sel, instr, self.cset)
                self._emit("InternalVerdict", verdict.to_dict())
                if not verdict.accepted:
                    self.logic_rejects += 1
                    self._append_feedback(verdict.feedback)
                    if self.logic_rejects >= scenario.caps.internal:
                        self._finish_trace(trace, start_true_pos)
                        self._end(OUTCOME_SELECTION_FAILURE, reason="internal reject cap reached")
                        return ack_step
                    continue
                self.logic_rejects = 0

            self._set_phase("Executing")
            try:
                primitives = self._actions_for(sel)
            except (UnresolvableTarget, ArmOccupied) as e:
                self._finish_trace(trace, start_true_pos)
                self._end(OUTCOME_FORMAT_HALT, reason=str(e))
                return ack_step

            exec_fail = self._fault_rng.random() < scenario.faults.p_exec_fail
            pre_obs = self.obs
            try:
                for prim in primitives:
                    self.state = apply_action(self.state, replace(prim, fail=exec_fail))
            except (UnresolvableTarget, ArmOccupied) as e:
                self._finish_trace(trace, start_true_pos)
                self._end(OUTCOME_FORMAT_HALT, reason=str(e))
                return ack_step
            # noise freezes fields to their last *reported* values: a stale
            # camera frame repeats the previous observation, not hidden truth
            new_obs = observe(self.state, scenario.noise, self._noise_rng, previous=pre_obs.snapshot)
            trace.executed_targets.append(sel.target_id)
            self._emit(
                "ActionExecuted",
                {
                    "action": self._describe_actions(primitives),
                    "observation": new_obs.summary(),
                    "state_digest": new_obs.digest(),
                },
            )

            if self.external_on:
                self._set_phase("ExternalChecking")
                expected = expected_delta_for(instr, sel, self.cset)
                verdict = self._external_check(pre_obs, new_obs, instr, expected)
                self._emit("ExternalVerdict", verdict.to_dict())
                if not verdict.accepted:
                    self.phys_rejects += 1
                    fb = verdict.feedback
                    fb = Feedback(fb.kind, f"{fb.message} (target '{sel.target_id}')", fb.issued_at_step)
                    self._append_feedback(fb)
                    self.obs = new_obs  # x_t <- x_new
                    if self.phys_rejects >= scenario.caps.external:
                        self._finish_trace(trace, start_true_pos)
                        self._end(OUTCOME_PHYSICAL_FAILURE, reason="external reject cap reached")
                        return ack_step
                    continue
                self.phys_rejects = 0

            self.obs = new_obs
            break

        trace.completed = True
        self._finish_trace(trace, start_true_pos)
        if scenario.expose_history:
            self._history.append(f"executed {sel.target_id} for '{text}'")
        self._set_phase("AwaitingInstruction")
        return ack_step

    # --- helpers ----------------------------------------------------------

    def _candidates_for(self, instr: ParsedInstruction) -> CandidateSet:
        scenario = self.scenario
        wants_tools = instr.kind in ("comparative", "tool_by_name") or (
            instr.kind == "unknown" and scenario.task_kind == "tool_prep"
        )
        if wants_tools:
            return generate_tool_candidates(self.obs.snapshot)
        if scenario.frame_id is None:
            return CandidateSet(candidates=(), kind="grasp", lattice_spacing_m=scenario.spacing_m)
        return generate_grasp_candidates(
            self.obs.snapshot, scenario.frame_id, scenario.spacing_m, scenario.count_per_side, arm=scenario.arm
        )

    def _actions_for(self, sel: Selection) -> list[ExecutableAction]:
        cand = self.cset.get(sel.target_id)
        if cand is None:
            raise UnresolvableTarget(f"selected target {sel.target_id!r} does not exist")
        if isinstance(cand, GraspCandidate):
            return [GraspAction(arm=cand.arm, target_id=cand.id, frame_id=cand.frame_id, pose=cand.pose)]
        assert isinstance(cand, ToolCandidate)
        arm = self.scenario.arm
        gripper = self.state.gripper(arm)
        pickup = PickupAction(arm=arm, target_id=cand.id, slot_id=cand.slot_id, tool_name=cand.tool.name)
        if gripper.held is not None and gripper.held.kind == "tool":
            return [ReturnAction(arm=arm), pickup]
        return [pickup]

    @staticmethod
    def _describe_actions(primitives: list[ExecutableAction]) -> dict[str, Any]:
        if len(primitives) == 1:
            return primitives[0].describe()
        return {"kind": "swap", "steps": [p.describe() for p in primitives]}

    def _append_feedback(self, fb: Feedback) -> None:
        self.context = self.context.with_feedback(fb)
        self._emit(
            "FeedbackAppended",
            {"kind": fb.kind, "message": fb.message, "context_size": len(self.context.feedback)},
        )

    def _finish_trace(self, trace: InstructionTrace, start_true_pos: Vec3) -> None:
        end = self.state.gripper(self.scenario.arm).pose.position
        trace.true_net_displacement = v_sub(end, start_true_pos)
        self.traces.append(trace)

    def _end(self, outcome: str, reason: str | None = None) -> None:
        payload: dict[str, Any] = {"outcome": outcome}
        if reason is not None:
            payload["reason"] = reason
        self._emit("SessionEnded", payload)
        self.outcome = outcome
        self._set_phase("Terminated")

    def result(self) -> SessionResult:
        assert self.outcome is not None, "session has not terminated"
        return SessionResult(outcome=self.outcome, events=self.events, traces=self.traces, final_state=self.state)


def run_session(
    scenario: Scenario,
    *,
    internal_on: bool = True,
    external_on: bool = True,
    seed: int = 0,
    reasoner: SelectFn | None = None,
) -> SessionResult:
    """Drive a scripted scenario to termination; the batch entry point."""
    if not scenario.script:
        raise ConfigError("scenario script is empty")
    if not parse_instruction(scenario.script[-1], scenario.lexicon).is_done:
        raise ConfigError("scenario script must end with a Done instruction")
    session = Session(scenario, internal_on=internal_on, external_on=external_on, seed=seed, reasoner=reasoner)
    for text in scenario.script:
        if session.phase == "Terminated":
            break
        session.submit(text)
    return session.result()
