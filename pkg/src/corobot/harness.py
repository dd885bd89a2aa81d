"""Batch experiments: scripted scenarios, ablation modes, seeded trials, reports.

Success here is graded against ground truth, not against the session's own
verdicts: a directional instruction counts only if the arm's true net motion
along the instructed direction reaches half a lattice step, and tool scripts
only if the finally held tool matches a clean-run reference. A session that
"completes" while moving the wrong way is a failure, which is exactly the
degradation the ablation modes are supposed to expose.
"""

from __future__ import annotations

import enum
import json
import statistics
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Iterable

from .correction import expected_delta_for, external_check, internal_check
from .engine import (
    OUTCOME_COMPLETED,
    Caps,
    Scenario,
    SessionResult,
    events_to_jsonl,
    run_session,
)
from .errors import ConfigError
from .lang import DEFAULT_LEXICON, DirectionLexicon, parse_instruction
from .reasoner import FAULTS_OFF, FaultConfig, Selection
from .rng import derive_seed
from .scene import (
    NOISE_OFF,
    GraspAction,
    NoiseModel,
    Observation,
    PickupAction,
    ReturnAction,
    WorkcellState,
    apply_action,
    load_workcell,
    v_dot,
)
from .targets import (
    CandidateSet,
    GraspCandidate,
    ToolCandidate,
    generate_grasp_candidates,
    generate_tool_candidates,
)


class AblationMode(enum.Enum):
    FULL = "full"
    NO_INTERNAL = "no-internal"
    NO_EXTERNAL = "no-external"
    NONE = "none"

    @property
    def internal_on(self) -> bool:
        return self in (AblationMode.FULL, AblationMode.NO_EXTERNAL)

    @property
    def external_on(self) -> bool:
        return self in (AblationMode.FULL, AblationMode.NO_INTERNAL)

    @property
    def label(self) -> str:
        return {
            AblationMode.FULL: "Full",
            AblationMode.NO_INTERNAL: "w/o Internal",
            AblationMode.NO_EXTERNAL: "w/o External",
            AblationMode.NONE: "w/o Both",
        }[self]


ALL_MODES = tuple(AblationMode)

# Stage labels for latency aggregation, keyed by the event that ends the stage.
_STAGE_OF = {
    "TargetSelected": "select",
    "InternalVerdict": "internal_check",
    "ActionExecuted": "execute",
    "ExternalVerdict": "external_check",
}


# --- scenario loading --------------------------------------------------------


def load_scenario(source: str | Path | dict[str, Any], base_dir: Path | None = None) -> Scenario:
    """Build a Scenario from its JSON document.

    Relative refs (workcell, lexicon) resolve against the scenario file's
    directory, or `base_dir` when the document is passed inline.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"scenario not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"scenario is not valid JSON: {path}: {e}") from e
        base = path.parent
    else:
        doc = source
        base = base_dir or Path.cwd()

    try:
        workcell_ref = doc["workcell"]
        workcell = (
            load_workcell(workcell_ref) if isinstance(workcell_ref, dict) else load_workcell(base / workcell_ref)
        )
        lexicon = DEFAULT_LEXICON
        if "lexicon" in doc:
            ref = doc["lexicon"]
            lexicon = DEFAULT_LEXICON.extended(ref) if isinstance(ref, dict) else DirectionLexicon.from_file(base / ref)
        targets = doc.get("targets", {})
        caps = doc.get("caps", {})
        scenario = Scenario(
            name=doc["name"],
            workcell=workcell,
            task_kind=doc["task_kind"],
            script=tuple(doc["script"]),
            arm=doc.get("arm", "left"),
            frame_id=doc.get("frame_id"),
            spacing_m=float(targets.get("spacing_m", 0.05)),
            count_per_side=int(targets.get("count_per_side", 2)),
            faults=FaultConfig.from_dict(doc.get("faults", {})),
            noise=NoiseModel.from_dict(doc.get("noise", {})),
            caps=Caps(internal=int(caps.get("internal", 3)), external=int(caps.get("external", 3))),
            lexicon=lexicon,
            expose_history=bool(doc.get("expose_history", False)),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid scenario document: {e}") from e
    return scenario


# --- grading -----------------------------------------------------------------


def _directional_ok(trace_parsed: dict[str, Any], net: tuple[float, float, float], spacing_m: float) -> bool:
    axis = {"x": (1.0, 0.0, 0.0), "y": (0.0, 1.0, 0.0), "z": (0.0, 0.0, 1.0)}[trace_parsed["axis"]]
    vec = tuple(a * trace_parsed["sign"] for a in axis)
    return v_dot(net, vec) + 1e-12 >= spacing_m / 2


def _held_tool_name(state: WorkcellState, arm: str) -> str | None:
    held = state.gripper(arm).held
    if held is not None and held.kind == "tool" and held.tool is not None:
        return held.tool.name
    return None


def grade_session(result: SessionResult, scenario: Scenario, reference_held: str | None) -> bool:
    """True task success, judged on ground truth.

    The session must have completed, every directional instruction must have
    truly moved the arm at least half a lattice step the instructed way, and
    when the script touches tools the finally held tool must equal the clean
    reference run's.
    """
    if result.outcome != OUTCOME_COMPLETED:
        return False
    has_tools = False
    for trace in result.traces:
        kind = trace.parsed["kind"]
        if kind == "directional":
            if not _directional_ok(trace.parsed, trace.true_net_displacement, scenario.spacing_m):
                return False
        elif kind in ("comparative", "tool_by_name"):
            has_tools = True
    if has_tools and _held_tool_name(result.final_state, scenario.arm) != reference_held:
        return False
    return True


def reference_held_tool(scenario: Scenario) -> str | None:
    """Held tool at the end of a clean oracle run; the tool-task grading key."""
    if not any(parse_instruction(t, scenario.lexicon).kind in ("comparative", "tool_by_name") for t in scenario.script):
        return None
    clean = replace(scenario, faults=FAULTS_OFF, noise=NOISE_OFF)
    result = run_session(clean, internal_on=True, external_on=True, seed=0)
    if result.outcome != OUTCOME_COMPLETED:
        raise ConfigError(f"scenario {scenario.name!r} cannot complete even without faults")
    return _held_tool_name(result.final_state, scenario.arm)


# --- experiment runner ---------------------------------------------------------


@dataclass(frozen=True)
class TrialRow:
    scenario: str
    mode: str
    trial: int
    seed: int
    outcome: str
    success: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "scenario": self.scenario,
            "mode": self.mode,
            "trial": self.trial,
            "seed": self.seed,
            "outcome": self.outcome,
            "success": self.success,
        }


@dataclass
class Report:
    """Aggregated experiment results plus a Table-3-style text rendering."""

    base_seed: int
    trials: int
    scenarios: tuple[str, ...]
    modes: tuple[str, ...]
    rows: list[TrialRow]
    latency_ms: dict[str, dict[str, float]]

    def mode_summary(self) -> dict[str, dict[str, Any]]:
        out: dict[str, dict[str, Any]] = {}
        for mode in self.modes:
            rows = [r for r in self.rows if r.mode == mode]
            outcomes: dict[str, int] = {}
            for r in rows:
                outcomes[r.outcome] = outcomes.get(r.outcome, 0) + 1
            successes = sum(r.success for r in rows)
            out[mode] = {
                "trials": len(rows),
                "successes": successes,
                "rate": successes / len(rows) if rows else 0.0,
                "outcomes": dict(sorted(outcomes.items())),
            }
        return out

    def success_rate(self, mode: AblationMode | str) -> float:
        key = mode.value if isinstance(mode, AblationMode) else mode
        return self.mode_summary()[key]["rate"]

    def to_dict(self) -> dict[str, Any]:
        return self.comparison_dict() | {"latency_ms": self.latency_ms}

    def comparison_dict(self) -> dict[str, Any]:
        """Deterministic view: wall-time aggregates stripped."""
        return {
            "base_seed": self.base_seed,
            "trials": self.trials,
            "scenarios": list(self.scenarios),
            "modes": list(self.modes),
            "summary": self.mode_summary(),
            "rows": [r.to_dict() for r in self.rows],
        }

    def text_table(self) -> str:
        labels = {m.value: m.label for m in AblationMode}
        lines = ["Mode           Success Rate", "-" * 28]
        for mode, agg in self.mode_summary().items():
            rate = f"{agg['successes']}/{agg['trials']} ({agg['rate'] * 100:.1f}%)"
            lines.append(f"{labels.get(mode, mode):<14} {rate}")
        return "\n".join(lines)


def run_experiment(
    scenarios: Iterable[Scenario],
    modes: Iterable[AblationMode] = ALL_MODES,
    trials: int = 1,
    base_seed: int = 0,
    log_dir: str | Path | None = None,
) -> Report:
    """Run every (scenario, mode, trial) cell and aggregate.

    The trial seed is derived from (base seed, scenario, trial) only, NOT the
    mode, so all modes face the same fault and noise draws per trial index and
    their rates are directly comparable.
    """
    scenarios = list(scenarios)
    modes = list(modes)
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    if not scenarios or not modes:
        raise ConfigError("need at least one scenario and one mode")

    if log_dir is not None:
        log_dir = Path(log_dir)
        log_dir.mkdir(parents=True, exist_ok=True)

    rows: list[TrialRow] = []
    durations: dict[str, list[float]] = {}
    for scenario in scenarios:
        reference = reference_held_tool(scenario)
        for mode in modes:
            for trial in range(trials):
                seed = derive_seed(base_seed, scenario.name, trial)
                result = run_session(
                    scenario, internal_on=mode.internal_on, external_on=mode.external_on, seed=seed
                )
                success = grade_session(result, scenario, reference)
                rows.append(
                    TrialRow(
                        scenario=scenario.name,
                        mode=mode.value,
                        trial=trial,
                        seed=seed,
                        outcome=result.outcome,
                        success=success,
                    )
                )
                prev_wall = 0.0
                for ev in result.events:
                    stage = _STAGE_OF.get(ev.kind)
                    if stage is not None:
                        durations.setdefault(stage, []).append(ev.wall_ms - prev_wall)
                    prev_wall = ev.wall_ms
                if log_dir is not None:
                    name = f"{scenario.name}__{mode.value}__{trial:04d}.jsonl"
                    (log_dir / name).write_text(events_to_jsonl(result.events, comparison=True))

    latency = {
        stage: {
            "count": float(len(vals)),
            "mean_ms": round(statistics.fmean(vals), 3),
            "max_ms": round(max(vals), 3),
        }
        for stage, vals in sorted(durations.items())
    }
    return Report(
        base_seed=base_seed,
        trials=trials,
        scenarios=tuple(s.name for s in scenarios),
        modes=tuple(m.value for m in modes),
        rows=rows,
        latency_ms=latency,
    )


# --- adversarial battery -----------------------------------------------------


def _battery_state(workcell: WorkcellState, case: dict[str, Any]) -> WorkcellState:
    state = workcell
    if case.get("held_slot") is not None:
        slot = state.slot(int(case["held_slot"]))
        if slot is None or slot.tool is None:
            raise ConfigError(f"battery case preloads empty slot {case.get('held_slot')!r}")
        state = apply_action(
            state,
            PickupAction(arm=case.get("arm", "left"), target_id="preload", slot_id=slot.slot_id, tool_name=slot.tool.name),
        )
    return state


def _battery_candidates(state: WorkcellState, case: dict[str, Any], instr_kind: str) -> CandidateSet:
    if instr_kind in ("comparative", "tool_by_name", "unknown"):
        return generate_tool_candidates(state)
    return generate_grasp_candidates(
        state,
        case.get("frame", "beam_x"),
        float(case.get("spacing_m", 0.05)),
        int(case.get("count_per_side", 2)),
        arm=case.get("arm", "left"),
    )


def _execute_for_battery(state: WorkcellState, cset: CandidateSet, target_id: str, performed: bool, arm: str) -> WorkcellState:
    cand = cset.get(target_id)
    if cand is None:
        raise ConfigError(f"battery case executes unknown target {target_id!r}")
    fail = not performed
    if isinstance(cand, GraspCandidate):
        return apply_action(state, GraspAction(cand.arm, cand.id, cand.frame_id, cand.pose, fail=fail))
    assert isinstance(cand, ToolCandidate)
    gripper = state.gripper(arm)
    if gripper.held is not None and gripper.held.kind == "tool":
        state = apply_action(state, ReturnAction(arm=arm, fail=fail))
    return apply_action(state, PickupAction(arm, cand.id, cand.slot_id, cand.tool.name, fail=fail))


def validate_correction_models(battery: str | Path | dict[str, Any]) -> dict[str, Any]:
    """Run crafted adversarial and clean cases through the correction models.

    Each case states its expected verdict; the report counts matches per
    category, keeping detections (expected rejects) separate from false
    positives (clean cases rejected anyway).
    """
    if isinstance(battery, (str, Path)):
        path = Path(battery)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError as e:
            raise ConfigError(f"battery not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"battery is not valid JSON: {path}: {e}") from e
        base = path.parent
    else:
        doc = battery
        base = Path.cwd()

    ref = doc.get("workcell", "workcell_default.json")
    workcell = load_workcell(ref) if isinstance(ref, dict) else load_workcell(base / ref)

    categories: dict[str, dict[str, int]] = {}
    failures: list[dict[str, Any]] = []

    def tally(section: str, case: dict[str, Any], rejected: bool) -> None:
        expect = case["expect"]
        matched = rejected == (expect == "reject")
        key = f"{section}/{case['category']}"
        agg = categories.setdefault(key, {"cases": 0, "matched": 0, "rejected": 0})
        agg["cases"] += 1
        agg["rejected"] += int(rejected)
        agg["matched"] += int(matched)
        if not matched:
            failures.append({"section": section} | case)

    for case in doc.get("internal", []):
        state = _battery_state(workcell, case)
        instr = parse_instruction(case["instruction"])
        cset = _battery_candidates(state, case, instr.kind)
        obs = Observation(state, (), state.step_index)
        verdict = internal_check(obs, Selection(case["target"], "battery"), instr, cset)
        tally("internal", case, rejected=not verdict.accepted)

    for case in doc.get("external", []):
        state = _battery_state(workcell, case)
        instr = parse_instruction(case["instruction"])
        cset = _battery_candidates(state, case, instr.kind)
        arm = case.get("arm", "left")
        pre = Observation(state, (), state.step_index)
        after = _execute_for_battery(state, cset, case["target"], bool(case.get("performed", True)), arm)
        if case.get("frozen", False):
            # stale camera: the post observation repeats the pre snapshot
            post = Observation(pre.snapshot, ("frozen",), after.step_index)
        else:
            post = Observation(after, (), after.step_index)
        expected = expected_delta_for(instr, Selection(case["target"], "battery"), cset)
        verdict = external_check(pre, post, instr, expected)
        tally("external", case, rejected=not verdict.accepted)

    return {
        "categories": dict(sorted(categories.items())),
        "failures": failures,
        "all_pass": not failures,
    }
