"""Harness tests: scenario loading, grading, matched-seed experiments, battery."""

import json
from pathlib import Path

import pytest

from corobot.engine import OUTCOME_COMPLETED, Scenario, run_session
from corobot.errors import ConfigError
from corobot.harness import (
    ALL_MODES,
    AblationMode,
    grade_session,
    load_scenario,
    reference_held_tool,
    run_experiment,
    validate_correction_models,
)
from corobot.reasoner import FaultConfig
from corobot.scene import NoiseModel, load_workcell

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _scenario(name="fix", script=("Move it to the left", "done"), **kw) -> Scenario:
    defaults = dict(
        workcell=load_workcell(CONFIGS / "workcell_default.json"),
        task_kind="fixation",
        frame_id="beam_x",
        count_per_side=3,
    )
    defaults.update(kw)
    return Scenario(name=name, script=tuple(script), **defaults)


# --- ablation modes ------------------------------------------------------------


def test_mode_flags():
    assert AblationMode.FULL.internal_on and AblationMode.FULL.external_on
    assert not AblationMode.NO_INTERNAL.internal_on and AblationMode.NO_INTERNAL.external_on
    assert AblationMode.NO_EXTERNAL.internal_on and not AblationMode.NO_EXTERNAL.external_on
    assert not AblationMode.NONE.internal_on and not AblationMode.NONE.external_on


def test_mode_labels():
    assert [m.label for m in ALL_MODES] == ["Full", "w/o Internal", "w/o External", "w/o Both"]
    assert [m.value for m in ALL_MODES] == ["full", "no-internal", "no-external", "none"]


# --- scenario loading ----------------------------------------------------------


def test_load_scenario_from_file():
    sc = load_scenario(CONFIGS / "fixation_left.json")
    assert sc.name == "fixation_left"
    assert sc.task_kind == "fixation"
    assert sc.frame_id == "beam_x"
    assert sc.script[-1] == "done"
    assert sc.workcell.frame("beam_x") is not None


def test_load_scenario_inline_doc():
    doc = {
        "name": "inline",
        "workcell": "workcell_default.json",
        "task_kind": "fixation",
        "frame_id": "beam_x",
        "script": ["Move it left", "done"],
        "targets": {"spacing_m": 0.02, "count_per_side": 4},
        "faults": {"p_exec_fail": 0.5},
        "noise": {"p_freeze": 0.25},
        "caps": {"internal": 2, "external": 5},
    }
    sc = load_scenario(doc, base_dir=CONFIGS)
    assert sc.spacing_m == 0.02 and sc.count_per_side == 4
    assert sc.faults.p_exec_fail == 0.5 and sc.noise.p_freeze == 0.25
    assert sc.caps.internal == 2 and sc.caps.external == 5


def test_load_scenario_missing_file():
    with pytest.raises(ConfigError):
        load_scenario(CONFIGS / "no_such_scenario.json")


def test_load_scenario_bad_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_load_scenario_missing_keys(tmp_path):
    p = tmp_path / "partial.json"
    p.write_text(json.dumps({"name": "x", "task_kind": "fixation", "script": ["done"]}))
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_all_shipped_scenarios_load():
    for name in (
        "fixation_left.json",
        "fixation_up.json",
        "fixation_seq5.json",
        "tool_prep_initial.json",
        "tool_prep_replan.json",
    ):
        sc = load_scenario(CONFIGS / name)
        assert sc.script[-1] == "done"


# --- grading -------------------------------------------------------------------


def test_grade_clean_fixation_success():
    sc = _scenario()
    result = run_session(sc, internal_on=True, external_on=True, seed=1)
    assert result.outcome == OUTCOME_COMPLETED
    assert grade_session(result, sc, None)


def test_grade_rejects_wrong_direction_completion():
    # with both correctors off and a mirroring reasoner, the session "completes"
    # while the arm truly moved the wrong way; grading must call that a failure
    sc = _scenario(faults=FaultConfig(p_wrong_direction=1.0))
    result = run_session(sc, internal_on=False, external_on=False, seed=3)
    assert result.outcome == OUTCOME_COMPLETED
    assert not grade_session(result, sc, None)


def test_grade_rejects_non_completion():
    sc = _scenario(faults=FaultConfig(p_out_of_set=1.0))
    result = run_session(sc, internal_on=True, external_on=True, seed=0)
    assert result.outcome != OUTCOME_COMPLETED
    assert not grade_session(result, sc, None)


def test_reference_held_tool_replan_script():
    sc = load_scenario(CONFIGS / "tool_prep_replan.json")
    assert reference_held_tool(sc) == "hex_driver_2p5mm"


def test_reference_held_tool_none_for_fixation():
    assert reference_held_tool(_scenario()) is None


def test_grade_tool_task_checks_final_tool():
    sc = load_scenario(CONFIGS / "tool_prep_replan.json")
    reference = reference_held_tool(sc)
    good = run_session(sc, internal_on=True, external_on=True, seed=0)
    assert grade_session(good, sc, reference)
    # same run graded against a different reference tool must fail
    assert not grade_session(good, sc, "phillips_driver_5mm")


# --- run_experiment ------------------------------------------------------------


def test_clean_scenario_full_mode_all_succeed():
    report = run_experiment([_scenario()], [AblationMode.FULL], trials=20, base_seed=7)
    agg = report.mode_summary()["full"]
    assert agg["trials"] == 20 and agg["successes"] == 20
    assert report.success_rate(AblationMode.FULL) == 1.0


def test_trial_seeds_exclude_mode():
    # every mode must see the same per-trial seed so fault draws are comparable
    report = run_experiment([_scenario()], ALL_MODES, trials=3, base_seed=11)
    by_trial: dict[int, set[int]] = {}
    for row in report.rows:
        by_trial.setdefault(row.trial, set()).add(row.seed)
    assert all(len(seeds) == 1 for seeds in by_trial.values())
    assert len({next(iter(s)) for s in by_trial.values()}) == 3


def test_report_comparison_dict_deterministic():
    sc = _scenario(faults=FaultConfig(p_wrong_direction=0.4, p_exec_fail=0.3), noise=NoiseModel(p_freeze=0.2))
    a = run_experiment([sc], ALL_MODES, trials=5, base_seed=42)
    b = run_experiment([sc], ALL_MODES, trials=5, base_seed=42)
    assert a.comparison_dict() == b.comparison_dict()
    assert json.dumps(a.comparison_dict(), sort_keys=True) == json.dumps(b.comparison_dict(), sort_keys=True)


def test_report_to_dict_includes_latency_comparison_excludes():
    report = run_experiment([_scenario()], [AblationMode.FULL], trials=1)
    assert "latency_ms" in report.to_dict()
    assert "latency_ms" not in report.comparison_dict()
    assert set(report.to_dict()["latency_ms"]) <= {"select", "internal_check", "execute", "external_check"}


def test_none_success_implies_full_success_without_noise():
    # with clean observations, correctors only ever help: any trial the bare
    # pipeline gets right, the corrected one must too (matched seeds)
    sc = _scenario(faults=FaultConfig(p_out_of_set=0.2, p_wrong_direction=0.4, p_exec_fail=0.3))
    report = run_experiment([sc], [AblationMode.FULL, AblationMode.NONE], trials=40, base_seed=5)
    full_ok = {r.trial for r in report.rows if r.mode == "full" and r.success}
    none_ok = {r.trial for r in report.rows if r.mode == "none" and r.success}
    assert none_ok <= full_ok
    assert len(full_ok) > len(none_ok)  # the faults actually bite at these rates


def test_run_experiment_validation():
    with pytest.raises(ConfigError):
        run_experiment([_scenario()], ALL_MODES, trials=0)
    with pytest.raises(ConfigError):
        run_experiment([], ALL_MODES, trials=1)
    with pytest.raises(ConfigError):
        run_experiment([_scenario()], [], trials=1)


def test_log_dir_writes_comparison_logs(tmp_path):
    sc = _scenario(name="logged", noise=NoiseModel(p_freeze=0.3))
    run_experiment([sc], [AblationMode.FULL], trials=2, base_seed=1, log_dir=tmp_path)
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == ["logged__full__0000.jsonl", "logged__full__0001.jsonl"]
    first = (tmp_path / files[0]).read_text()
    assert first.endswith("\n")
    for line in first.strip().splitlines():
        ev = json.loads(line)
        assert "wall_ms" not in ev
        assert {"step", "kind", "payload"} <= set(ev)
    # reruns are byte-identical
    other = tmp_path / "again"
    run_experiment([sc], [AblationMode.FULL], trials=2, base_seed=1, log_dir=other)
    assert (other / files[0]).read_bytes() == (tmp_path / files[0]).read_bytes()


def test_text_table_lists_all_modes():
    report = run_experiment([_scenario()], ALL_MODES, trials=2)
    table = report.text_table()
    for label in ("Full", "w/o Internal", "w/o External", "w/o Both"):
        assert label in table
    assert "2/2" in table


# --- adversarial battery -------------------------------------------------------


@pytest.fixture(scope="module")
def battery_report():
    return validate_correction_models(CONFIGS / "adversarial_battery.json")


def test_battery_all_pass(battery_report):
    assert battery_report["all_pass"], battery_report["failures"]


def test_battery_internal_detections(battery_report):
    cats = battery_report["categories"]
    for key in ("internal/out_of_set", "internal/wrong_direction"):
        assert cats[key] == {"cases": 10, "matched": 10, "rejected": 10}


def test_battery_external_detections(battery_report):
    assert battery_report["categories"]["external/no_change"] == {"cases": 10, "matched": 10, "rejected": 10}


def test_battery_zero_false_positives(battery_report):
    cats = battery_report["categories"]
    assert cats["internal/clean"] == {"cases": 10, "matched": 10, "rejected": 0}
    assert cats["external/clean"] == {"cases": 10, "matched": 10, "rejected": 0}


def test_battery_missing_file():
    with pytest.raises(ConfigError):
        validate_correction_models(CONFIGS / "no_such_battery.json")


def test_battery_inline_case_failure_reported():
    # a clean selection expected to be rejected must show up as a failure
    doc = {
        "workcell": json.loads((CONFIGS / "workcell_default.json").read_text()),
        "internal": [
            {"category": "clean", "instruction": "Move it left", "target": "grasp_+1", "expect": "reject"}
        ],
    }
    report = validate_correction_models(doc)
    assert not report["all_pass"]
    assert report["failures"][0]["category"] == "clean"
