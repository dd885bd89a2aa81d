import json
import math
from pathlib import Path

import pytest

from corobot.errors import ArmOccupied, ConfigError, MismatchedWorkcell, UnresolvableTarget
from corobot.rng import child_stream
from corobot.scene import (
    GraspAction,
    NoiseModel,
    Observation,
    PickupAction,
    Pose,
    ReturnAction,
    ToolSlot,
    WorkcellState,
    apply_action,
    diff,
    load_workcell,
    observe,
    v_add,
    v_scale,
)

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "workcell_default.json"


@pytest.fixture
def cell() -> WorkcellState:
    return load_workcell(CONFIG)


def grasp_at(cell: WorkcellState, arm: str, frame_id: str, k: int, target_id: str = "t", fail: bool = False) -> GraspAction:
    frame = cell.frame(frame_id)
    pos = v_add(frame.base_pose.position, v_scale(frame.axis, k * 0.05))
    return GraspAction(arm=arm, target_id=target_id, frame_id=frame_id, pose=Pose(pos), fail=fail)


class TestPose:
    def test_identity_quaternion_accepted(self):
        Pose((0.0, 0.0, 0.0))

    def test_quaternion_norm_just_inside_tolerance(self):
        q = (0.0, 0.0, 0.0, 1.0 + 9e-10)
        Pose((0.0, 0.0, 0.0), q)

    def test_quaternion_norm_outside_tolerance_rejected(self):
        with pytest.raises(ValueError):
            Pose((0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 1.0 + 1e-8))

    def test_non_finite_position_rejected(self):
        with pytest.raises(ValueError):
            Pose((float("nan"), 0.0, 0.0))

    def test_rotated_unit_quaternion_accepted(self):
        s = math.sin(0.3)
        c = math.cos(0.3)
        Pose((1.0, 2.0, 3.0), (0.0, s, 0.0, c))


class TestApplyAction:
    def test_grasp_sets_pose_and_held(self, cell):
        act = grasp_at(cell, "left", "beam_x", 2, target_id="g1")
        out = apply_action(cell, act)
        g = out.gripper("left")
        assert g.pose == act.pose
        assert g.held.kind == "grasp" and g.held.frame_id == "beam_x" and g.held.target_id == "g1"
        assert out.step_index == cell.step_index + 1

    def test_regrasp_same_frame_allowed(self, cell):
        s1 = apply_action(cell, grasp_at(cell, "left", "beam_x", 1))
        s2 = apply_action(s1, grasp_at(cell, "left", "beam_x", 3, target_id="t2"))
        assert s2.gripper("left").held.target_id == "t2"

    def test_pickup_empties_slot_and_fills_hand(self, cell):
        act = PickupAction(arm="right", target_id="tool_3", slot_id=3, tool_name="hex_driver_3mm")
        out = apply_action(cell, act)
        assert out.slot(3).tool is None
        held = out.gripper("right").held
        assert held.kind == "tool" and held.tool.name == "hex_driver_3mm" and held.from_slot == 3
        # pose is untouched by a pickup
        assert out.gripper("right").pose == cell.gripper("right").pose

    def test_return_refills_origin_slot(self, cell):
        s1 = apply_action(cell, PickupAction(arm="right", target_id="tool_5", slot_id=5, tool_name="phillips_driver_5mm"))
        s2 = apply_action(s1, ReturnAction(arm="right"))
        assert s2.slot(5).tool.name == "phillips_driver_5mm"
        assert s2.gripper("right").held is None

    def test_fail_flag_is_noop_except_step(self, cell):
        act = grasp_at(cell, "left", "beam_x", 2, fail=True)
        out = apply_action(cell, act)
        assert out.step_index == cell.step_index + 1
        before = cell.to_dict()
        after = out.to_dict()
        before.pop("step_index")
        after.pop("step_index")
        assert before == after

    def test_grasp_while_holding_tool_rejected(self, cell):
        s1 = apply_action(cell, PickupAction(arm="left", target_id="tool_1", slot_id=1, tool_name="hex_driver_2mm"))
        with pytest.raises(ArmOccupied):
            apply_action(s1, grasp_at(s1, "left", "beam_x", 1))

    def test_pickup_while_holding_rejected(self, cell):
        s1 = apply_action(cell, grasp_at(cell, "left", "beam_x", 1))
        with pytest.raises(ArmOccupied):
            apply_action(s1, PickupAction(arm="left", target_id="tool_1", slot_id=1, tool_name="hex_driver_2mm"))

    def test_unknown_arm_rejected(self, cell):
        with pytest.raises(UnresolvableTarget):
            apply_action(cell, ReturnAction(arm="center"))

    def test_unknown_frame_rejected(self, cell):
        act = GraspAction(arm="left", target_id="t", frame_id="no_such_frame", pose=Pose((0, 0, 0)))
        with pytest.raises(UnresolvableTarget):
            apply_action(cell, act)

    def test_pickup_wrong_tool_name_rejected(self, cell):
        with pytest.raises(UnresolvableTarget):
            apply_action(cell, PickupAction(arm="left", target_id="t", slot_id=1, tool_name="phillips_driver_5mm"))

    def test_return_with_empty_hand_rejected(self, cell):
        with pytest.raises(UnresolvableTarget):
            apply_action(cell, ReturnAction(arm="left"))

    def test_deterministic_replay_byte_identical(self, cell):
        def run() -> str:
            s = cell
            s = apply_action(s, PickupAction(arm="left", target_id="t1", slot_id=2, tool_name="hex_driver_2p5mm"))
            s = apply_action(s, grasp_at(s, "right", "upright_y", -1))
            s = apply_action(s, ReturnAction(arm="left"))
            return s.canonical()

        assert run() == run()


class TestConservation:
    def test_random_legal_walk_preserves_tools(self, cell):
        # every tool exists exactly once across slots and grippers at every step
        for seed in range(5):
            rng = child_stream(seed, "walk")
            state = cell
            expected = state.all_tools()
            for _ in range(200):
                choices = []
                for g in state.grippers:
                    if g.held is None:
                        for s in state.tool_stand:
                            if s.tool:
                                choices.append(PickupAction(arm=g.arm, target_id=f"tool_{s.slot_id}", slot_id=s.slot_id, tool_name=s.tool.name))
                    if g.held is not None and g.held.kind == "tool":
                        choices.append(ReturnAction(arm=g.arm))
                    if g.held is None or g.held.kind == "grasp":
                        for f in state.frames:
                            choices.append(grasp_at(state, g.arm, f.frame_id, rng.randrange(-3, 4)))
                act = rng.choice(choices)
                if rng.random() < 0.2:
                    import dataclasses

                    act = dataclasses.replace(act, fail=True)
                prev_step = state.step_index
                state = apply_action(state, act)
                assert state.step_index == prev_step + 1
                assert state.all_tools() == expected


class TestObserve:
    def test_zero_noise_is_transparent(self, cell):
        moved = apply_action(cell, grasp_at(cell, "left", "beam_x", 2))
        obs = observe(moved, previous=cell)
        assert obs.snapshot is moved
        assert obs.corrupted_fields == ()
        assert obs.captured_at_step == moved.step_index

    def test_freeze_masks_moved_pose(self, cell):
        moved = apply_action(cell, grasp_at(cell, "left", "beam_x", 2))
        noise = NoiseModel(p_freeze=1.0)
        obs = observe(moved, noise, child_stream(0, "n"), previous=cell)
        assert obs.snapshot.gripper("left").pose == cell.gripper("left").pose
        assert obs.corrupted_fields == ("grippers.left.pose",)
        # non-pose fields keep their true values
        assert obs.snapshot.gripper("left").held is not None

    def test_tool_invisible_masks_emptied_slot(self, cell):
        taken = apply_action(cell, PickupAction(arm="left", target_id="t", slot_id=4, tool_name="hex_driver_4mm"))
        noise = NoiseModel(p_tool_invisible=1.0)
        obs = observe(taken, noise, child_stream(0, "n"), previous=cell)
        assert obs.snapshot.slot(4).tool.name == "hex_driver_4mm"
        assert obs.corrupted_fields == ("tool_stand.4.tool",)

    def test_unchanged_fields_never_corrupted(self, cell):
        noise = NoiseModel(p_freeze=1.0, p_tool_invisible=1.0)
        obs = observe(cell, noise, child_stream(0, "n"), previous=cell)
        assert obs.corrupted_fields == ()
        assert obs.snapshot is cell

    def test_noise_without_rng_rejected(self, cell):
        with pytest.raises(ValueError):
            observe(cell, NoiseModel(p_freeze=0.5), rng=None, previous=cell)

    def test_noise_without_previous_is_transparent(self, cell):
        obs = observe(cell, NoiseModel(p_freeze=1.0), child_stream(0, "n"), previous=None)
        assert obs.corrupted_fields == ()

    def test_freeze_frequency_matches_probability(self, cell):
        # Monte Carlo oracle: empirical rate over independent streams must sit
        # near the configured probability (4.3 sigma at n=10000, p=0.3)
        moved = apply_action(cell, grasp_at(cell, "left", "beam_x", 2))
        noise = NoiseModel(p_freeze=0.3)
        n = 10_000
        hits = sum(
            1
            for i in range(n)
            if observe(moved, noise, child_stream(99, "mc", i), previous=cell).corrupted_fields
        )
        assert abs(hits / n - 0.3) < 0.02

    def test_same_stream_same_corruption(self, cell):
        moved = apply_action(cell, grasp_at(cell, "left", "beam_x", 2))
        noise = NoiseModel(p_freeze=0.5)
        a = observe(moved, noise, child_stream(7, "n"), previous=cell)
        b = observe(moved, noise, child_stream(7, "n"), previous=cell)
        assert a.snapshot.canonical() == b.snapshot.canonical()
        assert a.corrupted_fields == b.corrupted_fields

    def test_probability_bounds_validated(self):
        with pytest.raises(ValueError):
            NoiseModel(p_freeze=1.5)


class TestDiff:
    def test_displacement_below_threshold_ignored(self, cell):
        near = v_add(cell.gripper("left").pose.position, (0.0009, 0.0, 0.0))
        moved = apply_action(cell, GraspAction("left", "t", "beam_x", Pose(near)))
        d = diff(Observation(cell), Observation(moved))
        assert d.gripper_moves == ()

    def test_displacement_above_threshold_reported(self, cell):
        near = v_add(cell.gripper("left").pose.position, (0.0011, 0.0, 0.0))
        moved = apply_action(cell, GraspAction("left", "t", "beam_x", Pose(near)))
        d = diff(Observation(cell), Observation(moved))
        assert len(d.gripper_moves) == 1
        arm, disp = d.gripper_moves[0]
        assert arm == "left"
        assert abs(disp[0] - 0.0011) < 1e-12

    def test_slot_and_held_changes_reported(self, cell):
        taken = apply_action(cell, PickupAction(arm="right", target_id="t", slot_id=6, tool_name="hex_driver_6mm"))
        d = diff(Observation(cell), Observation(taken))
        assert d.slot_changes == ((6, "hex_driver_6mm", None),)
        assert len(d.held_changes) == 1 and d.held_changes[0][0] == "right"

    def test_diff_sees_only_snapshots(self, cell):
        # a frozen pose yields an empty delta even though the true state moved
        moved = apply_action(cell, grasp_at(cell, "left", "beam_x", 2))
        post = observe(moved, NoiseModel(p_freeze=1.0), child_stream(0, "n"), previous=cell)
        d = diff(Observation(cell), post)
        assert d.gripper_move("left") == (0.0, 0.0, 0.0)

    def test_mismatched_workcells_rejected(self, cell):
        import dataclasses

        other = dataclasses.replace(cell, tool_stand=cell.tool_stand[:-1])
        with pytest.raises(MismatchedWorkcell):
            diff(Observation(cell), Observation(other))

    def test_noop_diff_is_empty(self, cell):
        assert diff(Observation(cell), Observation(cell)).empty


class TestSerialization:
    def test_round_trip(self, cell):
        s = apply_action(cell, PickupAction(arm="left", target_id="t", slot_id=1, tool_name="hex_driver_2mm"))
        again = WorkcellState.from_dict(json.loads(s.canonical()))
        assert again.canonical() == s.canonical()
        assert again.digest() == s.digest()

    def test_canonical_form_has_sorted_keys_no_spaces(self, cell):
        text = cell.canonical()
        assert ": " not in text and ", " not in text
        parsed = json.loads(text)
        assert list(parsed.keys()) == sorted(parsed.keys())


class TestLoadWorkcell:
    def test_default_config_loads(self, cell):
        assert [f.frame_id for f in cell.frames] == ["beam_x", "upright_y"]
        assert [s.slot_id for s in cell.tool_stand] == [1, 2, 3, 4, 5, 6]
        assert all(s.tool for s in cell.tool_stand)
        assert {g.arm for g in cell.grippers} == {"left", "right"}
        assert cell.step_index == 0
        assert all(g.held is None for g in cell.grippers)

    def test_missing_file_raises_config_error(self, tmp_path):
        with pytest.raises(ConfigError):
            load_workcell(tmp_path / "nope.json")

    def test_bad_json_raises_config_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            load_workcell(p)

    def test_duplicate_tool_names_rejected(self, cell):
        doc = json.loads(CONFIG.read_text())
        doc["tool_slots"][1]["tool"]["name"] = doc["tool_slots"][0]["tool"]["name"]
        with pytest.raises(ConfigError):
            load_workcell(doc)

    def test_unknown_arm_rejected(self):
        doc = json.loads(CONFIG.read_text())
        doc["arms"]["tentacle"] = doc["arms"]["left"]
        with pytest.raises(ConfigError):
            load_workcell(doc)

    def test_frame_axis_normalized(self):
        doc = json.loads(CONFIG.read_text())
        doc["frames"][0]["axis"] = [2.0, 0.0, 0.0]
        cell = load_workcell(doc)
        assert cell.frame("beam_x").axis == (1.0, 0.0, 0.0)
