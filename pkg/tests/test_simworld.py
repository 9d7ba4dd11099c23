import random

import pytest

from gazepick.errors import RobotBusyError, SceneError
from gazepick.perception import View
from gazepick.simworld import (
    ALLOWED_EDGES,
    ObjectLocation,
    PhaseDurations,
    RobotArm,
    RobotPhase,
    load_scene,
    project,
)


def minimal_config(objects=None):
    return {
        "table": {"width_m": 0.6, "depth_m": 0.9},
        "views": {
            "user": {
                "plane": {
                    "origin": [0.0, 0.95, 0.45],
                    "u_axis": [1.0, 0.0, 0.0],
                    "v_axis": [0.0, 0.0, -1.0],
                    "width_m": 0.6,
                    "height_m": 0.45,
                    "res_w": 1920,
                    "res_h": 1080,
                },
                "image": [1280, 720],
                "eye": [0.3, -0.6, 0.25],
            },
            "robot": {
                "origin": [0.0, 0.9, 0.0],
                "u_axis": [1.0, 0.0, 0.0],
                "v_axis": [0.0, -1.0, 0.0],
                "pixels_per_meter": 1000,
                "image": [600, 900],
            },
        },
        "objects": objects if objects is not None else [
            {"id": "mouse-1", "label": "mouse",
             "position": [0.3, 0.45, 0.02], "half_extents": [0.05, 0.03, 0.02]},
        ],
    }


class TestLoadScene:
    def test_minimal_config(self):
        scene = load_scene(minimal_config())
        assert len(scene.objects) == 1
        assert scene.objects["mouse-1"].label == "mouse"

    def test_out_of_table_position_rejected_naming_bounds(self):
        cfg = minimal_config([
            {"id": "cup-1", "label": "cup",
             "position": [0.7, 0.1, 0.03], "half_extents": [0.03, 0.03, 0.03]},
        ])
        with pytest.raises(SceneError, match=r"cup-1.*position\.x.*0\.6"):
            load_scene(cfg)

    def test_demo_scene_labels(self, demo_scene):
        assert sorted(o.label for o in demo_scene.objects.values()) == [
            "bottle", "mouse", "pen", "tape",
        ]

    def test_duplicate_id_rejected(self):
        objs = minimal_config()["objects"] * 2
        with pytest.raises(SceneError, match="duplicate id"):
            load_scene(minimal_config(objs))

    def test_overlapping_footprints_allowed(self):
        cfg = minimal_config([
            {"id": "a", "label": "mouse",
             "position": [0.3, 0.45, 0.02], "half_extents": [0.05, 0.05, 0.02]},
            {"id": "b", "label": "tape",
             "position": [0.32, 0.47, 0.02], "half_extents": [0.05, 0.05, 0.02]},
        ])
        scene = load_scene(cfg)
        assert len(scene.objects) == 2

    def test_missing_key_named(self):
        cfg = minimal_config()
        del cfg["views"]["robot"]["pixels_per_meter"]
        with pytest.raises(SceneError, match="pixels_per_meter"):
            load_scene(cfg)

    def test_table_must_fit_in_robot_view(self):
        cfg = minimal_config()
        cfg["views"]["robot"]["image"] = [300, 900]  # table needs 600 px wide
        with pytest.raises(SceneError, match="outside the 300x900 image"):
            load_scene(cfg)

    def test_bad_json_file(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{nope")
        with pytest.raises(SceneError, match="not valid JSON"):
            load_scene(p)


class TestProject:
    def test_empty_scene(self):
        scene = load_scene(minimal_config([]))
        assert scene.project(View.ROBOT).boxes == ()

    def test_centered_cube_footprint(self):
        cfg = minimal_config([
            {"id": "cube", "label": "cube",
             "position": [0.3, 0.45, 0.05], "half_extents": [0.05, 0.05, 0.05]},
        ])
        scene = load_scene(cfg)
        (box,) = scene.project(View.ROBOT).boxes
        assert (box.u1, box.v1, box.u2, box.v2) == (250.0, 400.0, 350.0, 500.0)

    def test_disjoint_objects_stay_disjoint_top_down(self, demo_scene):
        boxes = demo_scene.project(View.ROBOT).boxes
        for i, a in enumerate(boxes):
            for b in boxes[i + 1:]:
                separated = (
                    a.u2 < b.u1 or b.u2 < a.u1 or a.v2 < b.v1 or b.v2 < a.v1
                )
                assert separated

    def test_tall_object_clipped_never_dropped(self):
        # bottle pokes above the plane's top edge in the user view
        cfg = minimal_config([
            {"id": "tall", "label": "bottle",
             "position": [0.3, 0.45, 0.4], "half_extents": [0.03, 0.03, 0.4]},
        ])
        scene = load_scene(cfg)
        (box,) = scene.project(View.USER).boxes
        assert box.v1 == 0.0  # clipped at the frame edge
        assert box.instance_id == "tall"

    def test_deterministic_and_label_preserving(self, demo_scene):
        a = demo_scene.project(View.USER)
        b = demo_scene.project(View.USER)
        assert a.boxes == b.boxes
        for box in a.boxes:
            assert demo_scene.object(box.instance_id).label == box.label

    def test_module_level_wrapper(self, demo_scene):
        assert project(demo_scene, View.ROBOT).boxes == demo_scene.project(View.ROBOT).boxes


class TestRobotArm:
    def grasp_target(self, scene, obj_id="mouse-1"):
        dets = scene.project(View.ROBOT)
        return next(b for b in dets.boxes if b.instance_id == obj_id)

    def test_full_cycle_timing(self):
        scene = load_scene(minimal_config())
        arm = RobotArm(scene)
        arm.command_grasp(self.grasp_target(scene), 1000)
        assert arm.phase is RobotPhase.MOVING_TO_TARGET
        arm.tick(2600)
        assert arm.phase is RobotPhase.GRASPING
        arm.tick(5000)
        assert arm.phase is RobotPhase.DONE
        assert arm.phase_entered_ms == 5000  # 1000 + 1500+500+1500+500
        assert scene.objects["mouse-1"].location is ObjectLocation.IN_PLACE_ZONE
        assert scene.objects["mouse-1"].position.x > scene.table_width_m

    def test_single_giant_tick_crosses_all_phases(self):
        scene = load_scene(minimal_config())
        arm = RobotArm(scene)
        arm.command_grasp(self.grasp_target(scene), 0)
        steps = arm.tick(10_000)
        assert [s[1] for s in steps] == [
            RobotPhase.GRASPING,
            RobotPhase.MOVING_TO_PLACE,
            RobotPhase.RELEASING,
            RobotPhase.DONE,
        ]
        assert [s[2] for s in steps] == [1500, 2000, 3500, 4000]

    def test_stale_target_faults_with_reason(self):
        scene = load_scene(minimal_config())
        target = self.grasp_target(scene)
        scene.objects["mouse-1"].location = ObjectLocation.IN_PLACE_ZONE
        arm = RobotArm(scene)
        arm.command_grasp(target, 0)
        assert arm.phase is RobotPhase.FAULTED
        assert "mouse-1" in arm.fault_reason

    def test_busy_until_done(self):
        scene = load_scene(minimal_config([
            {"id": "a", "label": "mouse",
             "position": [0.2, 0.45, 0.02], "half_extents": [0.04, 0.03, 0.02]},
            {"id": "b", "label": "tape",
             "position": [0.4, 0.45, 0.02], "half_extents": [0.04, 0.03, 0.02]},
        ]))
        arm = RobotArm(scene)
        dets = scene.project(View.ROBOT)
        arm.command_grasp(dets.boxes[0], 0)
        with pytest.raises(RobotBusyError):
            arm.command_grasp(dets.boxes[1], 100)
        arm.tick(4000)
        assert arm.phase is RobotPhase.DONE
        arm.reset(4000)
        arm.command_grasp(self.grasp_target(scene, "b"), 4100)
        assert arm.phase is RobotPhase.MOVING_TO_TARGET

    def test_fault_injection_restores_object(self):
        scene = load_scene(minimal_config())
        arm = RobotArm(scene, p_fault=1.0, seed=3)
        arm.command_grasp(self.grasp_target(scene), 0)
        arm.tick(10_000)
        assert arm.phase is RobotPhase.FAULTED
        assert scene.objects["mouse-1"].location is ObjectLocation.ON_TABLE

    def test_abort_mid_carry_puts_object_back(self):
        scene = load_scene(minimal_config())
        arm = RobotArm(scene)
        arm.command_grasp(self.grasp_target(scene), 0)
        arm.tick(2500)  # object now grasped, moving to place
        assert scene.objects["mouse-1"].location is ObjectLocation.GRASPED
        arm.reset(2600)
        assert arm.phase is RobotPhase.IDLE
        assert scene.objects["mouse-1"].location is ObjectLocation.ON_TABLE

    def test_custom_durations(self):
        scene = load_scene(minimal_config())
        arm = RobotArm(scene, PhaseDurations(100, 50, 100, 50))
        arm.command_grasp(self.grasp_target(scene), 0)
        arm.tick(300)
        assert arm.phase is RobotPhase.DONE

    @pytest.mark.parametrize("seed", range(10))
    def test_random_command_fuzz_never_leaves_edge_set(self, seed):
        rng = random.Random(seed)
        scene = load_scene(minimal_config())
        arm = RobotArm(scene, p_fault=0.3, seed=seed)
        t = 0
        for _ in range(200):
            t += rng.randrange(1, 2000)
            action = rng.random()
            if action < 0.4:
                arm.tick(t)
            elif action < 0.7:
                target = self.grasp_target(scene) if scene.on_table() else None
                try:
                    if target is not None:
                        arm.command_grasp(target, t)
                except RobotBusyError:
                    pass
            else:
                arm.reset(t)
            # object-count conservation
            assert len(scene.objects) == 1
        for edge in ((a, b) for a, b, _ in arm.transitions):
            assert edge in ALLOWED_EDGES

    def test_done_implies_relocation(self):
        scene = load_scene(minimal_config())
        arm = RobotArm(scene)
        arm.command_grasp(self.grasp_target(scene), 0)
        arm.tick(4000)
        assert arm.phase is RobotPhase.DONE
        obj = scene.objects["mouse-1"]
        assert obj.location is ObjectLocation.IN_PLACE_ZONE
        assert obj not in scene.on_table()
