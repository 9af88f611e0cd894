from pathlib import Path

import numpy as np
import pytest

from teletwin.control import EETarget
from teletwin.kinematics import DHModel, forward_kinematics
from teletwin.raycast import CameraIntrinsics, look_at, render_hits
from teletwin.scene import Scene, SceneObject, SceneError, load_scene
from teletwin.simenv import RobotSim, oracle_detect
from teletwin.transforms import wrap_angle

INTR = CameraIntrinsics()
MODEL = DHModel.ur3()
CONFIGS = Path(__file__).resolve().parents[1] / "configs"

TOOL_ROT = np.column_stack([(0.0, 0.0, 1.0), (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)])


def tube_at(y, oid="tube"):
    return SceneObject.cylinder(oid, "centrifuge_test_tube", [0.0, y, 0.0], 0.015, 0.115)


def cam():
    return look_at([0.0, -0.5, 0.0], [0.0, 1.0, 0.0])


def test_oracle_single_cylinder_full_mode():
    scene = Scene(objects=[tube_at(0.0)])
    dets = oracle_detect(scene, cam(), INTR, mode="full")
    assert len(dets) == 1
    det = dets[0]
    assert det.part == "full" and det.confidence == 1.0
    _, hits = render_hits(scene, cam(), INTR)
    np.testing.assert_array_equal(det.mask, hits == 0)


def test_oracle_halves_partition_full():
    scene = Scene(objects=[tube_at(0.0)])
    full = oracle_detect(scene, cam(), INTR, mode="full")[0]
    halves = oracle_detect(scene, cam(), INTR, mode="halves")
    assert {d.part for d in halves} == {"top", "bottom"}
    union = np.zeros_like(full.mask)
    for d in halves:
        assert not (union & d.mask).any()  # disjoint
        union |= d.mask
    np.testing.assert_array_equal(union, full.mask)


def test_oracle_occluded_object_absent():
    small = tube_at(0.5, oid="behind")
    blocker = SceneObject.box("wall", "", [-0.5, 0.3, -0.5], [0.5, 0.35, 0.5])
    dets = oracle_detect(Scene(objects=[blocker, small]), cam(), INTR)
    assert dets == []


def test_oracle_masks_disjoint_and_depth_valid():
    t2 = SceneObject.cylinder("t2", "swab", [0.03, 0.3, 0.0], 0.015, 0.115)
    scene = Scene(objects=[tube_at(0.0), t2])
    depth, _ = render_hits(scene, cam(), INTR)
    dets = oracle_detect(scene, cam(), INTR)
    assert len(dets) == 2
    assert not (dets[0].mask & dets[1].mask).any()
    for d in dets:
        assert np.all(depth[d.mask] > 0)


def home_sim():
    scene = load_scene(CONFIGS / "scene_tube.toml")
    return RobotSim(MODEL, scene), scene


def test_step_fixed_point():
    sim, _ = home_sim()
    state = sim.home_state()
    target = EETarget(state.ee.position, 0.0, state.ee.rotation)
    nxt, events = sim.step(state, target, 0.02)
    assert events == []
    assert nxt.tick == state.tick + 1
    np.testing.assert_allclose(nxt.joints, state.joints, atol=1e-12)


def test_step_speed_cap_and_fk_consistency():
    sim, _ = home_sim()
    state = sim.home_state()
    far = EETarget(state.ee.position + [0.0, 0.3, 0.0], 0.0, state.ee.rotation)
    dt = 0.02
    for _ in range(30):
        nxt, _ = sim.step(state, far, dt)
        assert np.max(np.abs(wrap_angle(nxt.joints - state.joints))) <= sim.joint_speed_cap * dt + 1e-9
        fk = forward_kinematics(MODEL, nxt.joints)
        np.testing.assert_allclose(fk.position, nxt.ee.position, atol=1e-9)
        state = nxt


def test_step_unreachable_holds_pose():
    sim, _ = home_sim()
    state = sim.home_state()
    bad = EETarget([3.0, 3.0, 3.0], 0.0, state.ee.rotation)
    nxt, events = sim.step(state, bad, 0.02)
    assert any(e.name == "ik_unreachable" for e in events)
    np.testing.assert_array_equal(nxt.joints, state.joints)


def drive_to(sim, state, pos, rot, steps=80):
    target = EETarget(pos, 0.0, rot)
    for _ in range(steps):
        state, _ = sim.step(state, target, 0.02)
    return state


def test_grasp_and_release_cycle():
    sim, scene = home_sim()
    tube = scene.find("tube")
    state = sim.home_state()
    state = drive_to(sim, state, tube.center, TOOL_ROT, steps=400)
    np.testing.assert_allclose(state.ee.position, tube.center, atol=1e-6)

    # close the gripper; grasp must fire exactly once
    grasps = 0
    target = EETarget(tube.center, 1.0, TOOL_ROT)
    for _ in range(60):
        state, events = sim.step(state, target, 0.02)
        grasps += sum(1 for e in events if e.name == "grasp")
    assert grasps == 1
    assert state.held_object == "tube"

    # carry it: object follows the tool
    lifted = tube.center + np.array([0.0, 0.0, 0.05])
    target = EETarget(lifted, 1.0, TOOL_ROT)
    for _ in range(200):
        state, _ = sim.step(state, target, 0.02)
    np.testing.assert_allclose(scene.find("tube").center, lifted, atol=1e-6)

    # reopen: release must follow the prior grasp
    target = EETarget(lifted, 0.0, TOOL_ROT)
    released = 0
    for _ in range(60):
        state, events = sim.step(state, target, 0.02)
        released += sum(1 for e in events if e.name == "release")
    assert released == 1
    assert state.held_object is None


def test_close_without_contact_never_grasps():
    sim, scene = home_sim()
    state = sim.home_state()
    target = EETarget(state.ee.position, 1.0, state.ee.rotation)
    for _ in range(60):
        state, events = sim.step(state, target, 0.02)
        assert not any(e.name == "grasp" for e in events)
    assert state.held_object is None


def test_scene_file_round_trip_fields():
    scene = load_scene(CONFIGS / "scene_tube.toml")
    tube = scene.find("tube")
    assert tube.cls == "centrifuge_test_tube"
    assert tube.radius == pytest.approx(0.015)
    assert tube.height == pytest.approx(0.115)
    assert scene.camera["width"] == 640
    # home config reaches the configured start pose
    ee = forward_kinematics(MODEL, scene.home_joints)
    np.testing.assert_allclose(ee.position, [0.22, -0.25, 0.20], atol=1e-9)


def test_grasp_mark_must_lie_on_surface():
    with pytest.raises(SceneError):
        SceneObject.cylinder("t", "swab", [0, 0, 0], 0.01, 0.1, grasp_mark=[0.5, 0, 0])


def test_scene_rejects_duplicate_ids():
    with pytest.raises(SceneError):
        Scene(objects=[tube_at(0.0), tube_at(0.1)])
