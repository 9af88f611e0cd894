import numpy as np
import pytest

from teletwin.pose import (
    AlphaFilter,
    Detection,
    EmptyRegion,
    InvalidDepth,
    WorkspaceBounds,
    alpha_update,
    average_distance,
    camera_to_world,
    deproject,
    detection_from_line,
    detection_to_line,
    estimate_center,
    filter_pixels,
    load_detections,
    project,
    save_detections,
)
from teletwin.raycast import CameraIntrinsics, look_at, render_depth
from teletwin.scene import Scene, SceneObject
from teletwin.simenv import oracle_detect
from teletwin.transforms import RigidTransform

INTR = CameraIntrinsics()
BOUNDS = WorkspaceBounds()

TUBE_R, TUBE_H = 0.015, 0.115


def tube_scene(center=(0.0, 0.5, 0.0), with_wall=False):
    objs = [SceneObject.cylinder("tube", "centrifuge_test_tube", center, TUBE_R, TUBE_H)]
    if with_wall:
        objs.append(SceneObject.plane("wall", normal=[0, -1, 0], offset=-1.2))
    return Scene(objects=objs)


def cam_at(eye, target=(0.0, 0.5, 0.0)):
    return look_at(eye, target)


def frame_and_dets(scene, pose, mode="full"):
    frame = render_depth(scene, pose, INTR)
    dets = oracle_detect(scene, pose, INTR, mode=mode)
    return frame, dets


def test_filter_all_invalid_is_empty():
    frame = render_depth(Scene(objects=[]), cam_at([0, -0.5, 0]), INTR)
    pixels, depths = filter_pixels(frame, (10, 10, 5, 5), BOUNDS)
    assert len(pixels) == 0 and len(depths) == 0


def test_filter_keeps_interval_members():
    samples = np.zeros((480, 640))
    samples[100, 100] = 0.3
    samples[100, 101] = 0.6
    samples[100, 102] = 5.0
    frame = render_depth(Scene(objects=[]), cam_at([0, -0.5, 0]), INTR)
    frame.samples = samples
    _, depths = filter_pixels(frame, (100, 100, 3, 1), WorkspaceBounds(0.2, 1.5))
    assert sorted(depths.tolist()) == [0.3, 0.6]


def test_filter_mask_subset_of_bbox_on_render():
    scene = tube_scene(with_wall=True)
    pose = cam_at([0.0, -0.1, 0.0])
    frame, dets = frame_and_dets(scene, pose)
    det = dets[0]
    px_mask, _ = filter_pixels(frame, det.mask, BOUNDS)
    px_bbox, _ = filter_pixels(frame, det.bbox, BOUNDS)
    mask_set = {tuple(p) for p in px_mask}
    bbox_set = {tuple(p) for p in px_bbox}
    assert mask_set <= bbox_set


def test_average_distance_basics():
    assert average_distance([1.0]) == 1.0
    assert average_distance([0.4, 0.6]) == pytest.approx(0.5, abs=1e-15)
    rng = np.random.default_rng(1)
    d = rng.uniform(0.2, 1.0, 50)
    assert d.min() <= average_distance(d) <= d.max()
    assert average_distance(d) == pytest.approx(average_distance(d[::-1]), abs=1e-15)
    with pytest.raises(EmptyRegion):
        average_distance([])


def test_mask_mean_below_bbox_mean_with_background():
    # wall pixels inside the bbox but outside the mask drag the bbox mean up
    scene = tube_scene(with_wall=True)
    pose = cam_at([0.0, -0.1, 0.0])
    frame, dets = frame_and_dets(scene, pose)
    det = dets[0]
    _, d_mask = filter_pixels(frame, det.mask, BOUNDS)
    _, d_bbox = filter_pixels(frame, det.bbox, BOUNDS)
    assert average_distance(d_mask) < average_distance(d_bbox)


def test_deproject_principal_point():
    np.testing.assert_allclose(deproject((INTR.cx, INTR.cy), 1.0, INTR), [0, 0, 1.0], atol=1e-15)


def test_deproject_unit_tangent():
    np.testing.assert_allclose(deproject((INTR.cx + INTR.fx, INTR.cy), 2.0, INTR),
                               [2.0, 0.0, 2.0], atol=1e-12)


def test_project_deproject_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(100):
        u = rng.uniform(0, INTR.width - 1)
        v = rng.uniform(0, INTR.height - 1)
        d = rng.uniform(0.05, 3.0)
        uu, vv = project(deproject((u, v), d, INTR), INTR)
        assert abs(uu - u) < 1e-9 and abs(vv - v) < 1e-9


def test_deproject_requires_positive_depth():
    with pytest.raises(InvalidDepth):
        deproject((10, 10), 0.0, INTR)


def test_estimate_center_lateral_error_without_offset():
    scene = tube_scene()
    pose = cam_at([0.0, -0.1, 0.0])
    frame, dets = frame_and_dets(scene, pose)
    center_cam = estimate_center(dets[0], frame, BOUNDS, INTR, mode="mask",
                                 surface_offset=0.0)
    truth_cam = pose.apply([0.0, 0.5, 0.0])
    lateral = np.linalg.norm((center_cam - truth_cam)[[0, 1]])
    assert lateral < TUBE_R / 2
    # depth sits on the near surface, short of the axis by roughly the radius
    assert center_cam[2] < truth_cam[2]


def test_estimate_center_with_radius_offset_hits_axis():
    scene = tube_scene()
    pose = cam_at([0.0, -0.1, 0.0])
    frame, dets = frame_and_dets(scene, pose)
    center_cam = estimate_center(dets[0], frame, BOUNDS, INTR, mode="mask",
                                 surface_offset=TUBE_R)
    world = camera_to_world(center_cam, pose)
    assert np.linalg.norm(world - [0.0, 0.5, 0.0]) < 0.008


def test_half_estimates_match_full_after_correction():
    scene = tube_scene()
    pose = cam_at([0.0, -0.1, 0.0])
    frame = render_depth(scene, pose, INTR)
    full = oracle_detect(scene, pose, INTR, mode="full")[0]
    halves = oracle_detect(scene, pose, INTR, mode="halves")
    ref = estimate_center(full, frame, BOUNDS, INTR, mode="mask", surface_offset=TUBE_R)
    up_cam = pose.rotation @ np.array([0.0, 0.0, 1.0])
    for det in halves:
        est = estimate_center(det, frame, BOUNDS, INTR, mode="mask",
                              object_height=TUBE_H, up_in_camera=up_cam,
                              surface_offset=TUBE_R)
        assert np.linalg.norm(est - ref) < 0.005


def test_estimate_raises_on_all_invalid_region():
    frame = render_depth(Scene(objects=[]), cam_at([0, -0.5, 0]), INTR)
    mask = np.zeros((480, 640), dtype=bool)
    mask[50:60, 50:60] = True
    det = Detection("swab", 1.0, (50, 50, 10, 10), mask)
    with pytest.raises(EmptyRegion):
        estimate_center(det, frame, BOUNDS, INTR, mode="mask")


def test_camera_to_world_identities():
    p = np.array([0.1, -0.2, 0.7])
    np.testing.assert_allclose(camera_to_world(p, RigidTransform.identity()), p, atol=1e-15)
    shift = RigidTransform(np.eye(3), [1.0, 2.0, 3.0])
    np.testing.assert_allclose(camera_to_world(p, shift), p - [1.0, 2.0, 3.0], atol=1e-15)
    pose = cam_at([0.3, -0.4, 0.2])
    np.testing.assert_allclose(camera_to_world(pose.apply(p), pose), p, atol=1e-12)


def test_alpha_identity_when_one():
    f = AlphaFilter(alpha=1.0)
    rng = np.random.default_rng(3)
    for _ in range(10):
        x = rng.normal(size=3)
        _, y = alpha_update(f, x)
        np.testing.assert_array_equal(y, x)


def test_alpha_half_step():
    f = AlphaFilter(alpha=0.5)
    f.update([0.0, 0.0, 0.0])
    _, y = alpha_update(f, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(y, [0.5, 0.5, 0.5], atol=1e-15)


def test_alpha_closed_form_constant_input():
    alpha, y0, x, n = 0.2, np.array([1.0, -2.0, 3.0]), np.array([0.5, 0.5, 0.5]), 17
    f = AlphaFilter(alpha=alpha)
    f.update(y0)
    for _ in range(n):
        _, y = alpha_update(f, x)
    np.testing.assert_allclose(y, x + (1 - alpha) ** n * (y0 - x), atol=1e-12)


def test_alpha_output_is_convex_combination():
    f = AlphaFilter(alpha=0.3)
    rng = np.random.default_rng(4)
    prev = f.update(rng.normal(size=3))
    for _ in range(50):
        x = rng.normal(size=3)
        _, y = alpha_update(f, x)
        lo = np.minimum(prev, x) - 1e-12
        hi = np.maximum(prev, x) + 1e-12
        assert np.all(y >= lo) and np.all(y <= hi)
        prev = y


def test_alpha_reduces_noise_variance():
    rng = np.random.default_rng(5)
    xs = rng.normal(0.0, 1.0, size=(1000, 3))
    f = AlphaFilter(alpha=0.2)
    ys = np.array([f.update(x) for x in xs])
    assert ys[200:].var(axis=0).max() < xs[200:].var(axis=0).min()


def test_detection_file_round_trip(tmp_path):
    scene = tube_scene()
    pose = cam_at([0.05, -0.2, 0.02])
    dets = oracle_detect(scene, pose, INTR, mode="halves")
    path = tmp_path / "dets.txt"
    save_detections(dets, path)
    back = load_detections(path, (INTR.height, INTR.width))
    assert len(back) == len(dets)
    for a, b in zip(dets, back):
        assert a.cls == b.cls and a.part == b.part and a.bbox == b.bbox
        np.testing.assert_array_equal(a.mask, b.mask)


def test_detection_line_is_single_line():
    mask = np.zeros((480, 640), dtype=bool)
    mask[5:9, 7:12] = True
    det = Detection("swab", 0.75, (7, 5, 5, 4), mask)
    line = detection_to_line(det)
    assert "\n" not in line
    back = detection_from_line(line, mask.shape)
    np.testing.assert_array_equal(back.mask, mask)


def test_detection_validation():
    mask = np.zeros((480, 640), dtype=bool)
    mask[5:9, 7:12] = True
    with pytest.raises(ValueError):
        Detection("swab", 1.5, (7, 5, 5, 4), mask)  # confidence
    with pytest.raises(ValueError):
        Detection("swab", 0.5, (8, 5, 4, 4), mask)  # mask outside bbox
    with pytest.raises(ValueError):
        Detection("swab", 0.5, (7, 5, 5, 4), np.zeros((480, 640), bool))  # empty


def test_bounds_validation():
    with pytest.raises(ValueError):
        WorkspaceBounds(0.0, 1.0)
    with pytest.raises(ValueError):
        WorkspaceBounds(1.0, 0.5)
