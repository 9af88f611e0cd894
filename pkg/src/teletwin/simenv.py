"""Simulated robot + gripper executing end-effector targets in a scene.

Stands in for the physical cell: the arm tracks targets through the analytic
IK, a two-finger gripper grasps objects whose surface both finger contact
points touch, and an exact oracle detector plays the role of the trained
segmentation network over the ray-cast depth frames.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .control import EETarget, gripper_closed
from .kinematics import DHModel, EEPose, forward_kinematics, inverse_kinematics, select_solution
from .pose import Detection
from .raycast import CameraIntrinsics, pixel_rays, render_hits
from .scene import Scene
from .transforms import RigidTransform, wrap_angle

JOINT_SPEED_CAP = 3.14  # rad/s
GRIPPER_SLEW = 2.0      # fraction/s
GRIPPER_MAX_OPEN = 0.085  # Robotiq-style two-finger stroke, meters
CONTACT_TOL = 0.003     # m


@dataclass(frozen=True)
class Event:
    name: str
    tick: int
    data: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RobotState:
    joints: np.ndarray
    ee: EEPose
    gripper_fraction: float
    held_object: str | None
    tick: int

    def __post_init__(self):
        object.__setattr__(self, "joints", np.asarray(self.joints, dtype=float).reshape(6))


def oracle_detect(scene: Scene, camera_pose: RigidTransform, intr: CameraIntrinsics,
                  mode: str = "full") -> list[Detection]:
    """Exact per-object visibility masks from the depth ray cast.

    mode 'full' emits one detection per visible labeled object; 'halves'
    splits each object at its center height into top/bottom detections.
    """
    if mode not in ("full", "halves"):
        raise ValueError(f"mode must be 'full' or 'halves', got {mode!r}")
    depth, hits = render_hits(scene, camera_pose, intr)
    cam_to_world = camera_pose.inverse()

    detections = []
    for idx, obj in enumerate(scene.objects):
        if not obj.cls:
            continue  # table, walls: not dataset classes
        mask = hits == idx
        if not mask.any():
            continue
        if mode == "full":
            detections.append(_mask_to_detection(obj.cls, mask, "full"))
            continue
        # world height of every hit pixel, split at the object center plane
        vs, us = np.nonzero(mask)
        dirs = pixel_rays(intr)[vs, us] @ cam_to_world.rotation.T
        pts = cam_to_world.translation + depth[vs, us, None] * dirs
        above = pts[:, 2] >= obj.center[2]
        for part, sel in (("top", above), ("bottom", ~above)):
            if not sel.any():
                continue
            part_mask = np.zeros_like(mask)
            part_mask[vs[sel], us[sel]] = True
            detections.append(_mask_to_detection(obj.cls, part_mask, part))
    return detections


def _mask_to_detection(cls: str, mask: np.ndarray, part: str) -> Detection:
    vs, us = np.nonzero(mask)
    x0, x1 = int(us.min()), int(us.max())
    y0, y1 = int(vs.min()), int(vs.max())
    return Detection(cls=cls, confidence=1.0,
                     bbox=(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
                     mask=mask, part=part)


class RobotSim:
    """Digital twin of arm + gripper; `step` is the single state mutator."""

    def __init__(self, model: DHModel, scene: Scene,
                 joint_speed_cap: float = JOINT_SPEED_CAP,
                 gripper_slew: float = GRIPPER_SLEW,
                 contact_tol: float = CONTACT_TOL,
                 max_open: float = GRIPPER_MAX_OPEN):
        self.model = model
        self.scene = scene
        self.joint_speed_cap = joint_speed_cap
        self.gripper_slew = gripper_slew
        self.contact_tol = contact_tol
        self.max_open = max_open
        # guards held-object pose mutations against concurrent scene snapshots
        self.lock = threading.Lock()

    def home_state(self) -> RobotState:
        q = self.scene.home_joints.copy()
        return RobotState(joints=q, ee=forward_kinematics(self.model, q),
                          gripper_fraction=0.0, held_object=None, tick=0)

    def finger_points(self, ee: EEPose, fraction: float) -> tuple[np.ndarray, np.ndarray]:
        """Contact points of the two virtual fingers, along the tool y-axis."""
        half = self.max_open * (1.0 - fraction) / 2.0
        offset = ee.rotation[:, 1] * half
        return ee.position + offset, ee.position - offset

    def _touches(self, point: np.ndarray, obj) -> bool:
        return abs(obj.surface_distance(point)) <= self.contact_tol

    def step(self, state: RobotState, target: EETarget, dt: float) -> tuple[RobotState, list[Event]]:
        events: list[Event] = []
        tick = state.tick + 1
        q = state.joints.copy()

        sols = inverse_kinematics(self.model, EEPose(target.position, target.orientation))
        if len(sols):
            q_sel = select_solution(sols.solutions, q)
            dq = np.clip(wrap_angle(q_sel - q),
                         -self.joint_speed_cap * dt, self.joint_speed_cap * dt)
            q = q + dq
        else:
            events.append(Event("ik_unreachable", tick,
                                {"target": [float(x) for x in target.position]}))

        ee = forward_kinematics(self.model, q)

        df = np.clip(target.gripper - state.gripper_fraction,
                     -self.gripper_slew * dt, self.gripper_slew * dt)
        fraction = float(np.clip(state.gripper_fraction + df, 0.0, 1.0))
        closing = fraction > state.gripper_fraction

        held = state.held_object
        if held is None and closing:
            pa, pb = self.finger_points(ee, fraction)
            for obj in self.scene.objects:
                if not obj.graspable:
                    continue
                if self._touches(pa, obj) and self._touches(pb, obj):
                    held = obj.id
                    events.append(Event("grasp", tick, {
                        "object": obj.id,
                        "point": [float(x) for x in ee.position],
                    }))
                    break
        elif held is not None:
            if not gripper_closed(fraction):
                events.append(Event("release", tick, {
                    "object": held,
                    "point": [float(x) for x in ee.position],
                }))
                held = None

        if held is not None:
            # grasped object rides rigidly with the tool
            with self.lock:
                obj = self.scene.find(held)
                prev_ee = state.ee
                rel = prev_ee.rotation.T @ (obj.center - prev_ee.position)
                self.scene.move_object(held, ee.position + ee.rotation @ rel)

        return (RobotState(joints=q, ee=ee, gripper_fraction=fraction,
                           held_object=held, tick=tick), events)
