"""Haptic-to-robot workspace mapping: scaling, axis locks, frame transform.

The master device covers a 160 mm sphere and the arm a 500 mm one, so samples
are scaled by an integer factor of 1..5, optionally frozen on locked axes,
then clamped radially so the commanded end-effector point never leaves the
robot workspace sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .transforms import is_rotation

HAPTIC_RADIUS = 0.160
ROBOT_RADIUS = 0.500
VALID_SCALES = (1, 2, 3, 4, 5)
GRIPPER_CLOSE_THRESHOLD = 0.5


class ControlError(Exception):
    pass


class InvalidScale(ControlError):
    pass


class TooManyLocks(ControlError):
    pass


@dataclass(frozen=True)
class HapticSample:
    position: np.ndarray
    gripper: float
    timestamp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))


@dataclass(frozen=True)
class EETarget:
    position: np.ndarray
    gripper: float
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "orientation", np.asarray(self.orientation, dtype=float).reshape(3, 3))


@dataclass(frozen=True)
class ControlConfig:
    scale: int = 1
    axis_locks: tuple = (False, False, False)
    frame_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    workspace_center: np.ndarray = field(default_factory=lambda: np.zeros(3))
    robot_radius: float = ROBOT_RADIUS
    ee_orientation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if self.scale not in VALID_SCALES:
            raise InvalidScale(f"scale must be one of {VALID_SCALES}, got {self.scale}")
        locks = tuple(bool(b) for b in self.axis_locks)
        if sum(locks) > 2:
            raise TooManyLocks("locking all three axes would freeze the end effector")
        object.__setattr__(self, "axis_locks", locks)
        object.__setattr__(self, "frame_rotation",
                           np.asarray(self.frame_rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "workspace_center",
                           np.asarray(self.workspace_center, dtype=float).reshape(3))
        object.__setattr__(self, "ee_orientation",
                           np.asarray(self.ee_orientation, dtype=float).reshape(3, 3))
        if not is_rotation(self.frame_rotation, tol=1e-9):
            raise ControlError("frame_rotation must be proper orthonormal")


def set_scale(cfg: ControlConfig, s: int) -> ControlConfig:
    if s not in VALID_SCALES:
        raise InvalidScale(f"scale must be one of {VALID_SCALES}, got {s}")
    return replace(cfg, scale=int(s))


def set_axis_locks(cfg: ControlConfig, locks) -> ControlConfig:
    locks = tuple(bool(b) for b in locks)
    if len(locks) != 3:
        raise ControlError("locks must be a boolean triple")
    if sum(locks) > 2:
        raise TooManyLocks("at most two translational axes may be locked")
    return replace(cfg, axis_locks=locks)


def clamp_to_sphere(p: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    """Project p radially onto the sphere boundary when it lies outside."""
    offset = p - center
    norm = float(np.linalg.norm(offset))
    if norm <= radius:
        return p
    return center + offset * (radius / norm)


def map_sample(sample: HapticSample, cfg: ControlConfig, prev: EETarget) -> EETarget:
    """Scaled, rotated, lock-respecting, sphere-clamped end-effector target."""
    p = cfg.workspace_center + cfg.scale * (cfg.frame_rotation @ sample.position)
    for ax in range(3):
        if cfg.axis_locks[ax]:
            p[ax] = prev.position[ax]
    p = clamp_to_sphere(p, cfg.workspace_center, cfg.robot_radius)
    return EETarget(position=p, gripper=float(sample.gripper),
                    orientation=cfg.ee_orientation)


def gripper_closed(fraction: float) -> bool:
    """Binary open/close view of the continuous gripper fraction."""
    return fraction >= GRIPPER_CLOSE_THRESHOLD
