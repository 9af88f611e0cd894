"""Digital-twin teleoperation core with simulated perception and dataset tools."""

from .kinematics import (
    DHModel,
    EEPose,
    forward_kinematics,
    inverse_kinematics,
    select_solution,
)
from .raycast import CameraIntrinsics, DepthFrame, active_backend

__version__ = "0.1.0"

__all__ = [
    "DHModel",
    "EEPose",
    "forward_kinematics",
    "inverse_kinematics",
    "select_solution",
    "CameraIntrinsics",
    "DepthFrame",
    "active_backend",
    "__version__",
]
