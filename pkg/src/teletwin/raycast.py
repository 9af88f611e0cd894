"""Depth-camera simulation: pinhole ray casting against scene primitives.

The per-pixel intersection loop is the hot path of the perception pipeline,
so it lives in a compiled kernel (teletwin._raycast_cy) with a vectorized
numpy fallback selected at import time.  Both kernels implement the same
primitive encoding and return identical results.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _raycast_py
from .scene import Scene
from .transforms import RigidTransform

try:
    from . import _raycast_cy as _default_kernel
    BACKEND = "compiled"
except ImportError:  # extension not built; numpy fallback
    _default_kernel = _raycast_py
    BACKEND = "python"

_kernel = _default_kernel

MAX_DEPTH = 4.0


def active_backend() -> str:
    return BACKEND


def set_backend(name: str) -> None:
    """Force 'compiled' or 'python'; used by tests and the benchmark."""
    global _kernel, BACKEND
    if name == "python":
        _kernel, BACKEND = _raycast_py, "python"
    elif name == "compiled":
        from . import _raycast_cy  # raises if not built
        _kernel, BACKEND = _raycast_cy, "compiled"
    else:
        raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class CameraIntrinsics:
    width: int = 640
    height: int = 480
    fx: float = 600.0
    fy: float = 600.0
    cx: float = 320.0
    cy: float = 240.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the frame")


@dataclass
class DepthFrame:
    intrinsics: CameraIntrinsics
    samples: np.ndarray  # (height, width) float64 meters, 0 = invalid
    timestamp: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        expected = (self.intrinsics.height, self.intrinsics.width)
        if self.samples.shape != expected:
            raise ValueError(f"samples shape {self.samples.shape} != {expected}")
        if np.any(self.samples < 0):
            raise ValueError("depth samples must be nonnegative")


def pixel_rays(intr: CameraIntrinsics) -> np.ndarray:
    """Camera-frame ray directions with unit z, one per integer pixel (v, u)."""
    u = (np.arange(intr.width) - intr.cx) / intr.fx
    v = (np.arange(intr.height) - intr.cy) / intr.fy
    dirs = np.empty((intr.height, intr.width, 3))
    dirs[..., 0] = u[None, :]
    dirs[..., 1] = v[:, None]
    dirs[..., 2] = 1.0
    return dirs


def render_hits(scene: Scene, camera_pose: RigidTransform, intr: CameraIntrinsics,
                max_depth: float = MAX_DEPTH):
    """(depth, object-index) maps; camera_pose maps world -> camera."""
    kinds, params = scene.primitive_arrays()
    cam_to_world = camera_pose.inverse()
    origin = cam_to_world.translation
    dirs = pixel_rays(intr) @ cam_to_world.rotation.T
    depth, hits = _kernel.cast_rays(origin, dirs, kinds, params, max_depth)
    return depth, hits


def render_depth(scene: Scene, camera_pose: RigidTransform, intr: CameraIntrinsics,
                 max_depth: float = MAX_DEPTH, quantize_mm: bool = False,
                 timestamp: float = 0.0) -> DepthFrame:
    depth, _ = render_hits(scene, camera_pose, intr, max_depth)
    if quantize_mm:
        depth = np.round(depth * 1000.0) / 1000.0
    return DepthFrame(intrinsics=intr, samples=depth, timestamp=timestamp)


def save_depth_frame(frame: DepthFrame, path) -> None:
    """Text header 'width height fx fy cx cy' + 16-bit LE millimeter raster."""
    intr = frame.intrinsics
    header = f"{intr.width} {intr.height} {intr.fx} {intr.fy} {intr.cx} {intr.cy}\n"
    mm = np.clip(np.round(frame.samples * 1000.0), 0, 65535).astype("<u2")
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(mm.tobytes())


def load_depth_frame(path) -> DepthFrame:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").split()
        if len(header) != 6:
            raise ValueError("bad depth-frame header")
        w, h = int(header[0]), int(header[1])
        fx, fy, cx, cy = (float(x) for x in header[2:])
        raw = f.read()
    expected = w * h * 2
    if len(raw) != expected:
        raise ValueError(f"depth raster is {len(raw)} bytes, expected {expected}")
    mm = np.frombuffer(raw, dtype="<u2").reshape(h, w)
    intr = CameraIntrinsics(width=w, height=h, fx=fx, fy=fy, cx=cx, cy=cy)
    return DepthFrame(intrinsics=intr, samples=mm.astype(np.float64) / 1000.0)


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> RigidTransform:
    """World->camera pose with +z forward, +x right, +y down in image coords."""
    eye = np.asarray(eye, dtype=float)
    fwd = np.asarray(target, dtype=float) - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.asarray(up, dtype=float)
    right = np.cross(fwd, up)
    n = np.linalg.norm(right)
    if n < 1e-9:
        right = np.cross(fwd, (1.0, 0.0, 0.0))
        n = np.linalg.norm(right)
    right /= n
    down = np.cross(fwd, right)
    r_wc = np.stack([right, down, fwd], axis=1)  # camera axes as world columns
    r = r_wc.T
    return RigidTransform(r, -r @ eye)
