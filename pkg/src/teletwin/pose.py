"""Object center estimation from detections + depth, with alpha smoothing.

A detection's pixel region is filtered against the workspace depth interval,
averaged into one distance, and deprojected at the region's reference pixel.
Half-object detections are shifted a quarter height along the vertical, and a
first-order alpha filter smooths the stream of centers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .raycast import CameraIntrinsics, DepthFrame
from .transforms import RigidTransform

DEPTH_BOUNDS_DEFAULT = (0.15, 1.5)
ALPHA_DEFAULT = 0.2

PARTS = ("full", "top", "bottom")


class PoseError(Exception):
    pass


class EmptyRegion(PoseError):
    """No valid depth pixels inside the requested region."""


class InvalidDepth(PoseError):
    pass


@dataclass
class Detection:
    """One detected instance: frame-sized binary mask plus its bounding box."""

    cls: str
    confidence: float
    bbox: tuple  # (x, y, w, h) integer pixels
    mask: np.ndarray  # (height, width) bool
    part: str = "full"

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        x, y, w, h = (int(v) for v in self.bbox)
        self.bbox = (x, y, w, h)
        if self.part not in PARTS:
            raise ValueError(f"part must be one of {PARTS}")
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError("confidence must be in [0, 1]")
        fh, fw = self.mask.shape
        if not (0 <= x and 0 <= y and x + w <= fw and y + h <= fh and w > 0 and h > 0):
            raise ValueError("bbox must lie within the frame")
        if not self.mask.any():
            raise ValueError("mask must be nonempty")
        vs, us = np.nonzero(self.mask)
        if us.min() < x or us.max() >= x + w or vs.min() < y or vs.max() >= y + h:
            raise ValueError("mask must be contained in the bbox footprint")


@dataclass
class WorkspaceBounds:
    d_min: float = DEPTH_BOUNDS_DEFAULT[0]
    d_max: float = DEPTH_BOUNDS_DEFAULT[1]
    world_aabb: tuple | None = None  # ((xmin,ymin,zmin), (xmax,ymax,zmax))

    def __post_init__(self):
        if not (0 < self.d_min < self.d_max):
            raise ValueError("need 0 < d_min < d_max")


@dataclass
class ObjectEstimate:
    cls: str
    center: np.ndarray  # world frame
    source: str  # "bbox" | "mask"
    pixel_count: int
    timestamp: float = 0.0

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        if self.pixel_count < 1:
            raise ValueError("pixel_count must be >= 1")


@dataclass
class AlphaFilter:
    """First-order smoother: value <- alpha*sample + (1-alpha)*value."""

    alpha: float = ALPHA_DEFAULT
    value: np.ndarray | None = None

    def __post_init__(self):
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError("alpha must be in (0, 1]")

    def update(self, sample) -> np.ndarray:
        sample = np.asarray(sample, dtype=float)
        if self.value is None:
            self.value = sample.copy()
        else:
            self.value = self.alpha * sample + (1.0 - self.alpha) * self.value
        return self.value.copy()


def alpha_update(state: AlphaFilter, sample) -> tuple[AlphaFilter, np.ndarray]:
    smoothed = state.update(sample)
    return state, smoothed


def filter_pixels(frame: DepthFrame, region, bounds: WorkspaceBounds):
    """Valid in-bounds depth pixels inside region (bbox tuple or bool mask).

    Returns (pixels, depths): pixels is (n, 2) int array of (u, v), depths is
    (n,) float.  Empty arrays are a legal result.
    """
    depth = frame.samples
    if isinstance(region, np.ndarray) and region.dtype == bool:
        vs, us = np.nonzero(region)
        d = depth[vs, us]
    else:
        x, y, w, h = (int(v) for v in region)
        if x < 0 or y < 0 or x + w > depth.shape[1] or y + h > depth.shape[0]:
            raise ValueError("region outside frame")
        sub = depth[y:y + h, x:x + w]
        vs, us = np.nonzero(np.ones_like(sub, dtype=bool))
        vs, us = vs + y, us + x
        d = depth[vs, us]
    keep = (d > 0) & (d >= bounds.d_min) & (d <= bounds.d_max)
    pixels = np.stack([us[keep], vs[keep]], axis=1) if keep.any() else np.zeros((0, 2), int)
    return pixels, d[keep]


def average_distance(depths) -> float:
    depths = np.asarray(depths, dtype=float)
    if depths.size == 0:
        raise EmptyRegion("no pixels to average")
    return float(depths.mean())


def deproject(pixel, depth: float, intr: CameraIntrinsics) -> np.ndarray:
    """Pinhole back-projection of (u, v) + depth into the camera frame."""
    if depth <= 0:
        raise InvalidDepth(f"depth must be positive, got {depth}")
    u, v = pixel
    return np.array([(u - intr.cx) * depth / intr.fx,
                     (v - intr.cy) * depth / intr.fy,
                     depth])


def project(point, intr: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = point
    if z <= 0:
        raise InvalidDepth("point behind the camera")
    return (x * intr.fx / z + intr.cx, y * intr.fy / z + intr.cy)


def mask_centroid_pixel(mask: np.ndarray) -> tuple[int, int]:
    """Integer-rounded centroid; must index the depth grid."""
    vs, us = np.nonzero(mask)
    return int(np.rint(us.mean())), int(np.rint(vs.mean()))


def bbox_center_pixel(bbox) -> tuple[int, int]:
    x, y, w, h = bbox
    return int(x + w // 2), int(y + h // 2)


def estimate_center(det: Detection, frame: DepthFrame, bounds: WorkspaceBounds,
                    intr: CameraIntrinsics, mode: str = "mask",
                    object_height: float = 0.0,
                    up_in_camera=(0.0, -1.0, 0.0),
                    surface_offset: float = 0.0) -> np.ndarray:
    """Camera-frame center of a detected object.

    mode picks the pixel region and reference pixel (bbox center or mask
    centroid).  Half detections are corrected a quarter object height along
    the world vertical (expressed in camera coordinates via up_in_camera).
    surface_offset pushes the point along the viewing ray, compensating the
    near-surface bias of depth averaging on convex objects.
    """
    if mode == "bbox":
        region = det.bbox
        ref = bbox_center_pixel(det.bbox)
    elif mode == "mask":
        region = det.mask
        ref = mask_centroid_pixel(det.mask)
    else:
        raise ValueError(f"mode must be 'bbox' or 'mask', got {mode!r}")

    _, depths = filter_pixels(frame, region, bounds)
    if depths.size == 0:
        raise EmptyRegion(f"no valid depth pixels for {det.cls} ({mode})")
    center = deproject(ref, average_distance(depths), intr)

    if surface_offset:
        ray = center / np.linalg.norm(center)
        center = center + surface_offset * ray

    if det.part != "full" and object_height > 0.0:
        up = np.asarray(up_in_camera, dtype=float)
        up = up / np.linalg.norm(up)
        quarter = object_height / 4.0
        center = center - quarter * up if det.part == "top" else center + quarter * up
    return center


def camera_to_world(point, camera_pose: RigidTransform) -> np.ndarray:
    """camera_pose maps world -> camera; apply its inverse to the point."""
    return camera_pose.inverse().apply(np.asarray(point, dtype=float))


# --- detection file ingestion -------------------------------------------
#
# One record per line so real detector output can replace the oracle:
#   class confidence x y w h part rle
# where rle is comma-separated run lengths over the bbox region in row-major
# order, alternating background/foreground and starting with background.

def rle_encode(mask: np.ndarray, bbox) -> str:
    x, y, w, h = bbox
    flat = np.asarray(mask[y:y + h, x:x + w], dtype=bool).ravel()
    runs = []
    current, count = False, 0
    for bit in flat:
        if bit == current:
            count += 1
        else:
            runs.append(count)
            current, count = bit, 1
    runs.append(count)
    return ",".join(str(r) for r in runs)


def rle_decode(rle: str, bbox, frame_shape) -> np.ndarray:
    x, y, w, h = bbox
    runs = [int(r) for r in rle.split(",") if r != ""]
    if sum(runs) != w * h:
        raise ValueError("run lengths do not cover the bbox")
    flat = np.zeros(w * h, dtype=bool)
    pos, val = 0, False
    for r in runs:
        if val:
            flat[pos:pos + r] = True
        pos += r
        val = not val
    mask = np.zeros(frame_shape, dtype=bool)
    mask[y:y + h, x:x + w] = flat.reshape(h, w)
    return mask


def detection_to_line(det: Detection) -> str:
    x, y, w, h = det.bbox
    rle = rle_encode(det.mask, det.bbox)
    return f"{det.cls} {det.confidence:.6f} {x} {y} {w} {h} {det.part} {rle}"


def detection_from_line(line: str, frame_shape) -> Detection:
    parts = line.split()
    if len(parts) != 8:
        raise ValueError(f"bad detection record: {line!r}")
    cls, conf, x, y, w, h, part, rle = parts
    bbox = (int(x), int(y), int(w), int(h))
    mask = rle_decode(rle, bbox, frame_shape)
    return Detection(cls=cls, confidence=float(conf), bbox=bbox, mask=mask, part=part)


def load_detections(path, frame_shape) -> list[Detection]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(detection_from_line(line, frame_shape))
    return out


def save_detections(dets, path) -> None:
    with open(path, "w") as f:
        for det in dets:
            f.write(detection_to_line(det) + "\n")
