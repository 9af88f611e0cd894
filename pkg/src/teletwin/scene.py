"""Simulated remote scene: analytic primitives, grasp marks, camera mount.

Scenes load from a structured text file (TOML grammar): a [camera] section
with intrinsics and the end-effector mount offset, a [robot] section with the
home configuration, and one [[object]] table per scene object.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .transforms import RigidTransform, rot_x, rot_y, rot_z

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

PLANE, BOX, CYLINDER = 0, 1, 2

# the eight laboratory instrument classes of the dataset
CLASS_NAMES = (
    "cell_scraper",
    "micro_test_tube",
    "needle_holder",
    "pasteur_pipette",
    "pipettor",
    "centrifuge_test_tube",
    "vacuum_test_tube",
    "swab",
)


class SceneError(Exception):
    pass


@dataclass
class SceneObject:
    id: str
    cls: str
    kind: int
    params: np.ndarray  # primitive row, see _raycast_py encoding
    grasp_mark: np.ndarray | None = None
    upper_color: str = ""
    lower_color: str = ""
    graspable: bool = True

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float).reshape(-1)
        if self.params.shape[0] < 8:
            self.params = np.pad(self.params, (0, 8 - self.params.shape[0]))
        if self.grasp_mark is not None:
            self.grasp_mark = np.asarray(self.grasp_mark, dtype=float).reshape(3)
            d = self.surface_distance(self.grasp_mark)
            if abs(d) > 1e-6:
                raise SceneError(f"object {self.id}: grasp mark is {d:.2e} m off the surface")

    @classmethod
    def cylinder(cls, id, cls_name, center, radius, height, grasp_mark=None, **kw):
        center = np.asarray(center, dtype=float)
        if radius <= 0 or height <= 0:
            raise SceneError("cylinder radius and height must be positive")
        if grasp_mark is None:
            # mid-height point on the surface, facing -x
            grasp_mark = center + np.array([-radius, 0.0, 0.0])
        return cls(id=id, cls=cls_name, kind=CYLINDER,
                   params=[*center, radius, height / 2.0],
                   grasp_mark=grasp_mark, **kw)

    @classmethod
    def box(cls, id, cls_name, lo, hi, **kw):
        return cls(id=id, cls=cls_name, kind=BOX, params=[*lo, *hi],
                   grasp_mark=None, graspable=False, **kw)

    @classmethod
    def plane(cls, id, normal, offset, **kw):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(id=id, cls="", kind=PLANE, params=[*n, offset],
                   grasp_mark=None, graspable=False, **kw)

    @property
    def center(self) -> np.ndarray:
        if self.kind == CYLINDER:
            return self.params[:3].copy()
        if self.kind == BOX:
            return (self.params[:3] + self.params[3:6]) / 2.0
        raise SceneError("planes have no center")

    @property
    def radius(self) -> float:
        if self.kind != CYLINDER:
            raise SceneError("radius only defined for cylinders")
        return float(self.params[3])

    @property
    def height(self) -> float:
        if self.kind != CYLINDER:
            raise SceneError("height only defined for cylinders")
        return float(self.params[4] * 2.0)

    def surface_distance(self, point: np.ndarray) -> float:
        """Signed distance from point to the primitive surface (negative inside)."""
        p = np.asarray(point, dtype=float)
        if self.kind == PLANE:
            n, c = self.params[:3], self.params[3]
            return float(n @ p - c)
        if self.kind == BOX:
            lo, hi = self.params[:3], self.params[3:6]
            d = np.maximum(lo - p, p - hi)
            outside = np.linalg.norm(np.maximum(d, 0.0))
            inside = np.max(d)
            return float(outside if inside > 0 else inside)
        cx, cy, cz, r, hh = self.params[:5]
        dr = np.hypot(p[0] - cx, p[1] - cy) - r
        dz = abs(p[2] - cz) - hh
        if dr <= 0 and dz <= 0:
            return float(max(dr, dz))
        return float(np.hypot(max(dr, 0.0), max(dz, 0.0)))


@dataclass
class Scene:
    objects: list = field(default_factory=list)
    home_joints: np.ndarray = field(default_factory=lambda: np.zeros(6))
    camera_mount: RigidTransform = field(default_factory=RigidTransform.identity)
    camera: dict = field(default_factory=dict)
    robot_config: str | None = None

    def __post_init__(self):
        self.home_joints = np.asarray(self.home_joints, dtype=float).reshape(6)
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise SceneError("object ids must be unique")

    def primitive_arrays(self):
        kinds = np.array([o.kind for o in self.objects], dtype=np.int32)
        params = np.stack([o.params for o in self.objects]) if self.objects else \
            np.zeros((0, 8))
        return kinds, params

    def snapshot(self) -> "Scene":
        """Deep-enough copy for lock-free rendering while `step` mutates poses."""
        objs = [dataclasses.replace(
            o, params=o.params.copy(),
            grasp_mark=None if o.grasp_mark is None else o.grasp_mark.copy())
            for o in self.objects]
        return Scene(objects=objs, home_joints=self.home_joints.copy(),
                     camera_mount=self.camera_mount, camera=dict(self.camera),
                     robot_config=self.robot_config)

    def object_index(self, object_id: str) -> int:
        for i, o in enumerate(self.objects):
            if o.id == object_id:
                return i
        raise KeyError(object_id)

    def find(self, object_id: str) -> SceneObject:
        return self.objects[self.object_index(object_id)]

    def move_object(self, object_id: str, new_center: np.ndarray) -> None:
        obj = self.find(object_id)
        new_center = np.asarray(new_center, dtype=float)
        if obj.kind == CYLINDER:
            delta = new_center - obj.params[:3]
            obj.params[:3] = new_center
        elif obj.kind == BOX:
            delta = new_center - obj.center
            obj.params[:3] += delta
            obj.params[3:6] += delta
        else:
            raise SceneError("cannot move a plane")
        if obj.grasp_mark is not None:
            obj.grasp_mark = obj.grasp_mark + delta


def _pose_from_table(sec: dict) -> RigidTransform:
    t = np.asarray(sec.get("translation", [0, 0, 0]), dtype=float)
    rpy = sec.get("rpy_deg")
    if rpy is not None:
        rx, ry, rz = np.deg2rad(np.asarray(rpy, dtype=float))
        r = rot_z(rz) @ rot_y(ry) @ rot_x(rx)
    else:
        r = np.asarray(sec.get("rotation", np.eye(3).tolist()), dtype=float).reshape(3, 3)
    return RigidTransform(r, t)


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except (OSError, tomllib.TOMLDecodeError) as e:
        raise SceneError(f"cannot load scene {path}: {e}") from e

    objects = []
    for sec in doc.get("object", []):
        shape = sec.get("shape", "cylinder")
        oid = sec["id"]
        cls_name = sec.get("class", "")
        if shape == "cylinder":
            objects.append(SceneObject.cylinder(
                oid, cls_name, sec["position"], sec["radius"], sec["height"],
                grasp_mark=sec.get("grasp_mark"),
                upper_color=sec.get("upper_color", ""),
                lower_color=sec.get("lower_color", "")))
        elif shape == "box":
            objects.append(SceneObject.box(oid, cls_name, sec["min"], sec["max"]))
        elif shape == "plane":
            objects.append(SceneObject.plane(oid, sec["normal"], sec["offset"]))
        else:
            raise SceneError(f"unknown shape {shape!r}")

    robot = doc.get("robot", {})
    cam = doc.get("camera", {})
    mount = _pose_from_table(cam.get("mount", {}))
    return Scene(
        objects=objects,
        home_joints=robot.get("home_joints", [0.0] * 6),
        camera_mount=mount,
        camera=cam,
        robot_config=robot.get("config"),
    )
