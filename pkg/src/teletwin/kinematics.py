"""Analytic forward/inverse kinematics for UR-style six-revolute arms.

The UR geometry is non-spherical, so the inverse problem is solved in closed
form: two shoulder branches, two elbow branches, and two wrist branches give
up to eight joint configurations per end-effector pose.  A weighted
least-squares cost against the previous configuration picks the one to track,
which keeps the arm from flipping between branches mid-motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .transforms import is_rotation, rotation_geodesic, wrap_angle

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

# Manufacturer-published UR3 link geometry (meters / radians).
UR3_A = (0.0, -0.24365, -0.21325, 0.0, 0.0, 0.0)
UR3_D = (0.1519, 0.0, 0.0, 0.11235, 0.08535, 0.0819)
UR3_ALPHA = (np.pi / 2, 0.0, 0.0, np.pi / 2, -np.pi / 2, 0.0)

DEFAULT_WEIGHTS = (6.0, 5.0, 4.0, 3.0, 2.0, 1.0)

_WRIST_SINGULAR_TOL = 1e-8
_DEDUP_TOL = 1e-6


class KinematicsError(Exception):
    pass


class EmptyCandidates(KinematicsError):
    """select_solution was given no candidates."""


@dataclass
class DHModel:
    """Per-joint Denavit-Hartenberg rows plus joint limits."""

    a: np.ndarray
    d: np.ndarray
    alpha: np.ndarray
    theta_offset: np.ndarray
    limits_lo: np.ndarray
    limits_hi: np.ndarray

    def __post_init__(self):
        for name in ("a", "d", "alpha", "theta_offset", "limits_lo", "limits_hi"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.shape != (6,):
                raise ValueError(f"{name} must have exactly six entries, got {v.shape}")
            setattr(self, name, v)
        if not np.all(self.limits_lo < self.limits_hi):
            raise ValueError("each joint needs limits lo < hi")

    @classmethod
    def ur3(cls, limit: float = 2 * np.pi) -> "DHModel":
        return cls(
            a=np.array(UR3_A),
            d=np.array(UR3_D),
            alpha=np.array(UR3_ALPHA),
            theta_offset=np.zeros(6),
            limits_lo=np.full(6, -limit),
            limits_hi=np.full(6, limit),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "DHModel":
        """Load from a robot.toml-style file with one [jointN] section per joint."""
        with open(path, "rb") as f:
            doc = tomllib.load(f)
        rows = {"a": [], "d": [], "alpha": [], "theta_offset": [], "lo": [], "hi": []}
        for i in range(1, 7):
            sec = doc.get(f"joint{i}")
            if sec is None:
                raise ValueError(f"{path}: missing [joint{i}] section")
            rows["a"].append(float(sec["a"]))
            rows["d"].append(float(sec["d"]))
            rows["alpha"].append(float(sec["alpha"]))
            rows["theta_offset"].append(float(sec.get("theta_offset", 0.0)))
            lo, hi = sec.get("limits", (-2 * np.pi, 2 * np.pi))
            rows["lo"].append(float(lo))
            rows["hi"].append(float(hi))
        return cls(rows["a"], rows["d"], rows["alpha"], rows["theta_offset"],
                   rows["lo"], rows["hi"])


@dataclass
class EEPose:
    """End-effector pose in the robot base frame."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)

    def validate(self, tol: float = 1e-9) -> None:
        if not is_rotation(self.rotation, tol):
            raise ValueError("EEPose rotation must be proper orthonormal")


@dataclass
class IKSolutions:
    """Closed-form IK result: 0..8 joint vectors in deterministic branch order.

    near_singular is set when a wrist-aligned branch (|sin q5| below tolerance)
    had to be discarded.
    """

    solutions: list = field(default_factory=list)
    near_singular: bool = False

    def __iter__(self):
        return iter(self.solutions)

    def __len__(self):
        return len(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def _dh_matrix(a: float, d: float, alpha: float, theta: float) -> np.ndarray:
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def fk_matrix(model: DHModel, q: np.ndarray) -> np.ndarray:
    """Composed 4x4 transform of the six DH frames."""
    q = np.asarray(q, dtype=float).reshape(6)
    t = np.eye(4)
    for i in range(6):
        t = t @ _dh_matrix(model.a[i], model.d[i], model.alpha[i],
                           q[i] + model.theta_offset[i])
    return t


def forward_kinematics(model: DHModel, q: np.ndarray) -> EEPose:
    t = fk_matrix(model, q)
    return EEPose(t[:3, 3], t[:3, :3])


def _fit_to_limits(q: np.ndarray, model: DHModel) -> np.ndarray | None:
    """Wrap each joint into (-pi, pi], then shift by 2*pi if needed to respect limits."""
    out = wrap_angle(np.asarray(q, dtype=float))
    for i in range(6):
        if model.limits_lo[i] <= out[i] <= model.limits_hi[i]:
            continue
        for shift in (2 * np.pi, -2 * np.pi):
            cand = out[i] + shift
            if model.limits_lo[i] <= cand <= model.limits_hi[i]:
                out[i] = cand
                break
        else:
            return None
    return out


def inverse_kinematics(model: DHModel, target: EEPose,
                       fk_tol_pos: float = 1e-6,
                       fk_tol_rot: float = 1e-6) -> IKSolutions:
    """All joint configurations reaching target, FK-verified and deduplicated.

    Branches are enumerated (shoulder, elbow, wrist) and emitted in that
    order; an unreachable target yields an empty result.
    """
    target.validate(tol=1e-9)
    a2, a3 = model.a[1], model.a[2]
    d1, d4, d5, d6 = model.d[0], model.d[3], model.d[4], model.d[5]
    r06 = target.rotation
    px, py, pz = target.position

    # Wrist-2 origin: pull back along the tool z-axis.
    p5 = target.position - d6 * r06[:, 2]
    rad = np.hypot(p5[0], p5[1])
    if rad < abs(d4):
        return IKSolutions()  # inside the shoulder cylinder, unreachable

    psi = np.arctan2(p5[1], p5[0])
    phi = np.arccos(np.clip(d4 / rad, -1.0, 1.0))
    theta1 = (psi + phi + np.pi / 2, psi - phi + np.pi / 2)

    out: list[tuple[tuple[int, int, int], np.ndarray]] = []
    near_singular = False
    for i_sh, q1 in enumerate(theta1):
        s1, c1 = np.sin(q1), np.cos(q1)
        c5 = (px * s1 - py * c1 - d4) / d6
        if abs(c5) > 1.0 + 1e-9:
            continue
        q5_mag = np.arccos(np.clip(c5, -1.0, 1.0))
        for i_wr, q5 in enumerate((q5_mag, -q5_mag)):
            s5 = np.sin(q5)
            if abs(s5) < _WRIST_SINGULAR_TOL:
                # q4/q6 split is undefined; fixed-orientation teleop never
                # needs the degenerate family, so drop the branch.
                near_singular = True
                continue
            q6 = np.arctan2((c1 * r06[1, 1] - s1 * r06[0, 1]) / s5,
                            (s1 * r06[0, 0] - c1 * r06[1, 0]) / s5)

            # Peel the known joints off both ends to isolate the planar 2R arm.
            t01 = _dh_matrix(model.a[0], d1, model.alpha[0], q1)
            t45 = _dh_matrix(model.a[4], d5, model.alpha[4], q5)
            t56 = _dh_matrix(model.a[5], d6, model.alpha[5], q6)
            t14 = (np.linalg.inv(t01) @ target_matrix(target)
                   @ np.linalg.inv(t45 @ t56))
            x14, y14 = t14[0, 3], t14[1, 3]
            q234 = np.arctan2(t14[0, 2], -t14[1, 2])

            c3 = (x14 * x14 + y14 * y14 - a2 * a2 - a3 * a3) / (2 * a2 * a3)
            if abs(c3) > 1.0 + 1e-9:
                continue
            q3_mag = np.arccos(np.clip(c3, -1.0, 1.0))
            for i_el, q3 in enumerate((q3_mag, -q3_mag)):
                s3 = np.sin(q3)
                q2 = np.arctan2(y14, x14) - np.arctan2(a3 * s3, a2 + a3 * np.cos(q3))
                q4 = q234 - q2 - q3
                theta = np.array([q1, q2, q3, q4, q5, q6])
                q = _fit_to_limits(theta - model.theta_offset, model)
                if q is None:
                    continue
                out.append(((i_sh, i_el, i_wr), q))

    out.sort(key=lambda kv: kv[0])
    solutions: list[np.ndarray] = []
    for _, q in out:
        fk = fk_matrix(model, q)
        if np.linalg.norm(fk[:3, 3] - target.position) > fk_tol_pos:
            continue
        if rotation_geodesic(fk[:3, :3], r06) > fk_tol_rot:
            continue
        if any(np.max(np.abs(wrap_angle(q - prev))) <= _DEDUP_TOL for prev in solutions):
            continue
        solutions.append(q)
    return IKSolutions(solutions, near_singular)


def target_matrix(target: EEPose) -> np.ndarray:
    m = np.eye(4)
    m[:3, :3] = target.rotation
    m[:3, 3] = target.position
    return m


def selection_cost(candidate: np.ndarray, previous: np.ndarray,
                   weights: np.ndarray) -> float:
    """Weighted least-squares distance with joint differences wrapped to (-pi, pi]."""
    diff = wrap_angle(np.asarray(candidate, dtype=float) - np.asarray(previous, dtype=float))
    return float(np.sum(np.asarray(weights, dtype=float) * diff * diff))


def select_solution(candidates, previous, weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Candidate minimizing the weighted squared wrapped distance to previous.

    Ties break toward the lowest candidate index, so the result is invariant
    under positive rescaling of the weights.
    """
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("no IK candidates to select from")
    weights = np.asarray(weights, dtype=float).reshape(6)
    if np.any(weights < 0) or not np.any(weights > 0):
        raise ValueError("weights must be nonnegative with at least one positive")
    costs = [selection_cost(c, previous, weights) for c in candidates]
    return np.asarray(candidates[int(np.argmin(costs))], dtype=float)


def ee_pose_from_parts(position, rotation) -> EEPose:
    return EEPose(np.asarray(position, dtype=float), np.asarray(rotation, dtype=float))


def track_path(model: DHModel, positions, rotation, start_q,
               weights=DEFAULT_WEIGHTS) -> np.ndarray:
    """Run IK + continuity selection along a position path with fixed orientation.

    Returns the selected joint path, shape (n, 6).  Raises KinematicsError if
    any waypoint is unreachable.
    """
    q = np.asarray(start_q, dtype=float)
    path = []
    for p in positions:
        sols = inverse_kinematics(model, EEPose(p, rotation))
        if not len(sols):
            raise KinematicsError(f"waypoint {p} unreachable")
        q = select_solution(sols.solutions, q, weights)
        path.append(q)
    return np.array(path)


def load_robot(path: str | Path | None = None) -> DHModel:
    """DHModel from a config file, or the built-in UR3 table when path is None."""
    if path is None:
        return DHModel.ur3()
    return DHModel.from_file(path)
