"""Teleoperation session measures: path length, timing, grasp accuracy.

Works over line-delimited session logs (one JSON record per sample or event)
so recorded runs can be re-scored offline and compared across control modes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class MetricsError(Exception):
    pass


class MissingEvent(MetricsError):
    pass


class ZeroIdeal(MetricsError):
    pass


@dataclass
class SessionLog:
    """Timestamped end-effector samples plus task events."""

    times: np.ndarray            # (n,) strictly increasing seconds
    positions: np.ndarray        # (n, 3) meters
    events: list = field(default_factory=list)  # (name, time, data) tuples
    target_center: np.ndarray | None = None
    marked_grasp: np.ndarray | None = None
    attempt: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float).reshape(-1)
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if len(self.times) != len(self.positions):
            raise MetricsError("times and positions length mismatch")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise MetricsError("timestamps must be strictly increasing")
        if sum(1 for name, _, _ in self.events if name == "grasp") > 1:
            raise MetricsError("at most one grasp per attempt")

    def event_time(self, name: str) -> float:
        for n, t, _ in self.events:
            if n == name:
                return t
        raise MissingEvent(f"log contains no {name!r} event")

    def event_data(self, name: str) -> dict:
        for n, _, d in self.events:
            if n == name:
                return d
        raise MissingEvent(f"log contains no {name!r} event")


@dataclass
class MetricsReport:
    trajectory_length_m: float
    execution_time_s: float
    grasp_error_mm: float
    increment_pct: float | None = None
    attempts: int = 1


def trajectory_length(log: SessionLog) -> float:
    """Sum of segment lengths between the start and grasp events."""
    t0 = log.event_time("start")
    t1 = log.event_time("grasp")
    sel = (log.times >= t0) & (log.times <= t1)
    pts = log.positions[sel]
    if len(pts) < 2:
        return 0.0
    return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))


def execution_time(log: SessionLog) -> float:
    return log.event_time("grasp") - log.event_time("start")


def ideal_length(start_pos, object_center) -> float:
    return float(np.linalg.norm(np.asarray(object_center, dtype=float)
                                - np.asarray(start_pos, dtype=float)))


def increment_pct(length: float, ideal: float) -> float:
    """Percentage excess of the traveled path over the straight-line ideal."""
    if ideal <= 0:
        raise ZeroIdeal("ideal length must be positive")
    return (length - ideal) / ideal * 100.0


def reduction_pct(baseline: float, improved: float) -> float:
    if baseline <= 0:
        raise MetricsError("baseline must be positive")
    return (baseline - improved) / baseline * 100.0


def grasp_error(actual_point, marked_point) -> float:
    """Distance from the marked grasp point to the realized one, millimeters."""
    d = np.asarray(actual_point, dtype=float) - np.asarray(marked_point, dtype=float)
    return float(np.linalg.norm(d) * 1000.0)


def session_report(log: SessionLog) -> MetricsReport:
    length = trajectory_length(log)
    marked = log.marked_grasp
    actual = np.asarray(log.event_data("grasp").get("point"), dtype=float)
    err = grasp_error(actual, marked) if marked is not None else float("nan")
    inc = None
    if log.target_center is not None:
        t0 = log.event_time("start")
        start_pos = log.positions[np.searchsorted(log.times, t0)]
        ideal = ideal_length(start_pos, log.target_center)
        if ideal > 0:
            inc = increment_pct(length, ideal)
    return MetricsReport(
        trajectory_length_m=length,
        execution_time_s=execution_time(log),
        grasp_error_mm=err,
        increment_pct=inc,
        attempts=log.attempt,
    )


def aggregate(values) -> dict:
    """min / max / mean / sd (sample sd, n-1; 0 for a single value)."""
    v = np.asarray(list(values), dtype=float)
    if v.size == 0:
        raise MetricsError("nothing to aggregate")
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return {"min": float(v.min()), "max": float(v.max()),
            "mean": float(v.mean()), "sd": sd}


def aggregate_reports(reports) -> dict:
    """Table II-style statistics over a set of session reports."""
    reports = list(reports)
    out = {
        "trajectory_length_m": aggregate(r.trajectory_length_m for r in reports),
        "execution_time_s": aggregate(r.execution_time_s for r in reports),
        "grasp_error_mm": aggregate(r.grasp_error_mm for r in reports),
        "attempts": aggregate(r.attempts for r in reports),
    }
    incs = [r.increment_pct for r in reports if r.increment_pct is not None]
    if incs:
        out["increment_pct"] = aggregate(incs)
    return out


# --- log file parsing -------------------------------------------------------

def parse_session_log(path) -> SessionLog:
    """Read a line-delimited session log written by the teleop server."""
    times, positions, events = [], [], []
    target_center = marked = None
    attempt = 1
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise MetricsError(f"{path}:{lineno}: bad record: {e}") from e
            kind = rec.get("kind")
            if kind == "header":
                tgt = rec.get("target", {})
                if "center" in tgt:
                    target_center = np.asarray(tgt["center"], dtype=float)
                if "grasp_mark" in tgt:
                    marked = np.asarray(tgt["grasp_mark"], dtype=float)
                attempt = int(rec.get("attempt", 1))
            elif kind == "sample":
                times.append(float(rec["t"]))
                positions.append(rec["ee"])
            elif kind == "event":
                events.append((rec["name"], float(rec["t"]), rec.get("data", {})))
    if not times:
        raise MetricsError(f"{path}: no samples")
    return SessionLog(times=times, positions=positions, events=events,
                      target_center=target_center, marked_grasp=marked,
                      attempt=attempt)


def format_aggregate(stats: dict, csv: bool = False) -> str:
    names = {
        "trajectory_length_m": "Trajectory length, m",
        "execution_time_s": "Task execution time, s",
        "grasp_error_mm": "Error at grasping, mm",
        "increment_pct": "Increment vs ideal, %",
        "attempts": "Attempts",
    }
    if csv:
        lines = ["measure,min,max,mean,sd"]
        for key, label in names.items():
            if key in stats:
                s = stats[key]
                lines.append(f"{label},{s['min']:.3f},{s['max']:.3f},"
                             f"{s['mean']:.3f},{s['sd']:.3f}")
        return "\n".join(lines)
    head = f"{'Measure':<26} {'min':>9} {'max':>9} {'mean':>9} {'sd':>9}"
    lines = [head, "-" * len(head)]
    for key, label in names.items():
        if key in stats:
            s = stats[key]
            lines.append(f"{label:<26} {s['min']:>9.3f} {s['max']:>9.3f} "
                         f"{s['mean']:>9.3f} {s['sd']:>9.3f}")
    return "\n".join(lines)


def format_increment_table(rows, csv: bool = False) -> str:
    """Table III-style comparison: (label, mean_length, increment_pct)."""
    if csv:
        out = ["trajectory,mean_length_m,increment_pct"]
        for label, length, inc in rows:
            out.append(f"{label},{length:.3f},{inc:.1f}")
        return "\n".join(out)
    head = f"{'Trajectory type':<30} {'Mean length, m':>15} {'Increment, %':>13}"
    out = [head, "-" * len(head)]
    for label, length, inc in rows:
        out.append(f"{label:<30} {length:>15.3f} {inc:>13.1f}")
    return "\n".join(out)
