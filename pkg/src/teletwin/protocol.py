"""Wire protocol: length-delimited JSON messages and session-log records.

Framing is plain text for debuggability: the ASCII byte length of the JSON
payload, a newline, the payload, a newline.  The same JSON payloads travel
over the WebSocket transport unframed (one message per WS text frame).
Every message carries a protocol version field.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

PROTOCOL_VERSION = 1

_MAX_FRAME = 1 << 20


class ProtocolError(Exception):
    pass


@dataclass
class ControlMsg:
    pos: list            # haptic position, meters
    gripper: float
    scale: int | None = None
    locks: list | None = None
    t: float = 0.0       # client timestamp
    v: int = PROTOCOL_VERSION
    type: str = "control"


@dataclass
class Estimate:
    cls: str
    center: list         # world frame, meters
    source: str          # "bbox" | "mask"


@dataclass
class StateMsg:
    tick: int
    t: float             # server time, seconds
    joints: list
    ee: list
    gripper: float
    estimates: list = field(default_factory=list)
    scale: int = 1
    locks: list = field(default_factory=lambda: [False, False, False])
    events: list = field(default_factory=list)
    v: int = PROTOCOL_VERSION
    type: str = "state"


def state_to_dict(msg: StateMsg) -> dict:
    return asdict(msg)


def state_from_dict(d: dict) -> StateMsg:
    if d.get("type") != "state":
        raise ProtocolError(f"not a state message: {d.get('type')!r}")
    return StateMsg(
        tick=d["tick"], t=d["t"], joints=d["joints"], ee=d["ee"],
        gripper=d["gripper"], estimates=d.get("estimates", []),
        scale=d.get("scale", 1), locks=d.get("locks", [False] * 3),
        events=d.get("events", []), v=d.get("v", PROTOCOL_VERSION))


def control_to_dict(msg: ControlMsg) -> dict:
    d = {"type": "control", "v": msg.v, "pos": list(msg.pos),
         "gripper": msg.gripper, "t": msg.t}
    if msg.scale is not None:
        d["scale"] = msg.scale
    if msg.locks is not None:
        d["locks"] = list(msg.locks)
    return d


def control_from_dict(d: dict) -> ControlMsg:
    if d.get("type") != "control":
        raise ProtocolError(f"not a control message: {d.get('type')!r}")
    pos = d["pos"]
    if len(pos) != 3 or not all(isinstance(x, (int, float)) for x in pos):
        raise ProtocolError("pos must be three numbers")
    scale = d.get("scale")
    if scale is not None and scale not in (1, 2, 3, 4, 5):
        raise ProtocolError(f"scale out of range: {scale}")
    return ControlMsg(pos=[float(x) for x in pos], gripper=float(d["gripper"]),
                      scale=scale, locks=d.get("locks"), t=float(d.get("t", 0.0)),
                      v=d.get("v", PROTOCOL_VERSION))


def dump_json(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True)


def encode_frame(obj: dict) -> bytes:
    payload = dump_json(obj).encode("utf-8")
    return str(len(payload)).encode("ascii") + b"\n" + payload + b"\n"


class FrameDecoder:
    """Incremental parser for the length-delimited stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes):
        """Append bytes; yield decoded message dicts."""
        self._buf.extend(data)
        while True:
            nl = self._buf.find(b"\n")
            if nl < 0:
                if len(self._buf) > 20:
                    raise ProtocolError("frame header too long")
                return
            header = bytes(self._buf[:nl])
            try:
                length = int(header)
            except ValueError:
                raise ProtocolError(f"bad frame length {header!r}") from None
            if not (0 < length <= _MAX_FRAME):
                raise ProtocolError(f"frame length {length} out of range")
            end = nl + 1 + length
            if len(self._buf) < end + 1:
                return
            payload = bytes(self._buf[nl + 1:end])
            if self._buf[end:end + 1] != b"\n":
                raise ProtocolError("missing frame terminator")
            del self._buf[:end + 1]
            try:
                yield json.loads(payload.decode("utf-8"))
            except (UnicodeDecodeError, json.JSONDecodeError) as e:
                raise ProtocolError(f"bad frame payload: {e}") from None


# --- session-log records ----------------------------------------------------

def header_record(scene_path: str, target: dict, config: dict, attempt: int = 1) -> dict:
    return {"kind": "header", "v": PROTOCOL_VERSION, "scene": scene_path,
            "target": target, "config": config, "attempt": attempt}


def sample_record(t: float, tick: int, ee, joints, gripper: float) -> dict:
    return {"kind": "sample", "t": t, "tick": tick,
            "ee": [float(x) for x in ee],
            "joints": [float(x) for x in joints],
            "gripper": float(gripper)}


def event_record(t: float, tick: int, name: str, data: dict | None = None) -> dict:
    return {"kind": "event", "t": t, "tick": tick, "name": name,
            "data": data or {}}
