"""Live teleoperation loop: control ingest, 50 Hz tick, estimation, streaming.

Three cooperating tasks own distinct concerns and talk through one-slot
buffers: network ingest overwrites the latest control intent, the tick loop
is the sole owner of robot and scene state, and an estimation thread renders
depth frames and publishes smoothed object centers at its own cadence.

Clients speak length-delimited JSON over TCP, or the same payloads over a
WebSocket; the first client to send a control message becomes the operator
and its disconnect ends the session with a final log flush.
"""

from __future__ import annotations

import asyncio
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import protocol, ws
from .control import ControlConfig, EETarget, map_sample, set_axis_locks, set_scale
from .control import HapticSample
from .kinematics import DHModel, load_robot
from .pose import (AlphaFilter, EmptyRegion, ObjectEstimate, WorkspaceBounds,
                   camera_to_world, estimate_center)
from .raycast import CameraIntrinsics, render_depth
from .scene import CYLINDER, SceneError, load_scene
from .simenv import RobotSim, oracle_detect
from .transforms import RigidTransform


class ServerError(Exception):
    pass


class BindFailure(ServerError):
    pass


class SceneLoadError(ServerError):
    pass


class CorruptLog(ServerError):
    pass


@dataclass
class SessionConfig:
    scene_path: str
    host: str = "127.0.0.1"
    port: int = 8765
    tick_period: float = 0.02
    estimation_period: float = 0.1
    estimation_mode: str = "mask"   # bbox | mask
    parts_mode: str = "full"        # full | halves
    alpha: float = 0.2
    scale: int = 1
    log_path: str | None = None
    robot_config: str | None = None
    static_dir: str | None = None
    duration: float | None = None   # stop after this many seconds (tests, demos)

    def __post_init__(self):
        if self.tick_period <= 0:
            raise ValueError("tick period must be positive")
        if self.estimation_period < self.tick_period:
            raise ValueError("estimation rate must not exceed the tick rate")
        if self.estimation_mode not in ("bbox", "mask"):
            raise ValueError("estimation_mode must be bbox or mask")


class _Client:
    def __init__(self, writer, kind):
        self.writer = writer
        self.kind = kind  # "tcp" | "ws"
        self.is_operator = False

    def send(self, payload: dict):
        if self.kind == "tcp":
            self.writer.write(protocol.encode_frame(payload))
        else:
            self.writer.write(ws.encode_text(protocol.dump_json(payload)))


class TeleopServer:
    def __init__(self, cfg: SessionConfig):
        self.cfg = cfg
        try:
            self.scene = load_scene(cfg.scene_path)
        except (OSError, SceneError) as e:
            raise SceneLoadError(str(e)) from e
        robot_file = cfg.robot_config or self.scene.robot_config
        self.model: DHModel = load_robot(robot_file)
        self.sim = RobotSim(self.model, self.scene)
        self.state = self.sim.home_state()

        cam = self.scene.camera
        self.intrinsics = CameraIntrinsics(
            width=int(cam.get("width", 640)), height=int(cam.get("height", 480)),
            fx=float(cam.get("fx", 600.0)), fy=float(cam.get("fy", 600.0)),
            cx=float(cam.get("cx", 320.0)), cy=float(cam.get("cy", 240.0)))

        home_ee = self.state.ee
        self.control_cfg = ControlConfig(
            scale=cfg.scale,
            workspace_center=home_ee.position.copy(),
            ee_orientation=home_ee.rotation.copy())
        self.target = EETarget(home_ee.position.copy(), 0.0, home_ee.rotation.copy())

        self._latest_control: dict | None = None
        self._control_seq = 0
        self._applied_seq = 0
        self._estimates: list[dict] = []
        self._estimates_lock = threading.Lock()
        self._clients: set[_Client] = set()
        self._stop = asyncio.Event()
        self._started = asyncio.Event()
        self._task_started = False
        self._log_file = None
        self._log_t0: float | None = None
        self._session_started = False
        self._bounds = WorkspaceBounds()
        self._filters: dict[str, AlphaFilter] = {}
        self._est_thread: threading.Thread | None = None
        self._est_stop = threading.Event()
        self._server: asyncio.AbstractServer | None = None
        self._tick_task: asyncio.Task | None = None
        self.realized_ticks: list[float] = []

    # --- lifecycle ---------------------------------------------------------

    async def start(self):
        try:
            self._server = await asyncio.start_server(
                self._handle_conn, self.cfg.host, self.cfg.port)
        except OSError as e:
            raise BindFailure(f"cannot bind {self.cfg.host}:{self.cfg.port}: {e}") from e
        if self.cfg.log_path:
            Path(self.cfg.log_path).parent.mkdir(parents=True, exist_ok=True)
            self._log_file = open(self.cfg.log_path, "w")
            self._write_log_header()
        self._tick_task = asyncio.create_task(self._tick_loop())
        self._est_thread = threading.Thread(target=self._estimation_loop, daemon=True)
        self._est_thread.start()
        self._started.set()
        print(f"listening on {self.cfg.host}:{self.port}", flush=True)

    @property
    def port(self) -> int:
        return self._server.sockets[0].getsockname()[1]

    async def stop(self):
        self._stop.set()
        self._est_stop.set()
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        if self._tick_task is not None:
            try:
                await self._tick_task
            except asyncio.CancelledError:
                pass
        if self._est_thread is not None:
            self._est_thread.join(timeout=2.0)
        self._flush_log(final=True)

    async def run(self) -> int:
        """Serve until the operator disconnects or the duration elapses."""
        await self.start()
        try:
            if self.cfg.duration is not None:
                try:
                    await asyncio.wait_for(self._stop.wait(), timeout=self.cfg.duration)
                except asyncio.TimeoutError:
                    pass
            else:
                await self._stop.wait()
        finally:
            await self.stop()
        return 0

    # --- logging -----------------------------------------------------------

    def _write_log_header(self):
        target = {}
        for obj in self.scene.objects:
            if obj.graspable and obj.cls:
                target = {"object": obj.id,
                          "center": [float(x) for x in obj.center],
                          "grasp_mark": [float(x) for x in obj.grasp_mark]}
                break
        rec = protocol.header_record(
            scene_path=str(self.cfg.scene_path), target=target,
            config={"tick_period": self.cfg.tick_period,
                    "estimation_period": self.cfg.estimation_period,
                    "mode": self.cfg.estimation_mode, "alpha": self.cfg.alpha,
                    "scale": self.cfg.scale})
        self._log_file.write(protocol.dump_json(rec) + "\n")

    def _log(self, rec: dict):
        if self._log_file is not None:
            self._log_file.write(protocol.dump_json(rec) + "\n")

    def _flush_log(self, final=False):
        if self._log_file is not None:
            self._log_file.flush()
            if final:
                self._log_file.close()
                self._log_file = None

    # --- tick loop ---------------------------------------------------------

    async def _tick_loop(self):
        loop = asyncio.get_running_loop()
        period = self.cfg.tick_period
        self._log_t0 = loop.time()
        next_deadline = loop.time() + period
        last = loop.time()
        while not self._stop.is_set():
            await asyncio.sleep(max(0.0, next_deadline - loop.time()))
            next_deadline += period
            now = loop.time()
            self.realized_ticks.append(now - last)
            last = now
            self._do_tick(now - self._log_t0)

    def _do_tick(self, t: float):
        events = []
        if self._latest_control is not None and self._applied_seq != self._control_seq:
            self._applied_seq = self._control_seq
            msg = self._latest_control
            if msg.get("scale") is not None:
                self.control_cfg = set_scale(self.control_cfg, msg["scale"])
            if msg.get("locks") is not None:
                self.control_cfg = set_axis_locks(self.control_cfg, msg["locks"])
            sample = HapticSample(position=msg["pos"], gripper=msg["gripper"],
                                  timestamp=msg.get("t", 0.0))
            self.target = map_sample(sample, self.control_cfg, self.target)
            if not self._session_started:
                self._session_started = True
                events.append(("start", {}))

        self.state, sim_events = self.sim.step(self.state, self.target,
                                               self.cfg.tick_period)
        tick = self.state.tick
        for e in sim_events:
            events.append((e.name, e.data))

        self._log(protocol.sample_record(t, tick, self.state.ee.position,
                                         self.state.joints,
                                         self.state.gripper_fraction))
        for name, data in events:
            self._log(protocol.event_record(t, tick, name, data))
        if tick % 100 == 0:
            self._flush_log()

        with self._estimates_lock:
            estimates = list(self._estimates)
        payload = protocol.state_to_dict(protocol.StateMsg(
            tick=tick, t=t,
            joints=[float(x) for x in self.state.joints],
            ee=[float(x) for x in self.state.ee.position],
            gripper=self.state.gripper_fraction,
            estimates=estimates,
            scale=self.control_cfg.scale,
            locks=list(self.control_cfg.axis_locks),
            events=[{"name": n, "data": d} for n, d in events]))
        self._broadcast(payload)

    def _broadcast(self, payload: dict):
        dead = []
        for client in self._clients:
            try:
                client.send(payload)
            except (ConnectionError, RuntimeError):
                dead.append(client)
        for c in dead:
            self._clients.discard(c)

    # --- estimation pipeline -------------------------------------------------

    def _estimation_loop(self):
        period = self.cfg.estimation_period
        next_deadline = time.monotonic() + period
        while not self._est_stop.is_set():
            delay = next_deadline - time.monotonic()
            if delay > 0 and self._est_stop.wait(timeout=delay):
                break
            next_deadline += period
            try:
                self._estimate_once()
            except Exception:
                # perception hiccups must not take the twin down
                continue

    def _estimate_once(self):
        state = self.state  # immutable snapshot, atomically swapped by the tick
        with self.sim.lock:
            scene = self.scene.snapshot()
        ee_pose = RigidTransform(state.ee.rotation, state.ee.position)
        cam_in_world = ee_pose.compose(self.scene.camera_mount)
        cam_pose = cam_in_world.inverse()

        frame = render_depth(scene, cam_pose, self.intrinsics)
        dets = oracle_detect(scene, cam_pose, self.intrinsics,
                             mode=self.cfg.parts_mode)
        up_cam = cam_pose.rotation @ np.array([0.0, 0.0, 1.0])
        t_now = time.monotonic() - (self._log_t0 or 0.0)

        by_class: dict[str, list] = {}
        for det in dets:
            obj = next((o for o in scene.objects if o.cls == det.cls), None)
            height = obj.height if obj is not None and obj.kind == CYLINDER else 0.0
            offset = obj.radius if obj is not None and obj.kind == CYLINDER else 0.0
            try:
                center_cam = estimate_center(
                    det, frame, self._bounds, self.intrinsics,
                    mode=self.cfg.estimation_mode, object_height=height,
                    up_in_camera=up_cam, surface_offset=offset)
            except EmptyRegion:
                continue
            world = camera_to_world(center_cam, cam_pose)
            if not self._inside_workspace(world):
                continue
            by_class.setdefault(det.cls, []).append(
                (world, int(np.count_nonzero(det.mask))))

        fresh = []
        for cls, hits in sorted(by_class.items()):
            raw = np.mean([w for w, _ in hits], axis=0)
            filt = self._filters.setdefault(cls, AlphaFilter(alpha=self.cfg.alpha))
            est = ObjectEstimate(cls=cls, center=filt.update(raw),
                                 source=self.cfg.estimation_mode,
                                 pixel_count=sum(n for _, n in hits),
                                 timestamp=t_now)
            fresh.append({"cls": est.cls, "center": [float(x) for x in est.center],
                          "source": est.source, "t": est.timestamp})
        with self._estimates_lock:
            self._estimates = fresh

    def _inside_workspace(self, world_point) -> bool:
        aabb = self._bounds.world_aabb
        if aabb is None:
            return True
        lo, hi = np.asarray(aabb[0], dtype=float), np.asarray(aabb[1], dtype=float)
        return bool(np.all(world_point >= lo) and np.all(world_point <= hi))

    # --- connection handling --------------------------------------------------

    async def _handle_conn(self, reader: asyncio.StreamReader,
                           writer: asyncio.StreamWriter):
        # sniff the transport: HTTP clients talk first, read-only raw-TCP
        # subscribers may stay silent, so fall through after a short wait
        try:
            first = await asyncio.wait_for(reader.read(4), timeout=0.25)
        except asyncio.TimeoutError:
            first = b""
        except ConnectionError:
            writer.close()
            return
        if first.startswith(b"GET") or first.startswith(b"HEAD"):
            await self._handle_http(first, reader, writer)
        else:
            await self._handle_tcp(first, reader, writer)

    async def _handle_tcp(self, first: bytes, reader, writer):
        client = _Client(writer, "tcp")
        self._clients.add(client)
        decoder = protocol.FrameDecoder()
        try:
            data = first
            while True:
                for msg in decoder.feed(data):
                    self._ingest(msg, client)
                data = await reader.read(4096)
                if not data:
                    break
        except (ConnectionError, protocol.ProtocolError, asyncio.IncompleteReadError):
            pass
        finally:
            self._drop_client(client, writer)

    async def _handle_http(self, first: bytes, reader, writer):
        head = first
        while b"\r\n\r\n" not in head:
            chunk = await reader.read(1024)
            if not chunk:
                writer.close()
                return
            head += chunk
        try:
            method, path, headers = ws.parse_http_request(head.split(b"\r\n\r\n")[0])
        except ws.WSError:
            writer.close()
            return
        if ws.is_upgrade(headers):
            writer.write(ws.handshake_response(headers))
            await self._handle_ws(reader, writer)
        else:
            self._serve_static(method, path, writer)
            try:
                await writer.drain()
            except ConnectionError:
                pass
            writer.close()

    async def _handle_ws(self, reader, writer):
        client = _Client(writer, "ws")
        self._clients.add(client)
        try:
            while True:
                opcode, payload = await ws.read_frame(reader)
                if opcode == ws.OP_CLOSE:
                    break
                if opcode == ws.OP_PING:
                    writer.write(ws.encode_frame(payload, ws.OP_PONG))
                    continue
                if opcode != ws.OP_TEXT:
                    continue
                try:
                    self._ingest(json.loads(payload.decode("utf-8")), client)
                except (ValueError, protocol.ProtocolError):
                    continue
        except (ConnectionError, asyncio.IncompleteReadError):
            pass
        finally:
            self._drop_client(client, writer)

    def _drop_client(self, client, writer):
        self._clients.discard(client)
        try:
            writer.close()
        except RuntimeError:
            pass
        if client.is_operator:
            # operator went away: end the session, flush the log
            self._stop.set()

    def _ingest(self, msg: dict, client: _Client):
        if msg.get("type") != "control":
            return
        parsed = protocol.control_from_dict(msg)
        operator = next((c for c in self._clients if c.is_operator), None)
        if operator is None:
            client.is_operator = True
        elif operator is not client:
            return  # extra connections are read-only
        self._latest_control = protocol.control_to_dict(parsed)
        self._control_seq += 1

    def _serve_static(self, method: str, path: str, writer):
        root = self.cfg.static_dir
        if root is None or method not in ("GET", "HEAD"):
            writer.write(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n")
            return
        rel = path.split("?")[0].lstrip("/") or "index.html"
        target = (Path(root) / rel).resolve()
        if not str(target).startswith(str(Path(root).resolve())) or not target.is_file():
            writer.write(b"HTTP/1.1 404 Not Found\r\nContent-Length: 0\r\n\r\n")
            return
        body = target.read_bytes()
        ctype = {
            ".html": "text/html", ".js": "text/javascript", ".css": "text/css",
            ".json": "application/json", ".png": "image/png", ".map": "application/json",
        }.get(target.suffix, "application/octet-stream")
        head = (f"HTTP/1.1 200 OK\r\nContent-Type: {ctype}\r\n"
                f"Content-Length: {len(body)}\r\n\r\n").encode("ascii")
        writer.write(head + (b"" if method == "HEAD" else body))


def run_session(cfg: SessionConfig) -> int:
    """Blocking entry point for the CLI; exit status per failure class."""
    try:
        server = TeleopServer(cfg)
    except SceneLoadError as e:
        print(f"scene error: {e}")
        return 3
    try:
        return asyncio.run(server.run())
    except BindFailure as e:
        print(f"bind error: {e}")
        return 2
    except KeyboardInterrupt:
        return 0


def replay(log_path, speed: float = 1.0, sleep: bool = True):
    """Re-emit a recorded session as StateMsg dicts at speed x real time.

    Event records share the tick of the sample they follow, so they are
    attached to that tick's message.
    """
    tick_period = 0.02
    samples: list[tuple[int, dict]] = []  # (lineno, record)
    events_by_tick: dict[int, list[dict]] = {}
    with open(log_path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorruptLog(f"{log_path}:{lineno}: {e}") from None
            kind = rec.get("kind")
            if kind == "header":
                tick_period = float(rec.get("config", {}).get("tick_period", 0.02))
            elif kind == "event":
                events_by_tick.setdefault(int(rec["tick"]), []).append(
                    {"name": rec["name"], "data": rec.get("data", {})})
            elif kind == "sample":
                samples.append((lineno, rec))
            else:
                raise CorruptLog(f"{log_path}:{lineno}: unknown record kind {kind!r}")
    for lineno, rec in samples:
        try:
            msg = protocol.state_to_dict(protocol.StateMsg(
                tick=rec["tick"], t=rec["t"], joints=rec["joints"],
                ee=rec["ee"], gripper=rec["gripper"],
                events=events_by_tick.get(int(rec["tick"]), [])))
        except KeyError as e:
            raise CorruptLog(f"{log_path}:{lineno}: missing field {e}") from None
        if sleep and speed > 0:
            time.sleep(tick_period / speed)
        yield msg
