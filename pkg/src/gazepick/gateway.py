"""Realtime service: one WebSocket connection drives one session.

Protocol (full field-by-field schema in docs/PROTOCOL.md): every frame is a
JSON envelope {type, seq, session, payload} with seq strictly increasing per
direction. The client opens with "hello", then streams "gaze" rays or
"pointer" positions (user-view pixels, converted server-side to synthetic
rays toward the scene's eye point) plus optional "confirm". The server
streams session records (progress, fixation, capture, detections,
resolution, grasp_phase, error) as they occur.

Unknown types and malformed frames get an error reply; the connection stays
open. Arbitrary bytes never crash the service. Disconnect aborts the session
and returns the robot to Idle.
"""

from __future__ import annotations

import asyncio
import copy
import itertools
import json
import time
from collections import deque
from typing import Optional

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from gazepick.config import EngineConfig
from gazepick.errors import ConfigError
from gazepick.fixation import FixationConfig, TriggerMode
from gazepick.intent import MatchPolicy
from gazepick.orchestrator import ConfirmPress, GazeSample, Session, SessionPhase, Tick
from gazepick.perception import ImageResolution, View, rescale
from gazepick.geometry import pixel_to_world
from gazepick.simworld import Scene

_TICK_INTERVAL_S = 0.1


def scene_descriptor(scene: Scene) -> dict:
    """Everything the UI needs to render both panels before any detection."""
    user = scene.views[View.USER]
    robot = scene.views[View.ROBOT]
    return {
        "name": scene.name,
        "table": {"width_m": scene.table_width_m, "depth_m": scene.table_depth_m},
        "plane_res": [scene.plane.res_w, scene.plane.res_h],
        "user_image": [user.resolution.width_px, user.resolution.height_px],
        "robot_image": [robot.resolution.width_px, robot.resolution.height_px],
        "objects": [
            {
                "id": o.id,
                "label": o.label,
                "user_box": list(user.footprint(o)),
                "robot_box": list(robot.footprint(o)),
            }
            for o in scene.on_table()
        ],
    }


class _Connection:
    """Per-connection state: session, sequence counters, rate limiting."""

    def __init__(self, ws: WebSocket, scene: Scene, config: EngineConfig):
        self.ws = ws
        self.scene = scene
        self.config = config
        self.session: Optional[Session] = None
        self.server_seq = 0
        self.last_client_seq = 0
        self.last_client_t = 0
        self.last_wall = time.monotonic()
        self.recv_times: deque = deque()
        self.last_throttle_notice = 0.0
        self.lock = asyncio.Lock()

    async def send(self, msg_type: str, payload: dict):
        self.server_seq += 1
        session_id = self.session.session_id if self.session else ""
        await self.ws.send_text(
            json.dumps(
                {"type": msg_type, "seq": self.server_seq, "session": session_id, "payload": payload}
            )
        )

    async def send_records(self, records):
        for rec in records:
            await self.send(rec.kind, {"t_ms": rec.t_ms, **rec.payload})

    async def error(self, code: str, message: str, ref_seq=None):
        await self.send("error", {"code": code, "message": message, "ref_seq": ref_seq})

    def over_rate_cap(self) -> bool:
        now = time.monotonic()
        cap = self.config.rate_cap_per_s
        times = self.recv_times
        times.append(now)
        while times and now - times[0] > 1.0:
            times.popleft()
        return len(times) > cap

    async def step_and_send(self, inp):
        async with self.lock:
            records = self.session.step(inp)
            await self.send_records(records)


def _session_config(base: EngineConfig, payload: dict) -> EngineConfig:
    """Apply per-session mode/policy overrides from the hello payload."""
    fixation = base.fixation
    mode = payload.get("mode")
    if mode is not None:
        fixation = FixationConfig(
            dwell_ms=fixation.dwell_ms,
            radius_m=fixation.radius_m,
            trigger_mode=TriggerMode(mode),
            refractory_ms=fixation.refractory_ms,
        )
    policy = base.policy if payload.get("policy") is None else MatchPolicy(payload["policy"])
    return EngineConfig(
        fixation=fixation,
        policy=policy,
        min_conf=base.min_conf,
        retries=base.retries,
        seed=base.seed,
        sigma_px=base.sigma_px,
        conf_lo=base.conf_lo,
        conf_hi=base.conf_hi,
        p_miss=base.p_miss,
        detector_url=base.detector_url,
        detector_timeout_s=base.detector_timeout_s,
        rate_cap_per_s=base.rate_cap_per_s,
        log_samples=base.log_samples,
    )


def _parse_envelope(text: str):
    raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ValueError("envelope must be a JSON object")
    msg_type = raw.get("type")
    seq = raw.get("seq")
    payload = raw.get("payload", {})
    if not isinstance(msg_type, str):
        raise ValueError("envelope.type must be a string")
    if not isinstance(seq, int):
        raise ValueError("envelope.seq must be an integer")
    if not isinstance(payload, dict):
        raise ValueError("envelope.payload must be an object")
    return msg_type, seq, payload


def _gaze_from_pointer(scene: Scene, payload: dict) -> GazeSample:
    t_ms = int(payload["t_ms"])
    u = float(payload["u"])
    v = float(payload["v"])
    user_res = scene.views[View.USER].resolution
    plane_res = ImageResolution(scene.plane.res_w, scene.plane.res_h)
    pu, pv = rescale(u, v, user_res, plane_res)
    point = pixel_to_world(scene.plane, pu, pv)
    direction = (point - scene.eye).normalized()
    return GazeSample(t_ms=t_ms, origin=scene.eye, direction=direction)


def _gaze_from_ray(payload: dict) -> GazeSample:
    from gazepick.geometry import Vec3

    t_ms = int(payload["t_ms"])
    ox, oy, oz = (float(c) for c in payload["origin"])
    dx, dy, dz = (float(c) for c in payload["dir"])
    return GazeSample(t_ms=t_ms, origin=Vec3(ox, oy, oz), direction=Vec3(dx, dy, dz))


_session_ids = itertools.count(1)


def create_app(scene: Scene, config: EngineConfig | None = None, *, ui_dir=None) -> FastAPI:
    config = config or EngineConfig()
    app = FastAPI(title="gazepick gateway")

    @app.websocket("/session")
    async def session_ws(ws: WebSocket):  # noqa: C901 - one handler, one protocol
        await ws.accept()
        conn = _Connection(ws, scene, config)
        session_counter = next(_session_ids)

        async def ticker():
            while True:
                await asyncio.sleep(_TICK_INTERVAL_S)
                sess = conn.session
                if sess is None or sess.phase is not SessionPhase.GRASPING:
                    continue
                wall_ms = int((time.monotonic() - conn.last_wall) * 1000)
                t = conn.last_client_t + wall_ms
                await conn.step_and_send(Tick(t_ms=t))

        tick_task = asyncio.create_task(ticker())
        try:
            while True:
                text = await ws.receive_text()
                if conn.over_rate_cap():
                    now = time.monotonic()
                    if now - conn.last_throttle_notice > 1.0:
                        conn.last_throttle_notice = now
                        await conn.send(
                            "throttle",
                            {"cap_per_s": config.rate_cap_per_s, "message": "rate cap exceeded"},
                        )
                    continue
                try:
                    msg_type, seq, payload = _parse_envelope(text)
                except (json.JSONDecodeError, ValueError, UnicodeDecodeError) as exc:
                    await conn.error("malformed", f"cannot parse envelope: {exc}", ref_seq=None)
                    continue
                if seq <= conn.last_client_seq:
                    await conn.error(
                        "bad_seq", f"seq {seq} not greater than {conn.last_client_seq}", ref_seq=seq
                    )
                    continue
                conn.last_client_seq = seq

                if msg_type == "hello":
                    if conn.session is not None:
                        await conn.error("protocol", "session already established", ref_seq=seq)
                        continue
                    try:
                        sess_config = _session_config(config, payload)
                    except (ValueError, ConfigError) as exc:
                        await conn.error("protocol", f"bad hello: {exc}", ref_seq=seq)
                        continue
                    # Each connection owns an independent world copy.
                    conn.session = Session(
                        copy.deepcopy(scene),
                        sess_config,
                        session_id=f"s{session_counter:04x}",
                        concurrent_detect=config.detector_url is not None,
                    )
                    await conn.send(
                        "session",
                        {
                            "session": conn.session.session_id,
                            "mode": sess_config.fixation.trigger_mode.value,
                            "policy": sess_config.policy.value,
                            "dwell_ms": sess_config.fixation.dwell_ms,
                            "radius_m": sess_config.fixation.radius_m,
                            "scene": scene_descriptor(scene),
                        },
                    )
                    continue

                if conn.session is None:
                    await conn.error("protocol", "hello required first", ref_seq=seq)
                    continue

                try:
                    if msg_type == "gaze":
                        inp = _gaze_from_ray(payload)
                    elif msg_type == "pointer":
                        inp = _gaze_from_pointer(scene, payload)
                    elif msg_type == "confirm":
                        inp = ConfirmPress(t_ms=int(payload["t_ms"]))
                    else:
                        await conn.error("unknown_type", f"unknown type {msg_type!r}", ref_seq=seq)
                        continue
                except (KeyError, TypeError, ValueError) as exc:
                    await conn.error("malformed", f"bad {msg_type} payload: {exc}", ref_seq=seq)
                    continue

                conn.last_client_t = max(conn.last_client_t, inp.t_ms)
                conn.last_wall = time.monotonic()
                await conn.step_and_send(inp)
        except WebSocketDisconnect:
            pass
        finally:
            tick_task.cancel()
            if conn.session is not None:
                conn.session.abort()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def check_port_free(host: str, port: int):
    """Raise ConfigError early if the serve port is taken."""
    import socket

    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as s:
        try:
            s.bind((host, port))
        except OSError as exc:
            raise ConfigError(f"cannot bind {host}:{port}: {exc}") from exc


def serve(scene: Scene, config: EngineConfig, *, host: str = "127.0.0.1", port: int = 8000, ui_dir=None):
    """Run the gateway until interrupted."""
    import uvicorn

    check_port_free(host, port)
    app = create_app(scene, config, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port, log_level="info")
