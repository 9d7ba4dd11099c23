"""Session pipeline: gaze stream -> fixation -> dual-view detection -> label
matching -> simulated grasp, with a full event log.

A Session owns one detector, one robot arm, and one scene. Inputs arrive
time-ordered; every state change appends an EventLogRecord, which is also the
unit the gateway streams to clients and the replay harness aggregates into a
report. All timing comes from input timestamps, so replaying a trace with a
fixed seed reproduces the log exactly.
"""

from __future__ import annotations

import enum
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

from gazepick.config import EngineConfig
from gazepick.errors import (
    DetectionError,
    ProtocolError,
    ReplayError,
    RobotBusyError,
)
from gazepick.fixation import FixationDetector, FixationEvent, TriggerMode
from gazepick.geometry import Vec3, pixel_to_world, raycast
from gazepick.intent import IntentResolution, MatchPolicy, ResolutionStatus, resolve
from gazepick.perception import (
    BoundingBox,
    DetectionSet,
    ExternalDetector,
    ImageResolution,
    SyntheticDetector,
    View,
    confidence_gate,
    hit_test,
    rescale,
)
from gazepick.simworld import RobotArm, RobotPhase, Scene


class SessionPhase(enum.Enum):
    IDLE = "idle"
    TRACKING = "tracking"
    AWAIT_CONFIRM = "await_confirm"
    CAPTURING = "capturing"
    DETECTING = "detecting"
    RESOLVING = "resolving"
    GRASPING = "grasping"
    COMPLETED = "completed"
    ERROR = "error"


_P = SessionPhase
ALLOWED_SESSION_EDGES = frozenset(
    {
        (_P.IDLE, _P.TRACKING),
        (_P.TRACKING, _P.AWAIT_CONFIRM),
        (_P.TRACKING, _P.CAPTURING),
        (_P.AWAIT_CONFIRM, _P.CAPTURING),
        (_P.AWAIT_CONFIRM, _P.TRACKING),
        (_P.CAPTURING, _P.DETECTING),
        (_P.DETECTING, _P.RESOLVING),
        (_P.RESOLVING, _P.GRASPING),
        (_P.RESOLVING, _P.TRACKING),
        (_P.GRASPING, _P.COMPLETED),
        (_P.COMPLETED, _P.TRACKING),
    }
    | {(p, _P.ERROR) for p in SessionPhase if p is not _P.ERROR}
)


@dataclass(frozen=True)
class GazeSample:
    t_ms: int
    origin: Vec3
    direction: Vec3


@dataclass(frozen=True)
class ConfirmPress:
    t_ms: int


@dataclass(frozen=True)
class Tick:
    t_ms: int


SessionInput = Union[GazeSample, ConfirmPress, Tick]


@dataclass(frozen=True)
class EventLogRecord:
    t_ms: int
    kind: str  # sample|progress|fixation|capture|detections|resolution|grasp_phase|error
    payload: dict


def _box_json(b: BoundingBox) -> dict:
    return {
        "id": b.instance_id,
        "label": b.label,
        "confidence": b.confidence,
        "box": [b.u1, b.v1, b.u2, b.v2],
    }


def _resolution_json(r: IntentResolution) -> dict:
    return {
        "status": r.status.value,
        "gaze_label": r.gaze_label,
        "target": _box_json(r.target) if r.target else None,
        "candidates": [_box_json(b) for b in r.candidates],
    }


class Session:
    """One user's pipeline instance; feed inputs sequentially via step()."""

    def __init__(
        self,
        scene: Scene,
        config: EngineConfig | None = None,
        *,
        session_id: str = "session",
        provider=None,
        concurrent_detect: bool = False,
    ):
        self.scene = scene
        self.config = config or EngineConfig()
        self.session_id = session_id
        self.detector = FixationDetector(self.config.fixation)
        self.robot = RobotArm(scene, seed=self.config.seed)
        self.provider = provider or self._default_provider()
        self.phase = SessionPhase.IDLE
        self.clock_ms = 0
        self.trial_count = 0
        self.last_fixation: Optional[FixationEvent] = None
        self.last_resolution: Optional[IntentResolution] = None
        self.log: List[EventLogRecord] = []
        self.transitions: List[Tuple[SessionPhase, SessionPhase, int]] = []
        self._pool = ThreadPoolExecutor(max_workers=2) if concurrent_detect else None

    def _default_provider(self):
        c = self.config
        if c.detector_url:
            user_res = self.scene.views[View.USER].resolution
            robot_res = self.scene.views[View.ROBOT].resolution
            return ExternalDetector(
                c.detector_url,
                {View.USER: user_res, View.ROBOT: robot_res},
                scene_id=self.scene.name,
                timeout_s=c.detector_timeout_s,
            )
        return SyntheticDetector(
            self.scene,
            sigma_px=c.sigma_px,
            conf_lo=c.conf_lo,
            conf_hi=c.conf_hi,
            p_miss=c.p_miss,
            seed=c.seed,
        )

    # -- state helpers ------------------------------------------------------

    def _goto(self, phase: SessionPhase, t_ms: int):
        edge = (self.phase, phase)
        if edge not in ALLOWED_SESSION_EDGES:
            raise AssertionError(f"illegal session transition {edge[0].value} -> {edge[1].value}")
        self.transitions.append((self.phase, phase, t_ms))
        self.phase = phase

    def _emit(self, out: List[EventLogRecord], t_ms: int, kind: str, payload: dict):
        rec = EventLogRecord(t_ms=t_ms, kind=kind, payload=payload)
        self.log.append(rec)
        out.append(rec)

    def _error(self, out, t_ms, code, message, *, fatal=False, **extra):
        self._emit(out, t_ms, "error", {"code": code, "message": message, **extra})
        if fatal:
            self._goto(SessionPhase.ERROR, t_ms)

    def abort(self, t_ms: Optional[int] = None):
        """Clean shutdown on disconnect: the robot returns to Idle."""
        t = self.clock_ms if t_ms is None else t_ms
        self.robot.reset(t)
        if self.phase is not SessionPhase.ERROR:
            self._goto(SessionPhase.ERROR, t)

    # -- main entry ---------------------------------------------------------

    def step(self, inp: SessionInput) -> List[EventLogRecord]:
        """Advance the session by one input; returns the records it produced."""
        out: List[EventLogRecord] = []
        t = inp.t_ms
        if self.phase is SessionPhase.ERROR:
            return out
        if self.phase is SessionPhase.IDLE:
            self._goto(SessionPhase.TRACKING, t)
        self.clock_ms = max(self.clock_ms, t)

        if self.phase is SessionPhase.GRASPING:
            self._advance_robot(out, t)

        if isinstance(inp, GazeSample):
            self._on_gaze(out, inp)
        elif isinstance(inp, ConfirmPress):
            self._on_confirm(out, inp)
        # Tick carries no payload beyond time; robot advance already ran.
        return out

    # -- input handlers -----------------------------------------------------

    def _on_gaze(self, out: List[EventLogRecord], sample: GazeSample):
        if self.phase not in (SessionPhase.TRACKING, SessionPhase.AWAIT_CONFIRM):
            return  # busy with a capture or grasp; gaze not tracked
        t = sample.t_ms
        try:
            direction = sample.direction.normalized()
        except ValueError:
            self._error(out, t, "protocol", "gaze direction is zero-length")
            return
        hit = raycast(self.scene.plane, sample.origin, direction)
        if self.config.log_samples:
            self._emit(
                out, t, "sample",
                {"hit": hit is not None, "u": hit.u if hit else None, "v": hit.v if hit else None},
            )
        try:
            progress, event = self.detector.feed(hit, t)
        except ProtocolError as exc:
            self._error(out, t, "protocol", str(exc))
            return
        self._emit(
            out, t, "progress",
            {
                "elapsed_ms": progress.elapsed_ms,
                "fraction": progress.fraction,
                "armed": self.detector.armed,
            },
        )
        if self.phase is SessionPhase.TRACKING and self.detector.armed:
            self._goto(SessionPhase.AWAIT_CONFIRM, t)
        elif self.phase is SessionPhase.AWAIT_CONFIRM and not self.detector.armed:
            self._goto(SessionPhase.TRACKING, t)
        if event is not None:
            self._run_capture(out, event, t)

    def _on_confirm(self, out: List[EventLogRecord], press: ConfirmPress):
        t = press.t_ms
        if self.config.fixation.trigger_mode is not TriggerMode.DWELL_PLUS_CONFIRM:
            self._error(out, t, "mode", "confirm press in auto-trigger mode")
            return
        if self.phase is not SessionPhase.AWAIT_CONFIRM:
            return  # nothing armed; silently ignored
        try:
            event = self.detector.confirm(t)
        except ProtocolError as exc:
            self._error(out, t, "protocol", str(exc))
            return
        if event is None:
            self._goto(SessionPhase.TRACKING, t)
            return
        self._run_capture(out, event, t)

    # -- capture pipeline ---------------------------------------------------

    def _run_capture(self, out: List[EventLogRecord], event: FixationEvent, t: int):
        self.trial_count += 1
        trial = self.trial_count
        self.last_fixation = event
        self._goto(SessionPhase.CAPTURING, t)
        self._emit(
            out, t, "fixation",
            {
                "trial": trial,
                "start_ms": event.start_ms,
                "fired_ms": event.fired_ms,
                "dwell_latency_ms": event.fired_ms - event.start_ms,
                "pixel_u": event.pixel_u,
                "pixel_v": event.pixel_v,
                "centroid": [event.centroid.x, event.centroid.y, event.centroid.z],
                "sample_count": event.sample_count,
                "dispersion_m": event.max_dispersion_m,
            },
        )
        plane = self.scene.plane
        plane_res = ImageResolution(plane.res_w, plane.res_h)
        user_res = self.scene.views[View.USER].resolution
        image_u, image_v = rescale(event.pixel_u, event.pixel_v, plane_res, user_res)
        self._emit(
            out, t, "capture",
            {
                "trial": trial,
                "plane_u": event.pixel_u,
                "plane_v": event.pixel_v,
                "image_u": image_u,
                "image_v": image_v,
            },
        )

        self._goto(SessionPhase.DETECTING, t)
        gated = self._detect_both(out, t, trial)
        if gated is None:
            return  # already in ERROR
        user_dets, robot_dets = gated

        self._goto(SessionPhase.RESOLVING, t)
        target_box = hit_test((image_u, image_v), user_dets)
        if target_box is None:
            self._error(out, t, "no_object", "fixation landed on background")
            self._goto(SessionPhase.TRACKING, t)
            self.detector.reset()
            return

        resolution = resolve(
            target_box.label, robot_dets, self.config.policy, resolved_at_ms=t
        )
        self.last_resolution = resolution
        self._emit(out, t, "resolution", {"trial": trial, **_resolution_json(resolution)})

        if resolution.status is not ResolutionStatus.MATCHED:
            self._goto(SessionPhase.TRACKING, t)
            self.detector.reset()
            return

        try:
            self.robot.command_grasp(resolution.target, t)
        except RobotBusyError as exc:
            self._error(out, t, "busy", str(exc))
            self._goto(SessionPhase.TRACKING, t)
            self.detector.reset()
            return
        if self.robot.phase is RobotPhase.FAULTED:
            self._emit(
                out, t, "grasp_phase",
                {"trial": trial, "phase": "faulted", "reason": self.robot.fault_reason},
            )
            self.robot.reset(t)
            self._goto(SessionPhase.TRACKING, t)
            self.detector.reset()
            return
        self._emit(
            out, t, "grasp_phase",
            {"trial": trial, "phase": self.robot.phase.value, "target_id": self.robot.target_id},
        )
        self._goto(SessionPhase.GRASPING, t)

    def _detect_one(self, view: View, t: int, trial: int):
        """Detect with retries; returns (records_payloads, DetectionSet | None)."""
        notes = []
        for attempt in range(self.config.retries + 1):
            try:
                dets = self.provider.detect(view, captured_at_ms=t, capture_index=trial)
                return notes, dets
            except DetectionError as exc:
                notes.append(
                    {
                        "code": "detection",
                        "message": str(exc),
                        "view": view.value,
                        "attempt": attempt,
                        "retryable": exc.retryable,
                        "retries_left": self.config.retries - attempt,
                    }
                )
                if not exc.retryable:
                    break
            except ProtocolError as exc:
                notes.append(
                    {"code": "protocol", "message": str(exc), "view": view.value, "attempt": attempt}
                )
                break
        return notes, None

    def _detect_both(self, out, t: int, trial: int):
        views = (View.USER, View.ROBOT)
        if self._pool is not None:
            futures = [self._pool.submit(self._detect_one, v, t, trial) for v in views]
            results = [f.result() for f in futures]
        else:
            results = [self._detect_one(v, t, trial) for v in views]

        gated: List[DetectionSet] = []
        failed = False
        for view, (notes, dets) in zip(views, results):
            for note in notes:
                self._emit(out, t, "error", note)
            if dets is None:
                failed = True
                continue
            kept = confidence_gate(dets, self.config.min_conf)
            self._emit(
                out, t, "detections",
                {
                    "trial": trial,
                    "view": view.value,
                    "resolution": [dets.resolution.width_px, dets.resolution.height_px],
                    "boxes": [_box_json(b) for b in kept.boxes],
                    "dropped": len(dets.boxes) - len(kept.boxes),
                },
            )
            gated.append(kept)
        if failed:
            self._goto(SessionPhase.ERROR, t)
            return None
        return gated[0], gated[1]

    # -- robot --------------------------------------------------------------

    def _advance_robot(self, out: List[EventLogRecord], t: int):
        trial = self.trial_count
        target_id = self.robot.target_id or self.robot.last_target_id
        for _, to_phase, at_ms in self.robot.tick(t):
            payload = {"trial": trial, "phase": to_phase.value, "target_id": target_id}
            if to_phase is RobotPhase.FAULTED:
                payload["reason"] = self.robot.fault_reason
            self._emit(out, at_ms, "grasp_phase", payload)
        if self.robot.phase is RobotPhase.DONE:
            done_at = self.robot.phase_entered_ms
            self._goto(SessionPhase.COMPLETED, done_at)
            self.robot.reset(done_at)
            self._emit(out, done_at, "grasp_phase", {"trial": trial, "phase": "idle", "reset": True})
            self._goto(SessionPhase.TRACKING, done_at)
            self.detector.reset()
        elif self.robot.phase is RobotPhase.FAULTED:
            self._error(out, t, "fault", self.robot.fault_reason or "robot fault", fatal=True)


# -- trace replay -------------------------------------------------------------

def read_trace(path) -> List[SessionInput]:
    """Parse a line-delimited trace file; errors name the offending line."""
    inputs: List[SessionInput] = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ReplayError(f"line {lineno}: not valid JSON: {exc}")
        try:
            t_ms = int(raw["t_ms"])
            kind = raw["type"]
            if kind == "gaze":
                origin = raw["origin"]
                direction = raw["dir"]
                inputs.append(
                    GazeSample(
                        t_ms=t_ms,
                        origin=Vec3(*(float(c) for c in origin)),
                        direction=Vec3(*(float(c) for c in direction)),
                    )
                )
            elif kind == "confirm":
                inputs.append(ConfirmPress(t_ms=t_ms))
            else:
                raise ReplayError(f"line {lineno}: unknown record type {kind!r}")
        except ReplayError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ReplayError(f"line {lineno}: malformed record: {exc}")
    return inputs


_TIMELINE_KINDS = ("fixation", "capture", "detections", "resolution", "grasp_phase", "error")


def build_report(session: Session, *, scene_name: str, seed: int) -> dict:
    """Aggregate a session's event log into the report document."""
    cfg = session.config
    trials = []
    current = None
    confidences: List[float] = []
    error_count = 0
    for rec in session.log:
        if rec.kind == "error":
            error_count += 1
        if rec.kind == "fixation":
            current = {
                "index": len(trials) + 1,
                "fixation": dict(rec.payload),
                "gaze_label": None,
                "resolution": None,
                "grasp": {"outcome": "none", "done_ms": None},
                "detections": {},
                "timeline": [],
            }
            trials.append(current)
        if current is None or rec.kind not in _TIMELINE_KINDS:
            continue
        current["timeline"].append({"t_ms": rec.t_ms, "kind": rec.kind, **rec.payload})
        if rec.kind == "detections":
            current["detections"][rec.payload["view"]] = len(rec.payload["boxes"])
            confidences.extend(b["confidence"] for b in rec.payload["boxes"])
        elif rec.kind == "resolution":
            current["gaze_label"] = rec.payload["gaze_label"]
            current["resolution"] = {
                "status": rec.payload["status"],
                "target": rec.payload["target"],
                "candidates": [b["id"] for b in rec.payload["candidates"]],
            }
        elif rec.kind == "grasp_phase":
            if rec.payload["phase"] == "done":
                current["grasp"] = {"outcome": "done", "done_ms": rec.t_ms}
            elif rec.payload["phase"] == "faulted":
                current["grasp"] = {"outcome": "faulted", "done_ms": None}
        elif rec.kind == "error" and rec.payload.get("code") == "no_object":
            current["resolution"] = {"status": "no_object", "target": None, "candidates": []}

    n = len(trials)
    matched = sum(1 for t in trials if t["resolution"] and t["resolution"]["status"] == "matched")
    ambiguous = sum(
        1 for t in trials if t["resolution"] and t["resolution"]["status"] == "ambiguous"
    )
    no_match = sum(1 for t in trials if t["resolution"] and t["resolution"]["status"] == "no_match")
    no_object = sum(
        1 for t in trials if t["resolution"] and t["resolution"]["status"] == "no_object"
    )
    done = sum(1 for t in trials if t["grasp"]["outcome"] == "done")
    matched_and_done = sum(
        1
        for t in trials
        if t["grasp"]["outcome"] == "done"
        and t["resolution"]
        and t["resolution"]["status"] == "matched"
    )
    return {
        "schema": "gazepick-report/1",
        "scene": {"name": scene_name, "object_count": len(session.scene.objects)},
        "seed": seed,
        "config": {
            "dwell_ms": cfg.fixation.dwell_ms,
            "radius_m": cfg.fixation.radius_m,
            "trigger_mode": cfg.fixation.trigger_mode.value,
            "refractory_ms": cfg.fixation.refractory_ms,
            "policy": cfg.policy.value,
            "min_conf": cfg.min_conf,
            "sigma_px": cfg.sigma_px,
            "conf_lo": cfg.conf_lo,
            "conf_hi": cfg.conf_hi,
            "p_miss": cfg.p_miss,
            "retries": cfg.retries,
        },
        "trials": trials,
        "aggregate": {
            "trials": n,
            "matched": matched,
            "ambiguous": ambiguous,
            "no_match": no_match,
            "no_object": no_object,
            "grasps_done": done,
            "selection_accuracy": (matched_and_done / n) if n else None,
            "ambiguity_rate": (ambiguous / n) if n else None,
            "mean_confidence": (sum(confidences) / len(confidences)) if confidences else None,
            "errors": error_count,
        },
        "event_count": len(session.log),
    }


def report_bytes(report: dict) -> bytes:
    return (json.dumps(report, indent=2, sort_keys=True) + "\n").encode()


def replay(
    trace_path,
    scene: Scene,
    config: EngineConfig | None = None,
    *,
    settle_step_ms: int = 50,
    settle_limit_ms: int = 30_000,
) -> dict:
    """Run a trace through a fresh session and build the report.

    After the trace ends the clock keeps ticking so an in-flight grasp can
    finish (bounded by settle_limit_ms of simulated time).
    """
    config = config or EngineConfig()
    inputs = read_trace(trace_path)
    session = Session(scene, config, session_id="replay")
    t = 0
    for inp in inputs:
        session.step(inp)
        t = max(t, inp.t_ms)
    deadline = t + settle_limit_ms
    while session.phase is SessionPhase.GRASPING and t < deadline:
        t += settle_step_ms
        session.step(Tick(t_ms=t))
    scene_name = scene.name
    return build_report(session, scene_name=scene_name, seed=config.seed)


def generate_trace(
    scene: Scene,
    target_label: str,
    *,
    dwell_ms: int = 2000,
    rate_hz: int = 50,
    confirm: bool = False,
    lead_out_ms: int = 200,
    jitter_m: float = 0.0,
    seed: int = 0,
) -> List[dict]:
    """Synthesize a dwell trace over the first object carrying target_label.

    Rays run from the scene's eye point through the object's user-view box
    center; optional jitter displaces each sample uniformly within a disc of
    jitter_m radius in plane-local meters.
    """
    import random as _random

    matching = sorted(
        (o for o in scene.on_table() if o.label == target_label), key=lambda o: o.id
    )
    if not matching:
        raise ReplayError(f"no on-table object with label {target_label!r}")
    obj = matching[0]
    plane = scene.plane
    rel = obj.position - plane.origin
    local_u = rel.dot(plane.u_axis)
    local_v = rel.dot(plane.v_axis)
    base_u = local_u / plane.width_m * plane.res_w
    base_v = local_v / plane.height_m * plane.res_h

    rng = _random.Random(seed)
    step = round(1000 / rate_hz)
    entries = []
    t = 0
    while t <= dwell_ms + lead_out_ms:
        u, v = base_u, base_v
        if jitter_m > 0:
            while True:
                jx = rng.uniform(-jitter_m, jitter_m)
                jy = rng.uniform(-jitter_m, jitter_m)
                if jx * jx + jy * jy <= jitter_m * jitter_m:
                    break
            u += jx / plane.width_m * plane.res_w
            v += jy / plane.height_m * plane.res_h
        point = pixel_to_world(plane, u, v)
        direction = (point - scene.eye).normalized()
        entries.append(
            {
                "t_ms": t,
                "type": "gaze",
                "origin": [scene.eye.x, scene.eye.y, scene.eye.z],
                "dir": [direction.x, direction.y, direction.z],
            }
        )
        t += step
    if confirm:
        entries.append({"t_ms": t, "type": "confirm"})
    return entries


def write_trace(entries: List[dict], path):
    Path(path).write_text("".join(json.dumps(e) + "\n" for e in entries))
