"""Deterministic stand-in for the physical tabletop setup.

A scene holds labeled boxes on a rectangular table, two orthographic camera
views (the user's side view shares the collision plane geometry; the robot
looks top-down), and a simulated arm that executes pick-and-place as a timed
state machine. Phase durations are simulated time advanced by the caller's
clock, never wall-clock sleeps, so replays run fast and reproduce exactly.
"""

from __future__ import annotations

import enum
import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from gazepick.errors import RobotBusyError, SceneError
from gazepick.geometry import CollisionPlane, Vec3
from gazepick.perception import (
    BoundingBox,
    DetectionSet,
    ImageResolution,
    View,
    project_boxes,
)

_BOUNDS_EPS = 1e-9


class ObjectLocation(enum.Enum):
    ON_TABLE = "on_table"
    GRASPED = "grasped"
    IN_PLACE_ZONE = "in_place_zone"


@dataclass
class SceneObject:
    id: str
    label: str
    position: Vec3
    half_extents: Tuple[float, float, float]
    location: ObjectLocation = ObjectLocation.ON_TABLE


@dataclass(frozen=True)
class OrthoView:
    """Orthographic table-frame -> image-pixel mapping.

    Pixel (0, 0) is at `origin`; u grows along axis_u at ppm_u pixels per
    meter, v along axis_v at ppm_v. Axes must be orthonormal directions.
    """

    view: View
    origin: Vec3
    axis_u: Vec3
    axis_v: Vec3
    ppm_u: float
    ppm_v: float
    resolution: ImageResolution

    def __post_init__(self):
        if self.ppm_u <= 0 or self.ppm_v <= 0:
            raise SceneError(f"view {self.view.value}: pixels-per-meter must be positive")
        if abs(self.axis_u.norm() - 1.0) > 1e-9 or abs(self.axis_v.norm() - 1.0) > 1e-9:
            raise SceneError(f"view {self.view.value}: projection axes must be unit length")
        if abs(self.axis_u.dot(self.axis_v)) > 1e-9:
            raise SceneError(f"view {self.view.value}: projection axes must be orthogonal")

    def project_point(self, p: Vec3) -> Tuple[float, float]:
        rel = p - self.origin
        return (rel.dot(self.axis_u) * self.ppm_u, rel.dot(self.axis_v) * self.ppm_v)

    def footprint(self, obj: SceneObject) -> Tuple[float, float, float, float]:
        """Axis-aligned pixel box of the object's extents (exact for ortho views)."""
        cu, cv = self.project_point(obj.position)
        hx, hy, hz = obj.half_extents
        hu = (abs(self.axis_u.x) * hx + abs(self.axis_u.y) * hy + abs(self.axis_u.z) * hz) * self.ppm_u
        hv = (abs(self.axis_v.x) * hx + abs(self.axis_v.y) * hy + abs(self.axis_v.z) * hz) * self.ppm_v
        return (cu - hu, cv - hv, cu + hu, cv + hv)


@dataclass
class Scene:
    name: str
    table_width_m: float
    table_depth_m: float
    plane: CollisionPlane
    eye: Vec3
    views: Dict[View, OrthoView]
    objects: Dict[str, SceneObject]
    _placed_count: int = field(default=0, repr=False)

    def object(self, obj_id: str) -> Optional[SceneObject]:
        return self.objects.get(obj_id)

    def on_table(self) -> List[SceneObject]:
        return [o for o in self.objects.values() if o.location is ObjectLocation.ON_TABLE]

    def project(self, view: View, *, captured_at_ms: int = 0) -> DetectionSet:
        """Ground-truth detections: one clipped box per OnTable object."""
        ortho = self.views[view]
        footprints = [
            (o.id, o.label, *ortho.footprint(o)) for o in self.on_table()
        ]
        return project_boxes(footprints, view, ortho.resolution, captured_at_ms)

    def next_place_position(self, obj: SceneObject) -> Vec3:
        """Slot in the place zone beside the table; slots advance per placement."""
        slot = self._placed_count
        self._placed_count += 1
        return Vec3(self.table_width_m + 0.15, 0.10 + 0.12 * slot, obj.half_extents[2])


def project(scene: Scene, view: View, *, captured_at_ms: int = 0) -> DetectionSet:
    return scene.project(view, captured_at_ms=captured_at_ms)


# -- Scene config -----------------------------------------------------------

def _vec(raw, where: str) -> Vec3:
    if not isinstance(raw, (list, tuple)) or len(raw) != 3:
        raise SceneError(f"{where}: expected [x, y, z]")
    return Vec3(float(raw[0]), float(raw[1]), float(raw[2]))


def _require(cfg: dict, key: str, where: str):
    if key not in cfg:
        raise SceneError(f"{where}: missing key '{key}'")
    return cfg[key]


def _check_table_fits(view: OrthoView, width: float, depth: float):
    w, h = view.resolution.width_px, view.resolution.height_px
    for cx, cy in ((0, 0), (width, 0), (0, depth), (width, depth)):
        u, v = view.project_point(Vec3(cx, cy, 0.0))
        if u < -_BOUNDS_EPS or u > w + _BOUNDS_EPS or v < -_BOUNDS_EPS or v > h + _BOUNDS_EPS:
            raise SceneError(
                f"view {view.view.value}: projected table corner ({cx}, {cy}) at pixel "
                f"({u:.1f}, {v:.1f}) falls outside the {w}x{h} image"
            )


def load_scene(source) -> Scene:
    """Build a validated scene from a config dict or a JSON file path.

    Field names are frozen in docs/PROTOCOL.md. Overlapping object footprints
    are allowed; positions off the table are rejected with the object and
    field named.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise SceneError(f"{path}: not valid JSON: {exc}") from exc
        name = cfg.get("name", path.stem)
    else:
        cfg = source
        name = cfg.get("name", "scene")

    table = _require(cfg, "table", "scene")
    width = float(_require(table, "width_m", "table"))
    depth = float(_require(table, "depth_m", "table"))
    if width <= 0 or depth <= 0:
        raise SceneError("table: width_m and depth_m must be positive")

    views_cfg = _require(cfg, "views", "scene")
    user_cfg = _require(views_cfg, "user", "views")
    plane_cfg = _require(user_cfg, "plane", "views.user")
    plane = CollisionPlane(
        origin=_vec(_require(plane_cfg, "origin", "views.user.plane"), "views.user.plane.origin"),
        u_axis=_vec(_require(plane_cfg, "u_axis", "views.user.plane"), "views.user.plane.u_axis"),
        v_axis=_vec(_require(plane_cfg, "v_axis", "views.user.plane"), "views.user.plane.v_axis"),
        width_m=float(_require(plane_cfg, "width_m", "views.user.plane")),
        height_m=float(_require(plane_cfg, "height_m", "views.user.plane")),
        res_w=int(_require(plane_cfg, "res_w", "views.user.plane")),
        res_h=int(_require(plane_cfg, "res_h", "views.user.plane")),
    )
    user_image = _require(user_cfg, "image", "views.user")
    user_view = OrthoView(
        view=View.USER,
        origin=plane.origin,
        axis_u=plane.u_axis,
        axis_v=plane.v_axis,
        ppm_u=int(user_image[0]) / plane.width_m,
        ppm_v=int(user_image[1]) / plane.height_m,
        resolution=ImageResolution(int(user_image[0]), int(user_image[1])),
    )
    eye = _vec(_require(user_cfg, "eye", "views.user"), "views.user.eye")

    robot_cfg = _require(views_cfg, "robot", "views")
    robot_image = _require(robot_cfg, "image", "views.robot")
    ppm = float(_require(robot_cfg, "pixels_per_meter", "views.robot"))
    robot_view = OrthoView(
        view=View.ROBOT,
        origin=_vec(_require(robot_cfg, "origin", "views.robot"), "views.robot.origin"),
        axis_u=_vec(_require(robot_cfg, "u_axis", "views.robot"), "views.robot.u_axis"),
        axis_v=_vec(_require(robot_cfg, "v_axis", "views.robot"), "views.robot.v_axis"),
        ppm_u=ppm,
        ppm_v=ppm,
        resolution=ImageResolution(int(robot_image[0]), int(robot_image[1])),
    )

    _check_table_fits(robot_view, width, depth)

    objects: Dict[str, SceneObject] = {}
    for i, raw in enumerate(_require(cfg, "objects", "scene")):
        where = f"objects[{i}]"
        obj_id = str(_require(raw, "id", where))
        if obj_id in objects:
            raise SceneError(f"{where}: duplicate id '{obj_id}'")
        pos = _vec(_require(raw, "position", where), f"{where}.position")
        he = _require(raw, "half_extents", where)
        if not isinstance(he, (list, tuple)) or len(he) != 3:
            raise SceneError(f"{where}.half_extents: expected [hx, hy, hz]")
        hx, hy, hz = (float(v) for v in he)
        if hx <= 0 or hy <= 0 or hz <= 0:
            raise SceneError(f"object '{obj_id}': half_extents must be positive")
        if pos.x - hx < -_BOUNDS_EPS or pos.x + hx > width + _BOUNDS_EPS:
            raise SceneError(
                f"object '{obj_id}': position.x {pos.x} (±{hx}) outside table width [0, {width}]"
            )
        if pos.y - hy < -_BOUNDS_EPS or pos.y + hy > depth + _BOUNDS_EPS:
            raise SceneError(
                f"object '{obj_id}': position.y {pos.y} (±{hy}) outside table depth [0, {depth}]"
            )
        if pos.z - hz < -_BOUNDS_EPS:
            raise SceneError(f"object '{obj_id}': position.z {pos.z} sinks below the table")
        objects[obj_id] = SceneObject(
            id=obj_id, label=str(_require(raw, "label", where)), position=pos,
            half_extents=(hx, hy, hz),
        )

    return Scene(
        name=name,
        table_width_m=width,
        table_depth_m=depth,
        plane=plane,
        eye=eye,
        views={View.USER: user_view, View.ROBOT: robot_view},
        objects=objects,
    )


# -- Robot arm --------------------------------------------------------------

class RobotPhase(enum.Enum):
    IDLE = "idle"
    MOVING_TO_TARGET = "moving_to_target"
    GRASPING = "grasping"
    MOVING_TO_PLACE = "moving_to_place"
    RELEASING = "releasing"
    DONE = "done"
    FAULTED = "faulted"


_PICK_SEQUENCE = (
    RobotPhase.IDLE,
    RobotPhase.MOVING_TO_TARGET,
    RobotPhase.GRASPING,
    RobotPhase.MOVING_TO_PLACE,
    RobotPhase.RELEASING,
    RobotPhase.DONE,
)

ALLOWED_EDGES = frozenset(
    {(_PICK_SEQUENCE[i], _PICK_SEQUENCE[i + 1]) for i in range(len(_PICK_SEQUENCE) - 1)}
    | {(p, RobotPhase.FAULTED) for p in RobotPhase if p is not RobotPhase.FAULTED}
    | {(RobotPhase.DONE, RobotPhase.IDLE), (RobotPhase.FAULTED, RobotPhase.IDLE)}
)


@dataclass(frozen=True)
class PhaseDurations:
    moving_to_target_ms: int = 1500
    grasping_ms: int = 500
    moving_to_place_ms: int = 1500
    releasing_ms: int = 500

    def of(self, phase: RobotPhase) -> int:
        return {
            RobotPhase.MOVING_TO_TARGET: self.moving_to_target_ms,
            RobotPhase.GRASPING: self.grasping_ms,
            RobotPhase.MOVING_TO_PLACE: self.moving_to_place_ms,
            RobotPhase.RELEASING: self.releasing_ms,
        }[phase]


class RobotArm:
    """Pick-and-place state machine over simulated time.

    Grasp succeeds unconditionally when preconditions hold; set p_fault > 0
    to inject failures at the grasp step for testing the Faulted path.
    """

    def __init__(
        self,
        scene: Scene,
        durations: PhaseDurations | None = None,
        *,
        p_fault: float = 0.0,
        seed: int = 0,
    ):
        self.scene = scene
        self.durations = durations or PhaseDurations()
        self.p_fault = p_fault
        self._rng = random.Random(seed)
        self.phase = RobotPhase.IDLE
        self.target_id: Optional[str] = None
        self.last_target_id: Optional[str] = None
        self.phase_entered_ms = 0
        self.fault_reason: Optional[str] = None
        self._holding: Optional[str] = None
        self.transitions: List[Tuple[RobotPhase, RobotPhase, int]] = []

    def _enter(self, phase: RobotPhase, t_ms: int):
        edge = (self.phase, phase)
        if edge not in ALLOWED_EDGES:
            raise AssertionError(f"illegal robot transition {edge[0].value} -> {edge[1].value}")
        self.transitions.append((self.phase, phase, t_ms))
        self.phase = phase
        self.phase_entered_ms = t_ms

    def command_grasp(self, target: BoundingBox, t_ms: int):
        """Start a pick cycle toward a robot-view detection.

        Raises RobotBusyError unless Idle. A stale target (not in the scene,
        or no longer on the table) faults the arm with the reason recorded.
        """
        if self.phase is not RobotPhase.IDLE:
            raise RobotBusyError(f"arm is {self.phase.value}, not idle")
        obj = self.scene.object(target.instance_id)
        if obj is None or obj.location is not ObjectLocation.ON_TABLE:
            self.fault_reason = f"target '{target.instance_id}' not on the table"
            self.target_id = None
            self._enter(RobotPhase.FAULTED, t_ms)
            return
        self.target_id = target.instance_id
        self.last_target_id = target.instance_id
        self.fault_reason = None
        self._enter(RobotPhase.MOVING_TO_TARGET, t_ms)

    def tick(self, t_ms: int) -> List[Tuple[RobotPhase, RobotPhase, int]]:
        """Advance simulated time; returns the transitions that occurred.

        Phase boundaries land at exact accumulated durations, so a single
        large tick crosses several phases deterministically.
        """
        before = len(self.transitions)
        while self.phase in (
            RobotPhase.MOVING_TO_TARGET,
            RobotPhase.GRASPING,
            RobotPhase.MOVING_TO_PLACE,
            RobotPhase.RELEASING,
        ):
            boundary = self.phase_entered_ms + self.durations.of(self.phase)
            if t_ms < boundary:
                break
            if self.phase is RobotPhase.MOVING_TO_TARGET:
                self._enter(RobotPhase.GRASPING, boundary)
            elif self.phase is RobotPhase.GRASPING:
                if self.p_fault > 0 and self._rng.random() < self.p_fault:
                    self.fault_reason = "grasp failed"
                    self._fault(boundary)
                    break
                obj = self.scene.object(self.target_id)
                obj.location = ObjectLocation.GRASPED
                self._holding = obj.id
                self._enter(RobotPhase.MOVING_TO_PLACE, boundary)
            elif self.phase is RobotPhase.MOVING_TO_PLACE:
                self._enter(RobotPhase.RELEASING, boundary)
            else:  # RELEASING
                obj = self.scene.object(self.target_id)
                obj.location = ObjectLocation.IN_PLACE_ZONE
                obj.position = self.scene.next_place_position(obj)
                self._holding = None
                self.target_id = None
                self._enter(RobotPhase.DONE, boundary)
        return self.transitions[before:]

    def _fault(self, t_ms: int):
        if self._holding is not None:
            held = self.scene.object(self._holding)
            if held is not None:
                held.location = ObjectLocation.ON_TABLE
            self._holding = None
        self.target_id = None
        self._enter(RobotPhase.FAULTED, t_ms)

    def reset(self, t_ms: int):
        """Return to Idle for the next trial, aborting any active cycle."""
        if self.phase is RobotPhase.IDLE:
            return
        if self.phase not in (RobotPhase.DONE, RobotPhase.FAULTED):
            self.fault_reason = "aborted"
            self._fault(t_ms)
        self.target_id = None
        self._enter(RobotPhase.IDLE, t_ms)
