"""Detection-set handling.

Coordinate rescaling between pixel grids, bounding-box hit testing with a
deterministic overlap policy, confidence gating, and the detection provider
abstraction: a synthetic detector that perturbs ground-truth projections, and
a client for an external detection service speaking the JSON schema in
docs/PROTOCOL.md.
"""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, replace
from typing import Optional, Protocol, Sequence, Tuple

import httpx

from gazepick.errors import ConfigError, DetectionError, ProtocolError


class View(enum.Enum):
    USER = "user"
    ROBOT = "robot"


@dataclass(frozen=True)
class ImageResolution:
    width_px: int
    height_px: int

    def __post_init__(self):
        if self.width_px < 1 or self.height_px < 1:
            raise ConfigError("image resolution must be at least 1x1")


@dataclass(frozen=True)
class BoundingBox:
    label: str
    confidence: float
    u1: float
    v1: float
    u2: float
    v2: float
    instance_id: str

    def __post_init__(self):
        if self.u1 > self.u2 or self.v1 > self.v2:
            raise ConfigError(f"box {self.instance_id}: corners out of order")
        if not 0.0 <= self.confidence <= 1.0:
            raise ConfigError(f"box {self.instance_id}: confidence outside [0, 1]")

    @property
    def area(self) -> float:
        return (self.u2 - self.u1) * (self.v2 - self.v1)

    def contains(self, u: float, v: float) -> bool:
        # Boundary inclusive on all four edges.
        return self.u1 <= u <= self.u2 and self.v1 <= v <= self.v2


@dataclass(frozen=True)
class DetectionSet:
    view: View
    resolution: ImageResolution
    boxes: Tuple[BoundingBox, ...]
    captured_at_ms: int

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        ids = [b.instance_id for b in self.boxes]
        if len(set(ids)) != len(ids):
            raise ConfigError("detection set has duplicate instance ids")
        w, h = self.resolution.width_px, self.resolution.height_px
        for b in self.boxes:
            if b.u1 < 0 or b.v1 < 0 or b.u2 > w or b.v2 > h:
                raise ConfigError(f"box {b.instance_id}: outside image bounds")


def rescale(
    u: float, v: float, from_res: ImageResolution, to_res: ImageResolution
) -> Tuple[float, float]:
    """Map (u, v) between pixel grids: u' = u/W * W', v' = v/H * H'. No rounding."""
    if not (0.0 <= u <= from_res.width_px and 0.0 <= v <= from_res.height_px):
        raise ValueError(
            f"point ({u}, {v}) outside source resolution "
            f"{from_res.width_px}x{from_res.height_px}"
        )
    return (u / from_res.width_px * to_res.width_px, v / from_res.height_px * to_res.height_px)


def hit_test(p: Tuple[float, float], dets: DetectionSet) -> Optional[BoundingBox]:
    """Box containing p, or None. Overlaps resolve to the smallest-area box
    (most specific object under the gaze point); ties break by higher
    confidence, then lexicographic instance id."""
    u, v = p
    best = None
    best_key = None
    for box in dets.boxes:
        if box.contains(u, v):
            key = (box.area, -box.confidence, box.instance_id)
            if best_key is None or key < best_key:
                best, best_key = box, key
    return best


def confidence_gate(dets: DetectionSet, min_conf: float) -> DetectionSet:
    """Drop boxes with confidence < min_conf, preserving order and ids."""
    if not 0.0 <= min_conf <= 1.0:
        raise ConfigError("min_conf must be within [0, 1]")
    return replace(dets, boxes=tuple(b for b in dets.boxes if b.confidence >= min_conf))


class DetectionProvider(Protocol):
    def detect(self, view: View, *, captured_at_ms: int, capture_index: int) -> DetectionSet:
        """Produce detections for one view at one capture instant."""


class SyntheticDetector:
    """Ground-truth-backed detector over a simulated scene.

    Projects the scene into the requested view, then perturbs each box edge
    by Uniform(-sigma_px, +sigma_px), draws confidence from
    Uniform(conf_lo, conf_hi), and drops boxes with probability p_miss.
    Each (capture, view) pair gets its own RNG stream derived from the seed,
    so results are reproducible even if the two views are detected
    concurrently.
    """

    def __init__(
        self,
        scene,
        *,
        sigma_px: float = 0.0,
        conf_lo: float = 0.88,
        conf_hi: float = 0.99,
        p_miss: float = 0.0,
        seed: int = 0,
    ):
        if not 0.0 <= conf_lo <= conf_hi <= 1.0:
            raise ConfigError("need 0 <= conf_lo <= conf_hi <= 1")
        if sigma_px < 0 or not 0.0 <= p_miss <= 1.0:
            raise ConfigError("sigma_px must be >= 0 and p_miss within [0, 1]")
        self._scene = scene
        self.sigma_px = sigma_px
        self.conf_lo = conf_lo
        self.conf_hi = conf_hi
        self.p_miss = p_miss
        self.seed = seed

    def _rng(self, capture_index: int, view: View) -> random.Random:
        view_code = 1 if view is View.USER else 2
        return random.Random(self.seed * 1_000_003 + capture_index * 8191 + view_code)

    def detect(self, view: View, *, captured_at_ms: int, capture_index: int) -> DetectionSet:
        truth = self._scene.project(view, captured_at_ms=captured_at_ms)
        rng = self._rng(capture_index, view)
        w, h = truth.resolution.width_px, truth.resolution.height_px
        out = []
        for box in truth.boxes:
            if rng.random() < self.p_miss:
                continue
            s = self.sigma_px
            e1 = box.u1 + rng.uniform(-s, s)
            e2 = box.v1 + rng.uniform(-s, s)
            e3 = box.u2 + rng.uniform(-s, s)
            e4 = box.v2 + rng.uniform(-s, s)
            u1, u2 = min(e1, e3), max(e1, e3)
            v1, v2 = min(e2, e4), max(e2, e4)
            out.append(
                BoundingBox(
                    label=box.label,
                    confidence=rng.uniform(self.conf_lo, self.conf_hi),
                    u1=min(max(u1, 0.0), w),
                    v1=min(max(v1, 0.0), h),
                    u2=min(max(u2, 0.0), w),
                    v2=min(max(v2, 0.0), h),
                    instance_id=box.instance_id,
                )
            )
        return DetectionSet(
            view=view, resolution=truth.resolution, boxes=tuple(out), captured_at_ms=captured_at_ms
        )


class ExternalDetector:
    """Client for a detection service over HTTP.

    POSTs {"view", "width", "height", "image_b64", "scene_id"} and expects
    {"boxes": [{"label", "confidence", "u1", "v1", "u2", "v2"}]}. Reply box
    order defines instance ids ("user-0", "user-1", ...). Transport failures
    raise DetectionError with retry metadata; schema violations raise
    ProtocolError.
    """

    def __init__(
        self,
        base_url: str,
        resolutions: dict,
        *,
        scene_id: Optional[str] = None,
        timeout_s: float = 5.0,
        client: Optional[httpx.Client] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.resolutions = resolutions  # View -> ImageResolution
        self.scene_id = scene_id
        self._client = client or httpx.Client(timeout=timeout_s)

    def detect(self, view: View, *, captured_at_ms: int, capture_index: int) -> DetectionSet:
        res = self.resolutions[view]
        body = {
            "view": view.value,
            "width": res.width_px,
            "height": res.height_px,
            "image_b64": None,
            "scene_id": self.scene_id,
        }
        try:
            reply = self._client.post(f"{self.base_url}/detect", json=body)
        except httpx.HTTPError as exc:
            raise DetectionError(
                f"detection service unreachable: {exc}", retryable=True, attempt=capture_index
            ) from exc
        if reply.status_code != 200:
            raise DetectionError(
                f"detection service returned HTTP {reply.status_code}",
                retryable=reply.status_code >= 500,
            )
        try:
            payload = reply.json()
            boxes = [
                BoundingBox(
                    label=str(raw["label"]),
                    confidence=float(raw["confidence"]),
                    u1=float(raw["u1"]),
                    v1=float(raw["v1"]),
                    u2=float(raw["u2"]),
                    v2=float(raw["v2"]),
                    instance_id=f"{view.value}-{i}",
                )
                for i, raw in enumerate(payload["boxes"])
            ]
            return DetectionSet(
                view=view, resolution=res, boxes=tuple(boxes), captured_at_ms=captured_at_ms
            )
        except (KeyError, TypeError, ValueError, ConfigError) as exc:
            raise ProtocolError(f"malformed detection reply: {exc}") from exc


def project_boxes(
    footprints: Sequence[Tuple[str, str, float, float, float, float]],
    view: View,
    resolution: ImageResolution,
    captured_at_ms: int,
) -> DetectionSet:
    """Assemble a ground-truth DetectionSet from (id, label, u1, v1, u2, v2)
    footprints, clipping each box to the frame (clipped, never dropped)."""
    w, h = resolution.width_px, resolution.height_px
    boxes = tuple(
        BoundingBox(
            label=label,
            confidence=1.0,
            u1=min(max(u1, 0.0), w),
            v1=min(max(v1, 0.0), h),
            u2=min(max(u2, 0.0), w),
            v2=min(max(v2, 0.0), h),
            instance_id=obj_id,
        )
        for obj_id, label, u1, v1, u2, v2 in footprints
    )
    return DetectionSet(view=view, resolution=resolution, boxes=boxes, captured_at_ms=captured_at_ms)
