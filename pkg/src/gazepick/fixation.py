"""Streaming dwell detector.

Feeds on an ordered stream of plane hits and emits a FixationEvent when the
gaze stays within a spatial window for the dwell duration. The window test is
centroid dispersion: a hit extends the current cluster iff its distance to
the running cluster centroid is within radius_m, otherwise the cluster resets
to that hit. A miss always resets. Two trigger modes: AUTO_ON_DWELL fires the
event the moment the cluster age reaches dwell_ms; DWELL_PLUS_CONFIRM arms it
instead and confirm() fires it while the cluster is still alive.

After an event a refractory period suppresses a new cluster on the same spot
until refractory_ms elapses or the gaze leaves the old cluster radius.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

from gazepick import kernels
from gazepick.errors import ConfigError, ModeError, ProtocolError
from gazepick.geometry import PlaneHit, Vec3


class TriggerMode(enum.Enum):
    AUTO_ON_DWELL = "auto"
    DWELL_PLUS_CONFIRM = "confirm"


@dataclass(frozen=True)
class FixationConfig:
    dwell_ms: int = 2000
    radius_m: float = 0.05
    trigger_mode: TriggerMode = TriggerMode.AUTO_ON_DWELL
    refractory_ms: int = 500

    def __post_init__(self):
        if self.dwell_ms <= 0:
            raise ConfigError("dwell_ms must be positive")
        if self.radius_m <= 0:
            raise ConfigError("radius_m must be positive")
        if self.refractory_ms < 0:
            raise ConfigError("refractory_ms must be >= 0")


@dataclass(frozen=True)
class FixationEvent:
    centroid: Vec3
    pixel_u: float
    pixel_v: float
    start_ms: int
    fired_ms: int
    sample_count: int
    max_dispersion_m: float


class FixationProgress(NamedTuple):
    elapsed_ms: int
    fraction: float


_IDLE = FixationProgress(0, 0.0)


class FixationDetector:
    """Single-owner detector state; one session feeds it sequentially."""

    def __init__(self, config: FixationConfig | None = None):
        self.config = config or FixationConfig()
        self._last_t: Optional[int] = None
        self._clear_cluster()
        # Refractory bookkeeping for the most recent event.
        self._refractory_until: Optional[int] = None
        self._fired_centroid: Optional[Vec3] = None

    def _clear_cluster(self):
        self._start_ms: Optional[int] = None
        self._n = 0
        self._sum = (0.0, 0.0, 0.0)
        self._sum_u = 0.0
        self._sum_v = 0.0
        self._max_disp = 0.0
        self._armed = False

    @property
    def armed(self) -> bool:
        """True when dwell is satisfied and an event awaits confirm()."""
        return self._armed

    @property
    def cluster_alive(self) -> bool:
        return self._start_ms is not None

    def reset(self, *, keep_refractory: bool = True):
        """Drop the current cluster (trial boundary); refractory survives by default."""
        self._clear_cluster()
        if not keep_refractory:
            self._refractory_until = None
            self._fired_centroid = None

    def _check_clock(self, t_ms: int, *, strict: bool):
        if self._last_t is not None and (t_ms <= self._last_t if strict else t_ms < self._last_t):
            raise ProtocolError(
                f"non-monotonic timestamp {t_ms} after {self._last_t}; sample dropped"
            )
        self._last_t = t_ms

    def _start(self, hit: PlaneHit, t_ms: int):
        self._start_ms = t_ms
        self._n = 1
        self._sum = (hit.point.x, hit.point.y, hit.point.z)
        self._sum_u = hit.u
        self._sum_v = hit.v
        self._max_disp = 0.0
        self._armed = False

    def _centroid(self) -> Vec3:
        sx, sy, sz = self._sum
        return Vec3(sx / self._n, sy / self._n, sz / self._n)

    def _build_event(self, fired_ms: int) -> FixationEvent:
        return FixationEvent(
            centroid=self._centroid(),
            pixel_u=self._sum_u / self._n,
            pixel_v=self._sum_v / self._n,
            start_ms=self._start_ms,  # type: ignore[arg-type]
            fired_ms=fired_ms,
            sample_count=self._n,
            max_dispersion_m=self._max_disp,
        )

    def _fire(self, fired_ms: int) -> FixationEvent:
        event = self._build_event(fired_ms)
        self._fired_centroid = event.centroid
        self._refractory_until = fired_ms + self.config.refractory_ms
        self._clear_cluster()
        return event

    def _progress(self, t_ms: int) -> FixationProgress:
        if self._start_ms is None:
            return _IDLE
        elapsed = t_ms - self._start_ms
        return FixationProgress(elapsed, min(1.0, elapsed / self.config.dwell_ms))

    def feed(
        self, hit: Optional[PlaneHit], t_ms: int
    ) -> Tuple[FixationProgress, Optional[FixationEvent]]:
        """Advance the detector by one sample. hit=None is a miss (off-plane gaze).

        Raises ProtocolError on a non-monotonic timestamp; detector state is
        unchanged and the sample is dropped.
        """
        self._check_clock(t_ms, strict=True)

        if hit is None:
            self._clear_cluster()
            return _IDLE, None

        if self._start_ms is None:
            # Refractory: swallow hits that stay on the fired spot.
            if self._refractory_until is not None and t_ms < self._refractory_until:
                c = self._fired_centroid
                d = hit.point - c  # type: ignore[operator]
                if d.norm() <= self.config.radius_m:
                    return _IDLE, None
                # Gaze left the old cluster radius: refractory is over.
                self._refractory_until = None
                self._fired_centroid = None
            self._start(hit, t_ms)
            return self._progress(t_ms), None

        sx, sy, sz = self._sum
        inside, dist, nsx, nsy, nsz = kernels.cluster_step(
            sx, sy, sz, self._n,
            hit.point.x, hit.point.y, hit.point.z,
            self.config.radius_m,
        )
        if not inside:
            self._start(hit, t_ms)
            return self._progress(t_ms), None

        self._n += 1
        self._sum = (nsx, nsy, nsz)
        self._sum_u += hit.u
        self._sum_v += hit.v
        if dist > self._max_disp:
            self._max_disp = dist

        progress = self._progress(t_ms)
        if progress.elapsed_ms >= self.config.dwell_ms:
            if self.config.trigger_mode is TriggerMode.AUTO_ON_DWELL:
                return progress, self._fire(t_ms)
            self._armed = True
        return progress, None

    def confirm(self, t_ms: int) -> Optional[FixationEvent]:
        """Fire the armed event if the cluster is still alive; None otherwise.

        Only valid in DWELL_PLUS_CONFIRM mode.
        """
        if self.config.trigger_mode is not TriggerMode.DWELL_PLUS_CONFIRM:
            raise ModeError("confirm() requires DWELL_PLUS_CONFIRM mode")
        self._check_clock(t_ms, strict=False)
        if not self._armed or self._start_ms is None:
            return None
        return self._fire(t_ms)
