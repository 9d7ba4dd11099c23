"""Brute-force reference implementations the fast paths are checked against.

These deliberately share no code or state with the package: the fixation
oracle recomputes every cluster quantity from the raw sample list at every
step, and the hit-test/resolve oracles are filter-and-sort scans.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple


def _dist(a, b) -> float:
    dx = a[0] - b[0]
    dy = a[1] - b[1]
    dz = a[2] - b[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


@dataclass
class OracleEvent:
    start_ms: int
    fired_ms: int
    centroid: Tuple[float, float, float]
    sample_count: int


def fixation_events(
    samples,
    dwell_ms: int,
    radius_m: float,
    refractory_ms: int = 500,
) -> List[OracleEvent]:
    """Scan a trace for dwell events.

    samples: iterable of (t_ms, point) where point is (x, y, z) or None for a
    miss. Maintains the window of samples since the cluster started and
    recomputes its centroid from scratch each step; a sample farther than
    radius_m from that centroid restarts the window at the sample, a miss
    clears it, and an event fires the first time the window span reaches
    dwell_ms. After an event no window starts until refractory_ms passes or a
    sample lands outside the fired centroid's radius.
    """
    events: List[OracleEvent] = []
    window: List[Tuple[int, Tuple[float, float, float]]] = []
    refractory_until = None
    fired_centroid = None

    def centroid_of(win):
        n = len(win)
        return (
            sum(p[0] for _, p in win) / n,
            sum(p[1] for _, p in win) / n,
            sum(p[2] for _, p in win) / n,
        )

    for t, point in samples:
        if point is None:
            window = []
            continue
        if not window:
            if refractory_until is not None and t < refractory_until:
                if _dist(point, fired_centroid) <= radius_m:
                    continue
                refractory_until = None
                fired_centroid = None
            window = [(t, point)]
            continue
        if _dist(point, centroid_of(window)) > radius_m:
            window = [(t, point)]
            continue
        window.append((t, point))
        if t - window[0][0] >= dwell_ms:
            final = centroid_of(window)
            events.append(
                OracleEvent(
                    start_ms=window[0][0],
                    fired_ms=t,
                    centroid=final,
                    sample_count=len(window),
                )
            )
            fired_centroid = final
            refractory_until = t + refractory_ms
            window = []
    return events


def hit_test(p, boxes) -> Optional[object]:
    """Containment scan; smallest area wins, then confidence, then id."""
    u, v = p
    containing = [b for b in boxes if b.u1 <= u <= b.u2 and b.v1 <= v <= b.v2]
    if not containing:
        return None
    ranked = sorted(
        containing,
        key=lambda b: ((b.u2 - b.u1) * (b.v2 - b.v1), -b.confidence, b.instance_id),
    )
    return ranked[0]


def resolve_candidates(gaze_label, boxes):
    return [b for b in boxes if b.label == gaze_label]


def resolve_highest_confidence(gaze_label, boxes):
    cands = resolve_candidates(gaze_label, boxes)
    if not cands:
        return None
    return sorted(cands, key=lambda b: (-b.confidence, b.instance_id))[0]
