"""Cross-view semantic mapping.

Takes the label under the user's fixation and resolves it to a concrete
instance among the robot-view detections. Scenes can contain several
instances of one class; the STRICT policy refuses to pick and surfaces the
candidates, HIGHEST_CONFIDENCE picks the argmax instead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Tuple

from gazepick.perception import BoundingBox, DetectionSet


class ResolutionStatus(enum.Enum):
    MATCHED = "matched"
    NO_MATCH = "no_match"
    AMBIGUOUS = "ambiguous"


class MatchPolicy(enum.Enum):
    STRICT = "strict"
    HIGHEST_CONFIDENCE = "confidence"


@dataclass(frozen=True)
class IntentResolution:
    status: ResolutionStatus
    gaze_label: str
    target: Optional[BoundingBox]
    candidates: Tuple[BoundingBox, ...]
    resolved_at_ms: int


def resolve(
    gaze_label: str,
    robot_dets: DetectionSet,
    policy: MatchPolicy = MatchPolicy.STRICT,
    *,
    resolved_at_ms: int = 0,
) -> IntentResolution:
    """Match gaze_label against the robot-view labels.

    robot_dets is expected to be confidence-gated already. Zero candidates is
    NO_MATCH; exactly one is MATCHED; several under STRICT is AMBIGUOUS (no
    grasp), under HIGHEST_CONFIDENCE the max-confidence candidate wins with
    ties broken by instance id.
    """
    if not gaze_label:
        raise ValueError("gaze_label must be non-empty")
    candidates = tuple(b for b in robot_dets.boxes if b.label == gaze_label)
    if not candidates:
        return IntentResolution(
            ResolutionStatus.NO_MATCH, gaze_label, None, (), resolved_at_ms
        )
    if len(candidates) == 1:
        return IntentResolution(
            ResolutionStatus.MATCHED, gaze_label, candidates[0], (), resolved_at_ms
        )
    if policy is MatchPolicy.STRICT:
        return IntentResolution(
            ResolutionStatus.AMBIGUOUS, gaze_label, None, candidates, resolved_at_ms
        )
    winner = min(candidates, key=lambda b: (-b.confidence, b.instance_id))
    return IntentResolution(
        ResolutionStatus.MATCHED, gaze_label, winner, (), resolved_at_ms
    )
