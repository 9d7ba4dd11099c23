"""Engine configuration shared by the CLI, gateway, and replay harness."""

from __future__ import annotations

from dataclasses import dataclass, field

from gazepick.errors import ConfigError
from gazepick.fixation import FixationConfig, TriggerMode
from gazepick.intent import MatchPolicy


@dataclass(frozen=True)
class EngineConfig:
    fixation: FixationConfig = field(default_factory=FixationConfig)
    policy: MatchPolicy = MatchPolicy.STRICT
    min_conf: float = 0.5
    retries: int = 2
    seed: int = 0
    # Synthetic detector noise model.
    sigma_px: float = 0.0
    conf_lo: float = 0.88
    conf_hi: float = 0.99
    p_miss: float = 0.0
    # External detection service; None selects the synthetic detector.
    detector_url: str | None = None
    detector_timeout_s: float = 5.0
    # Gateway limits.
    rate_cap_per_s: int = 200
    log_samples: bool = False

    def __post_init__(self):
        if not 0.0 <= self.min_conf <= 1.0:
            raise ConfigError("min_conf must be within [0, 1]")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.rate_cap_per_s < 1:
            raise ConfigError("rate_cap_per_s must be >= 1")


def config_from_options(
    *,
    mode: str = "auto",
    policy: str = "strict",
    seed: int = 0,
    min_conf: float = 0.5,
    sigma_px: float = 0.0,
    dwell_ms: int = 2000,
    radius_m: float = 0.05,
    detector_url: str | None = None,
) -> EngineConfig:
    """Build a config from CLI-flavored string options."""
    try:
        trigger = TriggerMode(mode)
    except ValueError:
        raise ConfigError(f"mode must be 'auto' or 'confirm', not {mode!r}")
    try:
        match_policy = MatchPolicy(policy)
    except ValueError:
        raise ConfigError(f"policy must be 'strict' or 'confidence', not {policy!r}")
    return EngineConfig(
        fixation=FixationConfig(dwell_ms=dwell_ms, radius_m=radius_m, trigger_mode=trigger),
        policy=match_policy,
        seed=seed,
        min_conf=min_conf,
        sigma_px=sigma_px,
        detector_url=detector_url,
    )
