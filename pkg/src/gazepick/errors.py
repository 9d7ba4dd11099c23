"""Exception types shared across the engine."""


class GazepickError(Exception):
    """Base class for engine errors."""


class ConfigError(GazepickError):
    """Invalid configuration: degenerate plane basis, bad scene file, bad thresholds."""


class SceneError(ConfigError):
    """Scene config rejected; message names the offending object and field."""


class ProtocolError(GazepickError):
    """Input stream violated the protocol (non-monotonic timestamps, malformed wire data)."""


class ModeError(GazepickError):
    """Operation not valid for the configured trigger mode."""


class DetectionError(GazepickError):
    """Detection provider failed. Carries retry metadata for the orchestrator."""

    def __init__(self, message: str, *, retryable: bool = True, attempt: int = 0):
        super().__init__(message)
        self.retryable = retryable
        self.attempt = attempt


class RobotBusyError(GazepickError):
    """Grasp commanded while the arm is not Idle."""


class ReplayError(GazepickError):
    """Trace file could not be replayed; message names the line number."""
