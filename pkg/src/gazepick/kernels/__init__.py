"""Kernel backend selection.

Imports the compiled extension when available, otherwise the pure-Python
twin. Set GAZEPICK_KERNEL=pure (or =native) to force a backend; forcing
native without the built extension raises so a benchmark or test never
silently measures the wrong one.
"""

import os

_forced = os.environ.get("GAZEPICK_KERNEL", "").strip().lower()

if _forced == "pure":
    from gazepick.kernels import pure as _impl
elif _forced == "native":
    from gazepick.kernels import _native as _impl  # type: ignore[no-redef]
elif _forced:
    raise ImportError(f"GAZEPICK_KERNEL must be 'pure' or 'native', not {_forced!r}")
else:
    try:
        from gazepick.kernels import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        from gazepick.kernels import pure as _impl

BACKEND = _impl.BACKEND_NAME
ray_plane_hit = _impl.ray_plane_hit
plane_point = _impl.plane_point
cluster_step = _impl.cluster_step

__all__ = ["BACKEND", "ray_plane_hit", "plane_point", "cluster_step"]
